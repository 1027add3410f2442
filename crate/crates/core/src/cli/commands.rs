//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 invalid input (unreadable or inconsistent files,
//! bad scenario), 2 invalid sample (trace findings, failed checks,
//! inconclusive convergence), 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::experiment::{run_experiment, ExperimentError, RunOptions, TraceSelection};
use super::presets::{preset, preset_names};
use super::propagation::{propagation_table, write_csv as write_propagation_csv};
use super::report::{write_stats_csv, ExperimentReport, ReportError, ReportMeta};
use super::scenario::{ScenarioError, ScenarioFile};
use crate::analyzer::{analyze_trace, attribution_name, AnalyzeConfig, AnalyzeError, CaptureInfo, StableExpectation};
use crate::sim::SimError;
use crate::trace::{read_trace, validate_trace, HardwareMapping, Trace, TraceError};
use crate::{Micros, SEC};

#[derive(Debug, Parser)]
#[command(name = "ibgp-transient", version, about = "Simulate iBGP convergence and measure transient reachability violations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write traces and a report.
    Simulate(SimulateArgs),
    /// Analyze captured traces and write a report.
    Analyze(AnalyzeArgs),
    /// Print the total propagation delay of every router.
    Propagation(PropagationArgs),
    /// Percentile summaries of one or more reports as CSV.
    Stats(StatsArgs),
    /// Check traces for structural problems.
    Validate(ValidateArgs),
    /// List the built-in scenarios or write them out as files.
    Presets(PresetsArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file, or `preset:<name>`.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Probing rate in packets per second.
    #[arg(long)]
    pub rate: Option<u64>,
    /// Quiet period declaring convergence, in seconds.
    #[arg(long)]
    pub quiet_window: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Which samples get a trace file.
    #[arg(long, value_enum, default_value_t = TraceSelection::First)]
    pub traces: TraceSelection,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trace files, one per sample.
    #[arg(long = "trace", required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub mapping: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Quiet period declaring convergence, in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub quiet_window: f64,
    /// Allowed deviation of a captured link delay, in microseconds.
    #[arg(long, default_value_t = crate::analyzer::DEFAULT_DELAY_TOLERANCE)]
    pub delay_tolerance: Micros,
    /// Only count drops of series whose edge probes were all delivered.
    #[arg(long)]
    pub infer_stable: bool,
}

#[derive(Debug, Args)]
pub struct PropagationArgs {
    /// Scenario file, or `preset:<name>`.
    #[arg(long)]
    pub scenario: String,
    /// CSV output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// `report.json` files.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// CSV output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "trace", required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub mapping: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresetsArgs {
    /// Print one preset as a scenario file.
    #[arg(long)]
    pub show: Option<String>,
    /// Write every listed preset into this directory.
    #[arg(long)]
    pub write: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    InvalidInput = 1,
    InvalidSample = 2,
    Internal = 3,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: Failure,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Failure, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind as u8)
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::new(Failure::InvalidInput, e.to_string())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        let kind = match e {
            TraceError::Io(_) | TraceError::Version(_) | TraceError::Mapping(_) | TraceError::Header { .. } => Failure::InvalidInput,
            TraceError::Malformed { .. } | TraceError::Incomplete | TraceError::AfterSummary { .. } | TraceError::Unordered { .. } => {
                Failure::InvalidSample
            }
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<AnalyzeError> for CliError {
    fn from(e: AnalyzeError) -> Self {
        match e {
            AnalyzeError::Trace(t) => t.into(),
            AnalyzeError::Mapping(_) => CliError::new(Failure::InvalidInput, e.to_string()),
            AnalyzeError::Empty => CliError::new(Failure::Internal, e.to_string()),
            _ => CliError::new(Failure::InvalidSample, e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Trace(TraceError::Io(io)) => CliError::new(Failure::InvalidInput, format!("writing trace: {io}")),
            ExperimentError::Sim(SimError::Runaway { .. }) => CliError::new(Failure::Internal, e.to_string()),
            ExperimentError::Trace(_) => CliError::new(Failure::Internal, e.to_string()),
            _ => CliError::new(Failure::InvalidInput, e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        let kind = match e {
            ReportError::Format { .. } | ReportError::NoReports | ReportError::Json(_) => Failure::InvalidInput,
            _ => Failure::Internal,
        };
        CliError::new(kind, e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(Failure::InvalidInput, format!("{}: {e}", path.display()))
}

fn seconds(s: f64) -> Result<Micros, CliError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(CliError::new(Failure::InvalidInput, format!("quiet window must be positive, got {s}")));
    }
    Ok((s * SEC as f64).round() as Micros)
}

/// Loads the scenario and applies command-line overrides.
pub fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioFile, CliError> {
    let mut f = ScenarioFile::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        f.seed = seed;
    }
    if let Some(n) = args.samples {
        f.samples = n;
    }
    if let Some(rate) = args.rate {
        f.probe.rate_pps = rate;
    }
    if let Some(q) = args.quiet_window {
        f.capture.quiet_window_us = seconds(q)?;
    }
    Ok(f)
}

pub fn simulate(args: &SimulateArgs) -> Result<ExperimentReport, CliError> {
    let file = load_scenario(&args.scenario)?;
    let scn = file.resolve()?;
    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    std::fs::write(out.join("scenario.toml"), file.to_toml()).map_err(|e| io_error(out, e))?;
    let mapping = HardwareMapping::from_network(&scn.net);
    mapping.save(&out.join("mapping.toml"))?;
    let trace_dir = out.join("traces");
    if args.traces != TraceSelection::None {
        std::fs::create_dir_all(&trace_dir).map_err(|e| io_error(&trace_dir, e))?;
    }
    let opts = RunOptions {
        traces: args.traces,
        trace_dir: (args.traces != TraceSelection::None).then_some(trace_dir),
        keep_traces: false,
    };
    let exp = run_experiment(&scn, &opts)?;
    let report = ExperimentReport::from_experiment(&scn, &exp, propagation_table(&scn).ok());
    report.write_dir(out)?;
    Ok(report)
}

/// Reads, validates and analyzes the given traces into one report.
pub fn analyze_traces(traces: &[(PathBuf, Trace)], mapping: &HardwareMapping, cfg: &AnalyzeConfig) -> Result<ExperimentReport, CliError> {
    let mut meta: Option<ReportMeta> = None;
    let mut samples = Vec::new();
    for (pos, (path, trace)) in traces.iter().enumerate() {
        let findings = validate_trace(&trace.records, mapping);
        if !findings.is_empty() {
            for f in findings.iter().take(20) {
                eprintln!("{}: {:?} {:?}: {}", path.display(), f.index, f.kind, f.detail);
            }
            return Err(CliError::new(
                Failure::InvalidSample,
                format!("{}: {} findings", path.display(), findings.len()),
            ));
        }
        let info = CaptureInfo::from_header(&trace.header)?;
        let h = &trace.header;
        let this = ReportMeta {
            scenario: h.get("scenario").unwrap_or("unnamed").to_string(),
            scenario_hash: h.get("scenario_hash").unwrap_or_default().to_string(),
            seed: h.parse_value("scenario_seed").unwrap_or(0),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            rate_pps: info.rate_pps,
            attribution: info.attribution,
            routers: mapping.router_names(),
        };
        match &meta {
            None => meta = Some(this),
            Some(m) if *m == this => {}
            Some(_) => {
                return Err(CliError::new(
                    Failure::InvalidInput,
                    format!("{} belongs to a different experiment", path.display()),
                ))
            }
        }
        let index = h.parse_value::<usize>("sample").unwrap_or(pos);
        let seed = h.parse_value::<u64>("seed").unwrap_or(0);
        let analysis = analyze_trace(trace, mapping, cfg)?;
        log::info!(
            "{}: {} series, attribution {}",
            path.display(),
            analysis.rows.len(),
            attribution_name(info.attribution)
        );
        samples.push((index, seed, analysis));
    }
    let meta = meta.ok_or_else(|| CliError::new(Failure::InvalidInput, "no traces given"))?;
    samples.sort_by_key(|s| s.0);
    Ok(ExperimentReport::from_analyses(meta, samples))
}

pub fn analyze(args: &AnalyzeArgs) -> Result<ExperimentReport, CliError> {
    let mapping = HardwareMapping::load(&args.mapping)?;
    mapping.validate()?;
    let cfg = AnalyzeConfig {
        quiet_window: seconds(args.quiet_window)?,
        delay_tolerance: args.delay_tolerance,
        expectation: if args.infer_stable {
            StableExpectation::InferFromEdges
        } else {
            StableExpectation::AllReachable
        },
    };
    let traces = args
        .traces
        .iter()
        .map(|p| read_trace(p).map(|t| (p.clone(), t)).map_err(|e| prefix_path(p, e.into())))
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = analyze_traces(&traces, &mapping, &cfg)?;
    report.write_dir(&args.out)?;
    Ok(report)
}

fn prefix_path(p: &Path, e: CliError) -> CliError {
    CliError::new(e.kind, format!("{}: {}", p.display(), e.message))
}

fn output(path: Option<&Path>) -> Result<Box<dyn std::io::Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| io_error(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn propagation(args: &PropagationArgs) -> Result<(), CliError> {
    let scn = ScenarioFile::load(&args.scenario)?.resolve()?;
    let rows = propagation_table(&scn).map_err(|e| CliError::new(Failure::InvalidInput, e.to_string()))?;
    write_propagation_csv(output(args.out.as_deref())?, &rows)?;
    Ok(())
}

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    let reports = args
        .reports
        .iter()
        .map(|p| ExperimentReport::load(p).map_err(|e| prefix_path(p, e.into())))
        .collect::<Result<Vec<_>, _>>()?;
    if reports.is_empty() {
        return Err(ReportError::NoReports.into());
    }
    write_stats_csv(output(args.out.as_deref())?, &reports)?;
    Ok(())
}

/// Prints findings per trace; fails when any trace has one.
pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let mapping = HardwareMapping::load(&args.mapping)?;
    mapping.validate()?;
    let mut total = 0;
    for p in &args.traces {
        let trace = read_trace(p).map_err(|e| prefix_path(p, e.into()))?;
        let findings = validate_trace(&trace.records, &mapping);
        for f in &findings {
            let json = serde_json::to_string(f).expect("finding serializes");
            println!("{}\t{json}", p.display());
        }
        total += findings.len();
    }
    if total > 0 {
        return Err(CliError::new(Failure::InvalidSample, format!("{total} findings")));
    }
    Ok(())
}

pub fn presets(args: &PresetsArgs) -> Result<(), CliError> {
    if let Some(name) = &args.show {
        let f = preset(name).ok_or_else(|| ScenarioError::UnknownPreset(name.clone()))?;
        print!("{}", f.to_toml());
        return Ok(());
    }
    if let Some(dir) = &args.write {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for name in preset_names() {
            let path = dir.join(format!("{name}.toml"));
            let f = preset(&name).expect("listed presets exist");
            std::fs::write(&path, f.to_toml()).map_err(|e| io_error(&path, e))?;
        }
        return Ok(());
    }
    for name in preset_names() {
        println!("{name}");
    }
    Ok(())
}

fn print_report_summary(report: &ExperimentReport) {
    let valid = report.samples.iter().filter(|s| s.valid).count();
    println!("{}: {valid}/{} samples valid", report.meta.scenario, report.samples.len());
    if let Some(p) = report.pooled {
        println!(
            "violation time (ms): q5 {} q25 {} median {} q75 {} q95 {} (n = {})",
            crate::fmt_ms(p.q5),
            crate::fmt_ms(p.q25),
            crate::fmt_ms(p.q50),
            crate::fmt_ms(p.q75),
            crate::fmt_ms(p.q95),
            p.n
        );
    }
    for e in &report.excluded {
        println!("excluded sample {}: {}", e.sample, e.reasons.join(", "));
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => {
            let report = simulate(a)?;
            print_report_summary(&report);
            check_all_valid(&report)
        }
        Command::Analyze(a) => {
            let report = analyze(a)?;
            print_report_summary(&report);
            check_all_valid(&report)
        }
        Command::Propagation(a) => propagation(a),
        Command::Stats(a) => stats(a),
        Command::Validate(a) => validate(a),
        Command::Presets(a) => presets(a),
    }
}

fn check_all_valid(report: &ExperimentReport) -> Result<(), CliError> {
    if report.all_valid() {
        Ok(())
    } else {
        Err(CliError::new(
            Failure::InvalidSample,
            format!("{} of {} samples invalid", report.excluded.len(), report.samples.len()),
        ))
    }
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = std::panic::catch_unwind(|| run(&cli));
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(Failure::Internal as u8)
        }
    }
}
