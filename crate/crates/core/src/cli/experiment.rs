//! Runs the samples of a scenario: simulate, probe, and optionally emit the
//! capture each sample would have produced.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{PrefixSelection, Scenario};
use crate::analyzer::{CaptureInfo, Convergence, SampleCheckResult, SeriesRow};
use crate::model::{Node, PrefixId};
use crate::probe::{exact_violation_intervals, probe_series, DataPlane, Interval, ProbeConfig, ProbeError, ProbeFate, Terminal};
use crate::sim::{build_initial_state, run_event, InitialState, SimError, SimOutcome};
use crate::trace::{emit_sample_records, write_trace, EmitOptions, HardwareMapping, Trace, TraceError, TraceHeader};
use crate::{Micros, MS};

/// Fastest change of the violation signal the probing rate has to resolve.
pub const MIN_SIGNAL_CHANGE: Micros = MS;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Which samples get a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum TraceSelection {
    All,
    #[default]
    First,
    None,
}

impl TraceSelection {
    fn wants(self, index: usize) -> bool {
        match self {
            TraceSelection::All => true,
            TraceSelection::First => index == 0,
            TraceSelection::None => false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub traces: TraceSelection,
    /// Selected traces are written here as `sample-NNN.trace`.
    pub trace_dir: Option<PathBuf>,
    /// Keep selected traces in [`SampleRun::trace`].
    pub keep_traces: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropKind {
    BlackHole,
    Rpf,
    Ttl,
    InactivePeer,
}

/// Number of probes dropped for one reason at one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCause {
    pub kind: DropKind,
    pub at: String,
    pub probes: u64,
}

/// One probed (source, prefix) of a sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesOutcome {
    pub row: SeriesRow,
    pub exact: Vec<Interval>,
}

#[derive(Debug, Clone)]
pub struct SampleRun {
    pub index: usize,
    pub seed: u64,
    pub prefixes: Vec<PrefixId>,
    /// Absolute probing window.
    pub window: (Micros, Micros),
    /// Last forwarding change or message arrival.
    pub converged_at: Micros,
    pub check: SampleCheckResult,
    /// Quiet-period convergence of the BGP messages, as a capture would show it.
    pub convergence: Convergence,
    pub messages: usize,
    /// Sorted by (source, prefix).
    pub series: Vec<SeriesOutcome>,
    pub drop_causes: Vec<DropCause>,
    pub trace: Option<Trace>,
}

pub struct Experiment {
    pub mapping: HardwareMapping,
    pub samples: Vec<SampleRun>,
}

/// Per-sample seeds drawn from the scenario seed.
pub fn sample_seeds(seed: u64, samples: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| rng.next_u64()).collect()
}

/// The probed prefixes of one sample, sorted.
pub fn select_prefixes(scn: &Scenario, sample_seed: u64) -> Vec<PrefixId> {
    let p = &scn.file.probe;
    let n = scn.file.prefixes as usize;
    let mut chosen: Vec<u32> = match p.select {
        PrefixSelection::List => p.list.clone(),
        PrefixSelection::First => (0..p.count as u32).collect(),
        PrefixSelection::Stratified => (0..p.count).map(|i| ((2 * i + 1) * n / (2 * p.count)) as u32).collect(),
        PrefixSelection::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            rng.set_stream(1);
            rand::seq::index::sample(&mut rng, n, p.count)
                .into_iter()
                .map(|i| i as u32)
                .collect()
        }
    };
    chosen.sort_unstable();
    chosen.dedup();
    chosen.into_iter().map(PrefixId).collect()
}

pub fn run_experiment(scn: &Scenario, opts: &RunOptions) -> Result<Experiment, ExperimentError> {
    if scn.probe.spacing() > MIN_SIGNAL_CHANGE {
        log::warn!(
            "probing every {} us cannot resolve changes faster than that; violations may be under-sampled",
            scn.probe.spacing()
        );
    }
    let initial = build_initial_state(&scn.net, &scn.routes)?;
    let mapping = HardwareMapping::from_network(&scn.net);
    let seeds = sample_seeds(scn.file.seed, scn.file.samples);
    let samples = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| {
            let want = opts.traces.wants(index) && (opts.keep_traces || opts.trace_dir.is_some());
            let mut run = run_sample(scn, &initial, &mapping, index, seed, want)?;
            if let (Some(trace), Some(dir)) = (&run.trace, &opts.trace_dir) {
                write_trace(&dir.join(format!("sample-{index:03}.trace")), trace)?;
            }
            if !opts.keep_traces {
                run.trace = None;
            }
            log::info!("sample {index} done, converged at {} us", run.converged_at);
            Ok(run)
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(Experiment { mapping, samples })
}

fn terminal_time(fate: &ProbeFate) -> Micros {
    match fate.terminal {
        Terminal::Delivered { at, .. }
        | Terminal::DroppedBlackHole { at, .. }
        | Terminal::DroppedRpf { at, .. }
        | Terminal::DroppedTtl { at, .. }
        | Terminal::DroppedInactivePeer { at, .. } => at,
    }
}

/// Simulates and probes one sample.
pub fn run_sample(
    scn: &Scenario,
    initial: &InitialState,
    mapping: &HardwareMapping,
    index: usize,
    seed: u64,
    want_trace: bool,
) -> Result<SampleRun, ExperimentError> {
    let net = &scn.net;
    let topo = &net.topology;
    let t0 = scn.event.time;
    let outcome = run_event(net, initial, &scn.event, &scn.processing, seed)?;
    let prefixes = select_prefixes(scn, seed);
    let probe = &scn.file.probe;
    let window = match probe.window_us {
        Some(w) => (w[0], w[1]),
        None => (
            scn.probe.window.0,
            outcome.converged_at - t0 + probe.margin_us + probe.edge_span_us,
        ),
    };
    let cfg = ProbeConfig {
        prefixes: prefixes.clone(),
        window,
        ..scn.probe.clone()
    };
    cfg.validate()?;

    let dp = DataPlane {
        net,
        timelines: &outcome.timelines,
        activity: &outcome.activity,
    };
    let mut check = SampleCheckResult {
        edges_ok: true,
        delayer_ok: true,
        drop_counters: 0,
        notes: Vec::new(),
    };
    let mut causes: BTreeMap<(DropKind, Node), u64> = BTreeMap::new();
    let mut fates: Vec<ProbeFate> = Vec::new();
    let mut series = Vec::with_capacity(cfg.sources.len() * prefixes.len());
    for &src in &cfg.sources {
        for &prefix in &prefixes {
            let res = probe_series(dp, src, prefix, t0, &cfg, |fate| {
                let cause = match fate.terminal {
                    Terminal::Delivered { .. } => None,
                    Terminal::DroppedBlackHole { router, .. } => Some((DropKind::BlackHole, Node::Router(router))),
                    Terminal::DroppedRpf { router, .. } => Some((DropKind::Rpf, Node::Router(router))),
                    Terminal::DroppedTtl { router, .. } => Some((DropKind::Ttl, Node::Router(router))),
                    Terminal::DroppedInactivePeer { peer, .. } => Some((DropKind::InactivePeer, Node::Peer(peer))),
                };
                if let Some(c) = cause {
                    *causes.entry(c).or_default() += 1;
                }
                if want_trace {
                    fates.push(fate);
                }
            })?;
            if !res.edges_ok {
                check.edges_ok = false;
                check.note(format!(
                    "edge probes from {} to prefix {} were not delivered",
                    topo.router_name(src),
                    prefix.0
                ));
            }
            series.push(SeriesOutcome {
                row: SeriesRow {
                    src,
                    prefix,
                    sent: res.sent,
                    dropped: res.dropped,
                    violating: res.dropped_violating,
                    estimate_us: res.probe_estimate,
                    alt_estimate_us: res.alt_estimate,
                },
                exact: exact_violation_intervals(dp, src, prefix, &cfg),
            });
        }
    }
    series.sort_by_key(|s| (s.row.src, s.row.prefix));

    let trace = want_trace.then(|| sample_trace(scn, mapping, &outcome, &fates, &cfg, index, seed));
    Ok(SampleRun {
        index,
        seed,
        prefixes,
        window: (t0 + window.0, t0 + window.1),
        converged_at: outcome.converged_at,
        check,
        convergence: Convergence::At(outcome.last_message_at),
        messages: outcome.messages.len(),
        series,
        drop_causes: causes
            .into_iter()
            .map(|((kind, node), probes)| DropCause {
                kind,
                at: topo.node_name(node).to_string(),
                probes,
            })
            .collect(),
        trace,
    })
}

/// Header identifying the scenario and sample a trace belongs to.
pub fn trace_header(scn: &Scenario, info: &CaptureInfo, index: usize, seed: u64) -> TraceHeader {
    info.to_header(
        TraceHeader::new()
            .with("scenario", &scn.file.name)
            .with("scenario_hash", scn.file.hash())
            .with("scenario_seed", scn.file.seed)
            .with("sample", index)
            .with("seed", seed),
    )
}

fn sample_trace(
    scn: &Scenario,
    mapping: &HardwareMapping,
    outcome: &SimOutcome,
    fates: &[ProbeFate],
    cfg: &ProbeConfig,
    index: usize,
    seed: u64,
) -> Trace {
    let t0 = scn.event.time;
    let info = CaptureInfo {
        rate_pps: cfg.rate_pps,
        t0,
        window_start: t0 + cfg.window.0,
        window_end: t0 + cfg.window.1,
        edge_span: cfg.edge_span,
        attribution: cfg.attribution,
    };
    let probes_end = fates.iter().map(terminal_time).max().unwrap_or(info.window_end);
    let opts = EmitOptions {
        capture_start: info.window_start,
        capture_end: probes_end.max(outcome.last_message_at + scn.capture.quiet_window),
        keepalive_interval: scn.capture.keepalive_interval,
        drops: 0,
    };
    Trace {
        header: trace_header(scn, &info, index, seed),
        records: emit_sample_records(&scn.net, mapping, &outcome.messages, fates, &opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::presets::preset;
    use crate::probe::total_length;

    #[test]
    fn path3_sample_matches_closed_form() {
        let scn = preset("path3").unwrap().resolve().unwrap();
        let exp = run_experiment(&scn, &RunOptions::default()).unwrap();
        let s = &exp.samples[0];
        assert!(s.check.accepted());
        let x = crate::cli::presets::PATH3_PROCESSING;
        let r2 = &s.series[1];
        assert_eq!(total_length(&r2.exact), 3 * x + 60 * MS);
        assert!((r2.row.estimate_us - total_length(&r2.exact)).abs() <= 2 * MS);
        assert_eq!(s.convergence, Convergence::At(50 * MS + 2 * x));
    }

    #[test]
    fn reflectors_in_a_cycle_converge() {
        let mut f = preset("abilene-withdraw-rr-at-ny-se-n10").unwrap();
        f.samples = 1;
        let scn = f.resolve().unwrap();
        let exp = run_experiment(&scn, &RunOptions::default()).unwrap();
        assert!(exp.samples[0].check.accepted());
    }

    #[test]
    fn stratified_prefixes_spread_over_the_event_order() {
        let mut f = preset("abilene-withdraw-n100").unwrap();
        f.probe.select = PrefixSelection::Stratified;
        f.probe.count = 10;
        let scn = f.resolve().unwrap();
        let got: Vec<u32> = select_prefixes(&scn, 0).iter().map(|p| p.0).collect();
        assert_eq!(got, [5, 15, 25, 35, 45, 55, 65, 75, 85, 95]);
    }

    #[test]
    fn random_prefixes_are_seeded() {
        let scn = preset("abilene-withdraw").unwrap().resolve().unwrap();
        let a = select_prefixes(&scn, 7);
        assert_eq!(a, select_prefixes(&scn, 7));
        assert_ne!(a, select_prefixes(&scn, 8));
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|p| p.0 < 10_000));
    }
}
