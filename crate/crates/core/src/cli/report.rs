//! Experiment reports: `report.json` plus plot-ready CSV tables.
//!
//! CSV files and their columns:
//!
//! - `samples.csv`: `sample,seed,valid,edges_ok,delayer_ok,drop_counters,converged_at_ms,notes`
//! - `violations.csv`: `sample,router,prefix,sent,dropped,violating,estimate_ms,alt_estimate_ms,exact_ms`
//! - `exact.csv`: `sample,router,prefix,start_ms,end_ms` (simulated runs only)
//! - `summary.csv`: see [`STATS_HEADER`]
//!
//! Times in CSV files are milliseconds with three decimals; `report.json`
//! keeps integer microseconds.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{DropCause, Experiment};
use super::propagation::PropagationRow;
use super::scenario::Scenario;
use crate::analyzer::{summarize, Convergence, PercentileSummary, SampleAnalysis, SampleCheckResult, SeriesRow};
use crate::probe::{total_length, Interval};
use crate::sim::Attribution;
use crate::{fmt_ms, Micros};

pub const REPORT_FORMAT: &str = "ibgp-report/1";

pub const STATS_HEADER: [&str; 9] = ["scenario", "router", "n", "q5_ms", "q25_ms", "q50_ms", "q75_ms", "q95_ms", "samples"];

/// Label of the row pooling all routers.
pub const POOLED: &str = "*";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: report format {found:?}, expected {REPORT_FORMAT:?}")]
    Format { path: String, found: String },
    #[error("no reports given")]
    NoReports,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub rate_pps: u64,
    pub attribution: Attribution,
    /// Router names by id.
    pub routers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub index: usize,
    pub seed: u64,
    pub valid: bool,
    pub check: SampleCheckResult,
    pub convergence: Convergence,
    pub prefixes: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_causes: Option<Vec<DropCause>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sample: usize,
    pub router: String,
    #[serde(flatten)]
    pub series: SeriesRow,
    /// Exact violation intervals, known only for simulated samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<Vec<Interval>>,
}

impl ReportRow {
    pub fn exact_total(&self) -> Option<Micros> {
        self.exact.as_deref().map(total_length)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterSummary {
    pub router: String,
    pub summary: PercentileSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excluded {
    pub sample: usize,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub meta: ReportMeta,
    pub samples: Vec<SampleReport>,
    /// Every probed (sample, source, prefix), including invalid samples.
    pub rows: Vec<ReportRow>,
    /// Violation estimates of valid samples, per source router.
    pub per_router: Vec<RouterSummary>,
    pub pooled: Option<PercentileSummary>,
    pub excluded: Vec<Excluded>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<Vec<PropagationRow>>,
}

fn exclusion_reasons(check: &SampleCheckResult, convergence: &Convergence) -> Vec<String> {
    let mut reasons = Vec::new();
    if !check.edges_ok {
        reasons.push("edge probes lost".to_string());
    }
    if !check.delayer_ok {
        reasons.push("link delays not as configured".to_string());
    }
    if check.drop_counters > 0 {
        reasons.push(format!("capture dropped {} packets", check.drop_counters));
    }
    if let Convergence::Inconclusive { last_update } = convergence {
        reasons.push(format!("convergence inconclusive after update at {last_update} us"));
    }
    reasons
}

impl ExperimentReport {
    fn assemble(meta: ReportMeta, samples: Vec<SampleReport>, rows: Vec<ReportRow>, propagation: Option<Vec<PropagationRow>>) -> Self {
        let valid: BTreeMap<usize, bool> = samples.iter().map(|s| (s.index, s.valid)).collect();
        let mut by_router: BTreeMap<u32, Vec<Micros>> = BTreeMap::new();
        let mut pooled = Vec::new();
        for r in rows.iter().filter(|r| valid.get(&r.sample) == Some(&true)) {
            by_router.entry(r.series.src.0).or_default().push(r.series.estimate_us);
            pooled.push(r.series.estimate_us);
        }
        let per_router = by_router
            .into_iter()
            .map(|(id, v)| RouterSummary {
                router: meta.routers.get(id as usize).cloned().unwrap_or_else(|| id.to_string()),
                summary: summarize(&v).expect("non-empty"),
            })
            .collect();
        let excluded = samples
            .iter()
            .filter(|s| !s.valid)
            .map(|s| Excluded {
                sample: s.index,
                reasons: exclusion_reasons(&s.check, &s.convergence),
            })
            .collect();
        Self {
            format: REPORT_FORMAT.into(),
            meta,
            samples,
            rows,
            per_router,
            pooled: summarize(&pooled).ok(),
            excluded,
            propagation,
        }
    }

    pub fn from_experiment(scn: &Scenario, exp: &Experiment, propagation: Option<Vec<PropagationRow>>) -> Self {
        let routers: Vec<String> = scn.net.topology.router_names().to_vec();
        let meta = ReportMeta {
            scenario: scn.file.name.clone(),
            scenario_hash: scn.file.hash(),
            seed: scn.file.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            rate_pps: scn.probe.rate_pps,
            attribution: scn.probe.attribution,
            routers: routers.clone(),
        };
        let mut samples = Vec::new();
        let mut rows = Vec::new();
        for s in &exp.samples {
            samples.push(SampleReport {
                index: s.index,
                seed: s.seed,
                valid: s.check.accepted() && matches!(s.convergence, Convergence::At(_)),
                check: s.check.clone(),
                convergence: s.convergence,
                prefixes: s.prefixes.iter().map(|p| p.0).collect(),
                drop_causes: Some(s.drop_causes.clone()),
            });
            rows.extend(s.series.iter().map(|o| ReportRow {
                sample: s.index,
                router: routers[o.row.src.index()].clone(),
                series: o.row,
                exact: Some(o.exact.clone()),
            }));
        }
        Self::assemble(meta, samples, rows, propagation)
    }

    /// Report of analyzed captures; `samples` pairs each sample's index and
    /// seed with its analysis.
    pub fn from_analyses(meta: ReportMeta, samples: Vec<(usize, u64, SampleAnalysis)>) -> Self {
        let mut reports = Vec::new();
        let mut rows = Vec::new();
        for (index, seed, a) in samples {
            let mut prefixes: Vec<u32> = a.rows.iter().map(|r| r.prefix.0).collect();
            prefixes.sort_unstable();
            prefixes.dedup();
            rows.extend(a.rows.iter().map(|r| ReportRow {
                sample: index,
                router: meta.routers.get(r.src.index()).cloned().unwrap_or_else(|| r.src.to_string()),
                series: *r,
                exact: None,
            }));
            reports.push(SampleReport {
                index,
                seed,
                valid: a.valid(),
                check: a.check,
                convergence: a.convergence,
                prefixes,
                drop_causes: None,
            });
        }
        Self::assemble(meta, reports, rows, None)
    }

    pub fn all_valid(&self) -> bool {
        self.samples.iter().all(|s| s.valid)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("format").and_then(|f| f.as_str()).unwrap_or_default();
        if found != REPORT_FORMAT {
            return Err(ReportError::Format {
                path: path.display().to_string(),
                found: found.into(),
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `report.json` and the CSV tables into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ReportError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        self.write_samples_csv(std::fs::File::create(dir.join("samples.csv"))?)?;
        self.write_violations_csv(std::fs::File::create(dir.join("violations.csv"))?)?;
        if self.rows.iter().any(|r| r.exact.is_some()) {
            self.write_exact_csv(std::fs::File::create(dir.join("exact.csv"))?)?;
        }
        write_stats_csv(std::fs::File::create(dir.join("summary.csv"))?, std::slice::from_ref(self))?;
        if let Some(rows) = &self.propagation {
            super::propagation::write_csv(std::fs::File::create(dir.join("propagation.csv"))?, rows)?;
        }
        Ok(())
    }

    pub fn write_samples_csv(&self, out: impl Write) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sample", "seed", "valid", "edges_ok", "delayer_ok", "drop_counters", "converged_at_ms", "notes"])?;
        for s in &self.samples {
            let converged = match s.convergence {
                Convergence::At(t) => fmt_ms(t),
                Convergence::Inconclusive { .. } => String::new(),
            };
            w.write_record([
                s.index.to_string(),
                s.seed.to_string(),
                s.valid.to_string(),
                s.check.edges_ok.to_string(),
                s.check.delayer_ok.to_string(),
                s.check.drop_counters.to_string(),
                converged,
                s.check.notes.join("; "),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_violations_csv(&self, out: impl Write) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "sample",
            "router",
            "prefix",
            "sent",
            "dropped",
            "violating",
            "estimate_ms",
            "alt_estimate_ms",
            "exact_ms",
        ])?;
        for r in &self.rows {
            let s = &r.series;
            w.write_record([
                r.sample.to_string(),
                r.router.clone(),
                s.prefix.0.to_string(),
                s.sent.to_string(),
                s.dropped.to_string(),
                s.violating.to_string(),
                fmt_ms(s.estimate_us),
                fmt_ms(s.alt_estimate_us),
                r.exact_total().map(fmt_ms).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_exact_csv(&self, out: impl Write) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sample", "router", "prefix", "start_ms", "end_ms"])?;
        for r in &self.rows {
            for iv in r.exact.iter().flatten() {
                w.write_record([
                    r.sample.to_string(),
                    r.router.clone(),
                    r.series.prefix.0.to_string(),
                    fmt_ms(iv.start),
                    fmt_ms(iv.end),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct ScenarioValues {
    by_router: BTreeMap<String, Vec<Micros>>,
    pooled: Vec<Micros>,
    routers: Vec<String>,
    samples: usize,
}

/// One row per (scenario, router) plus a pooled row per scenario, over the
/// valid samples of all given reports. Reports of the same scenario are
/// merged; scenarios keep their first-seen order.
pub fn stats_rows(reports: &[ExperimentReport]) -> Vec<(String, String, PercentileSummary, usize)> {
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, ScenarioValues> = BTreeMap::new();
    for rep in reports {
        let name = &rep.meta.scenario;
        if !values.contains_key(name) {
            order.push(name.clone());
        }
        let entry = values.entry(name.clone()).or_default();
        let valid: BTreeMap<usize, bool> = rep.samples.iter().map(|s| (s.index, s.valid)).collect();
        entry.samples += valid.values().filter(|v| **v).count();
        for r in rep.rows.iter().filter(|r| valid.get(&r.sample) == Some(&true)) {
            if !entry.by_router.contains_key(&r.router) {
                entry.routers.push(r.router.clone());
            }
            entry.by_router.entry(r.router.clone()).or_default().push(r.series.estimate_us);
            entry.pooled.push(r.series.estimate_us);
        }
    }
    let mut out = Vec::new();
    for name in order {
        let v = &values[&name];
        for router in &v.routers {
            let s = summarize(&v.by_router[router]).expect("non-empty");
            out.push((name.clone(), router.clone(), s, v.samples));
        }
        if let Ok(s) = summarize(&v.pooled) {
            out.push((name.clone(), POOLED.to_string(), s, v.samples));
        }
    }
    out
}

pub fn write_stats_csv(out: impl Write, reports: &[ExperimentReport]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_HEADER)?;
    for (scenario, router, s, samples) in stats_rows(reports) {
        w.write_record([
            scenario,
            router,
            s.n.to_string(),
            fmt_ms(s.q5),
            fmt_ms(s.q25),
            fmt_ms(s.q50),
            fmt_ms(s.q75),
            fmt_ms(s.q95),
            samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::experiment::{run_experiment, RunOptions};
    use crate::cli::presets::preset;

    fn report(samples: usize) -> ExperimentReport {
        let mut f = preset("abilene-withdraw-n20").unwrap();
        f.samples = samples;
        f.processing.jitter = 0.0;
        let scn = f.resolve().unwrap();
        let exp = run_experiment(&scn, &RunOptions::default()).unwrap();
        ExperimentReport::from_experiment(&scn, &exp, None)
    }

    #[test]
    fn pooled_counts_every_valid_series() {
        let r = report(2);
        assert!(r.all_valid());
        assert_eq!(r.pooled.unwrap().n, 11 * 10 * 2);
        assert_eq!(r.per_router.len(), 11);
        assert!(r.per_router.iter().all(|s| s.summary.n == 20));
        assert!(r.excluded.is_empty());
    }

    #[test]
    fn json_round_trip() {
        let r = report(1);
        let dir = tempfile::tempdir().unwrap();
        r.write_dir(dir.path()).unwrap();
        assert_eq!(ExperimentReport::load(&dir.path().join("report.json")).unwrap(), r);
        let csv = std::fs::read_to_string(dir.path().join("violations.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 110);
    }

    #[test]
    fn stats_merge_identical_reports() {
        let r = report(1);
        let one = stats_rows(std::slice::from_ref(&r));
        let two = stats_rows(&[r.clone(), r]);
        assert_eq!(one.len(), 12);
        assert_eq!(one.last().unwrap().1, POOLED);
        for (a, b) in one.iter().zip(&two) {
            assert_eq!((a.2.q5, a.2.q50, a.2.q95), (b.2.q5, b.2.q50, b.2.q95));
            assert_eq!(2 * a.2.n, b.2.n);
        }
    }

    #[test]
    fn excluded_samples_are_listed() {
        let mut r = report(2);
        r.samples[1].check.edges_ok = false;
        r.samples[1].valid = false;
        let r = ExperimentReport::assemble(r.meta, r.samples, r.rows, None);
        assert_eq!(r.pooled.unwrap().n, 110);
        assert_eq!(r.excluded, vec![Excluded { sample: 1, reasons: vec!["edge probes lost".into()] }]);
    }
}
