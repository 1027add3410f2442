//! Offline analysis of captured traces: probe journeys, quiet-period
//! convergence, sample checks and violation estimates.

mod check;
mod convergence;
mod journeys;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use check::{check_delayers, summary_drops, SampleCheckResult, DEFAULT_DELAY_TOLERANCE};
pub use convergence::detect_convergence;
pub use journeys::{classify_journey, infer_peer_activity, reconstruct_journeys, JourneyFate, JourneyKey, Observation};
pub use stats::{nearest_rank, summarize, PercentileSummary};

use crate::model::{PrefixId, RouterId};
use crate::sim::Attribution;
use crate::trace::{HardwareMapping, Trace, TraceError, TraceHeader};
use crate::{Micros, SEC};

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("mapping: {0}")]
    Mapping(String),
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("trace is incomplete: no summary record")]
    IncompleteTrace,
    #[error("convergence inconclusive: last update at {last_update} us, capture ends at {stream_end} us")]
    Inconclusive { last_update: Micros, stream_end: Micros },
    #[error("no values to summarize")]
    Empty,
}

/// Probing parameters carried in the trace header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureInfo {
    pub rate_pps: u64,
    pub t0: Micros,
    /// Absolute departure range of the probes, `[start, end)`.
    pub window_start: Micros,
    pub window_end: Micros,
    pub edge_span: Micros,
    pub attribution: Attribution,
}

impl CaptureInfo {
    pub fn spacing(&self) -> Micros {
        SEC / self.rate_pps as Micros
    }

    pub fn to_header(&self, header: TraceHeader) -> TraceHeader {
        header
            .with("rate", self.rate_pps)
            .with("t0", self.t0)
            .with("window_start", self.window_start)
            .with("window_end", self.window_end)
            .with("edge_span", self.edge_span)
            .with("attribution", attribution_name(self.attribution))
    }

    pub fn from_header(h: &TraceHeader) -> Result<Self, TraceError> {
        let attribution = match h.get("attribution") {
            Some("at-emission") => Attribution::AtEmission,
            Some("egress-receipt") => Attribution::EgressReceipt,
            other => {
                return Err(TraceError::Header {
                    key: "attribution".into(),
                    value: other.unwrap_or_default().into(),
                })
            }
        };
        let info = Self {
            rate_pps: h.parse_value("rate")?,
            t0: h.parse_value("t0")?,
            window_start: h.parse_value("window_start")?,
            window_end: h.parse_value("window_end")?,
            edge_span: h.parse_value("edge_span")?,
            attribution,
        };
        if info.rate_pps == 0 || !(SEC as u64).is_multiple_of(info.rate_pps) {
            return Err(TraceError::Header {
                key: "rate".into(),
                value: info.rate_pps.to_string(),
            });
        }
        Ok(info)
    }
}

pub fn attribution_name(a: Attribution) -> &'static str {
    match a {
        Attribution::AtEmission => "at-emission",
        Attribution::EgressReceipt => "egress-receipt",
    }
}

/// Which dropped probes count as violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StableExpectation {
    /// Both stable states reach every probed prefix; every drop counts.
    #[default]
    AllReachable,
    /// A series whose edge probes were not all delivered has unknown stable
    /// reachability and contributes no violation.
    InferFromEdges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyzeConfig {
    pub quiet_window: Micros,
    pub delay_tolerance: Micros,
    pub expectation: StableExpectation,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            quiet_window: 10 * SEC,
            delay_tolerance: DEFAULT_DELAY_TOLERANCE,
            expectation: StableExpectation::AllReachable,
        }
    }
}

/// Probe outcome of one (source, prefix) in one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub src: RouterId,
    pub prefix: PrefixId,
    pub sent: u64,
    pub dropped: u64,
    /// Drops counted as violations.
    pub violating: u64,
    pub estimate_us: Micros,
    /// Estimate under the other attribution rule.
    pub alt_estimate_us: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convergence {
    At(Micros),
    Inconclusive { last_update: Micros },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleAnalysis {
    pub check: SampleCheckResult,
    pub convergence: Convergence,
    /// Sorted by (source, prefix).
    pub rows: Vec<SeriesRow>,
}

impl SampleAnalysis {
    pub fn valid(&self) -> bool {
        self.check.accepted() && matches!(self.convergence, Convergence::At(_))
    }
}

#[derive(Default)]
struct SeriesAcc {
    sent: u64,
    dropped: u64,
    alt_dropped: u64,
    edge_failures: u64,
}

/// Runs journey reconstruction, classification, sample checks and
/// convergence detection over one captured sample.
pub fn analyze_trace(trace: &Trace, mapping: &HardwareMapping, cfg: &AnalyzeConfig) -> Result<SampleAnalysis, AnalyzeError> {
    let drops = summary_drops(&trace.records).ok_or(AnalyzeError::IncompleteTrace)?;
    let info = CaptureInfo::from_header(&trace.header)?;
    let records = &trace.records;
    let journeys = reconstruct_journeys(records, mapping)?;
    let activity = infer_peer_activity(records, mapping);
    let alt = match info.attribution {
        Attribution::AtEmission => Attribution::EgressReceipt,
        Attribution::EgressReceipt => Attribution::AtEmission,
    };

    let mut series: BTreeMap<(u32, u32), SeriesAcc> = BTreeMap::new();
    for (key, obs) in &journeys {
        let departed = obs[0].ts;
        let fate = classify_journey(key, obs, mapping, &activity, info.attribution);
        let acc = series.entry((key.src, key.prefix)).or_default();
        acc.sent += 1;
        if fate.is_dropped() {
            acc.dropped += 1;
            let on_edge =
                departed < info.window_start + info.edge_span || departed >= info.window_end - info.edge_span;
            if on_edge {
                acc.edge_failures += 1;
            }
        }
        if classify_journey(key, obs, mapping, &activity, alt).is_dropped() {
            acc.alt_dropped += 1;
        }
    }

    let mut check = SampleCheckResult {
        edges_ok: true,
        delayer_ok: true,
        drop_counters: drops,
        notes: Vec::new(),
    };
    if drops > 0 {
        check.note(format!("capture dropped {drops} packets"));
    }
    let spacing = info.spacing();
    let names = mapping.router_names();
    let mut rows = Vec::with_capacity(series.len());
    for ((src, prefix), acc) in series {
        let edges_ok = acc.edge_failures == 0;
        if !edges_ok {
            check.edges_ok = false;
            let name = names.get(src as usize).map_or("?", String::as_str);
            check.note(format!(
                "{} edge probes from {name} to prefix {prefix} were not delivered",
                acc.edge_failures
            ));
        }
        let counted = match cfg.expectation {
            StableExpectation::AllReachable => true,
            StableExpectation::InferFromEdges => edges_ok,
        };
        let violating = if counted { acc.dropped } else { 0 };
        let alt_violating = if counted { acc.alt_dropped } else { 0 };
        rows.push(SeriesRow {
            src: RouterId(src),
            prefix: PrefixId(prefix),
            sent: acc.sent,
            dropped: acc.dropped,
            violating,
            estimate_us: violating as Micros * spacing,
            alt_estimate_us: alt_violating as Micros * spacing,
        });
    }
    check_delayers(records, mapping, cfg.delay_tolerance, &mut check);

    let convergence = match detect_convergence(records, cfg.quiet_window) {
        Ok(t) => Convergence::At(t),
        Err(AnalyzeError::Inconclusive { last_update, stream_end }) => {
            check.note(format!(
                "capture ends at {stream_end} us, before the quiet period after {last_update} us"
            ));
            Convergence::Inconclusive { last_update }
        }
        Err(e) => return Err(e),
    };
    Ok(SampleAnalysis {
        check,
        convergence,
        rows,
    })
}

/// Sample acceptance: edge probes delivered, delays as configured and no
/// capture drops.
pub fn check_sample(trace: &Trace, mapping: &HardwareMapping, cfg: &AnalyzeConfig) -> Result<SampleCheckResult, AnalyzeError> {
    analyze_trace(trace, mapping, cfg).map(|a| a.check)
}
