use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{HardwareMapping, LinkRef, NodeId, PacketKey, RecordBody, Stage, TraceRecord};
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    UnknownNode,
    UnknownLink,
    /// A delayed link captured once, or an undelayed link captured twice.
    StageMismatch,
    NonMonotonic,
    DuplicateRecord,
    MissingPostDelay,
    MissingPreDelay,
    MissingSummary,
    MisplacedSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    /// Zero-based record index (the header is not a record).
    pub index: Option<usize>,
    pub kind: FindingKind,
    pub detail: String,
}

/// Structural checks of a record stream against its mapping. An empty result
/// means the trace is well-formed.
pub fn validate_trace(records: &[TraceRecord], mapping: &HardwareMapping) -> Vec<Finding> {
    let index = mapping.index();
    let known = |id: NodeId| {
        id == mapping.prober || mapping.router_of(id).is_some() || mapping.peer_of(id).is_some()
    };
    let mut findings = Vec::new();
    let mut push = |index: Option<usize>, kind, detail: String| findings.push(Finding { index, kind, detail });
    let mut last_ts: HashMap<(LinkRef, Stage), Micros> = HashMap::new();
    let mut seen: HashSet<(PacketKey, LinkRef, Stage)> = HashSet::new();
    // (first pre index, first post index) per packet and delayed link
    let mut twins: HashMap<(PacketKey, LinkRef), (Option<usize>, Option<usize>)> = HashMap::new();
    let mut summaries = 0;

    for (i, r) in records.iter().enumerate() {
        let (link, stage) = match r.body {
            RecordBody::Summary { .. } => {
                summaries += 1;
                if i + 1 != records.len() {
                    push(Some(i), FindingKind::MisplacedSummary, "summary is not the last record".into());
                }
                continue;
            }
            RecordBody::Probe { link, stage, src, .. } => {
                if mapping.router_of(src).is_none() {
                    push(Some(i), FindingKind::UnknownNode, format!("probe source {src} is not a router"));
                }
                (link, stage)
            }
            RecordBody::Bgp { link, stage, session, .. } => {
                for id in [session.from, session.to] {
                    if !known(id) {
                        push(Some(i), FindingKind::UnknownNode, format!("session endpoint {id}"));
                    }
                }
                (link, stage)
            }
        };
        if !known(link.from) || !known(link.to) {
            push(Some(i), FindingKind::UnknownNode, format!("link {link}"));
            continue;
        }
        let Some(delay) = index.delay(link) else {
            push(Some(i), FindingKind::UnknownLink, format!("no link between {} and {}", link.from, link.to));
            continue;
        };
        if (delay > 0) == (stage == Stage::Undelayed) {
            push(
                Some(i),
                FindingKind::StageMismatch,
                format!("{} record on link {link} with delay {delay}", stage.as_str()),
            );
        }
        if let Some(&prev) = last_ts.get(&(link, stage)) {
            if r.ts < prev {
                push(
                    Some(i),
                    FindingKind::NonMonotonic,
                    format!("ts {} after {prev} on {link} ({})", r.ts, stage.as_str()),
                );
            }
        }
        let e = last_ts.entry((link, stage)).or_insert(r.ts);
        *e = (*e).max(r.ts);
        let key = r.packet_key().expect("not a summary");
        if !seen.insert((key, link, stage)) {
            push(Some(i), FindingKind::DuplicateRecord, format!("{key:?} on {link} ({})", stage.as_str()));
        }
        if stage != Stage::Undelayed {
            let twin = twins.entry((key, link)).or_default();
            let slot = if stage == Stage::PreDelay { &mut twin.0 } else { &mut twin.1 };
            slot.get_or_insert(i);
        }
    }
    for ((key, link), pair) in twins {
        match pair {
            (Some(i), None) => push(Some(i), FindingKind::MissingPostDelay, format!("{key:?} on {link}")),
            (None, Some(i)) => push(Some(i), FindingKind::MissingPreDelay, format!("{key:?} on {link}")),
            _ => {}
        }
    }
    if summaries == 0 {
        push(None, FindingKind::MissingSummary, "no summary record".into());
    }
    findings.sort();
    findings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> HardwareMapping {
        let (net, _) = crate::probe::tests::path3(2, crate::MS);
        HardwareMapping::from_network(&net)
    }

    fn probe(ts: Micros, from: u32, to: u32, stage: Stage, seq: u64) -> TraceRecord {
        TraceRecord {
            ts,
            body: RecordBody::Probe {
                link: LinkRef { from, to },
                stage,
                src: 1,
                prefix: 0,
                seq,
                ttl: 64,
            },
        }
    }

    fn summary(ts: Micros) -> TraceRecord {
        TraceRecord {
            ts,
            body: RecordBody::Summary { drops: 0 },
        }
    }

    fn good() -> Vec<TraceRecord> {
        vec![
            probe(0, 5, 1, Stage::Undelayed, 0),
            probe(0, 1, 0, Stage::PreDelay, 0),
            probe(1, 5, 1, Stage::Undelayed, 1),
            probe(1, 1, 0, Stage::PreDelay, 1),
            probe(10_000, 1, 0, Stage::PostDelay, 0),
            probe(10_001, 1, 0, Stage::PostDelay, 1),
            summary(20_000),
        ]
    }

    fn kinds(records: &[TraceRecord]) -> Vec<FindingKind> {
        validate_trace(records, &mapping()).into_iter().map(|f| f.kind).collect()
    }

    #[test]
    fn valid_trace_has_no_findings() {
        assert!(kinds(&good()).is_empty());
    }

    #[test]
    fn unknown_link_is_reported_with_index() {
        let mut t = good();
        t.insert(2, probe(0, 0, 2, Stage::PreDelay, 9));
        let f = validate_trace(&t, &mapping());
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].index, f[0].kind), (Some(2), FindingKind::UnknownLink));
        t[2] = probe(0, 0, 42, Stage::PreDelay, 9);
        assert_eq!(kinds(&t), vec![FindingKind::UnknownNode]);
    }

    #[test]
    fn swapped_timestamps_break_monotonicity() {
        let mut t = good();
        t[4].ts = 10_001;
        t[5].ts = 10_000;
        assert_eq!(kinds(&t), vec![FindingKind::NonMonotonic]);
    }

    #[test]
    fn every_single_deletion_on_delayed_links_is_found() {
        let base = good();
        for (i, r) in base.iter().enumerate() {
            if matches!(r.link(), Some((_, Stage::Undelayed))) {
                continue;
            }
            let mut t = base.clone();
            t.remove(i);
            assert!(!kinds(&t).is_empty(), "deleting record {i} went unnoticed");
        }
    }

    #[test]
    fn duplicates_and_stage_mismatch() {
        let mut t = good();
        t.insert(1, probe(0, 5, 1, Stage::Undelayed, 0));
        assert_eq!(kinds(&t), vec![FindingKind::DuplicateRecord]);
        let mut t = good();
        t[0] = probe(0, 5, 1, Stage::PreDelay, 0);
        assert_eq!(kinds(&t), vec![FindingKind::StageMismatch, FindingKind::MissingPostDelay]);
    }

    #[test]
    fn summary_placement() {
        let mut t = good();
        t.pop();
        assert_eq!(kinds(&t), vec![FindingKind::MissingSummary]);
        t.insert(0, summary(0));
        t.push(summary(20_000));
        assert_eq!(kinds(&t), vec![FindingKind::MisplacedSummary]);
    }
}
