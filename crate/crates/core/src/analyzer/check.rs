use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::trace::{HardwareMapping, LinkRef, PacketKey, RecordBody, Stage, TraceRecord};
use crate::Micros;

/// Default allowance between a configured link delay and the observed one.
pub const DEFAULT_DELAY_TOLERANCE: Micros = 50;

const MAX_NOTES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCheckResult {
    /// Every probe departing in the first and last edge span was delivered.
    pub edges_ok: bool,
    /// Every delayed packet was captured before and after its delay, which
    /// matched the configuration.
    pub delayer_ok: bool,
    pub drop_counters: u64,
    pub notes: Vec<String>,
}

impl SampleCheckResult {
    pub fn accepted(&self) -> bool {
        self.edges_ok && self.delayer_ok && self.drop_counters == 0
    }

    pub(crate) fn note(&mut self, msg: String) {
        if self.notes.len() < MAX_NOTES {
            self.notes.push(msg);
        } else if self.notes.len() == MAX_NOTES {
            self.notes.push("further problems omitted".into());
        }
    }
}

/// Checks pre/post twins on every link against the mapping's delays.
pub fn check_delayers(records: &[TraceRecord], mapping: &HardwareMapping, tolerance: Micros, result: &mut SampleCheckResult) {
    let index = mapping.index();
    let mut pairs: HashMap<(PacketKey, LinkRef), (Vec<Micros>, Vec<Micros>)> = HashMap::new();
    let mut ok = true;
    for r in records {
        let (Some((link, stage)), Some(key)) = (r.link(), r.packet_key()) else {
            continue;
        };
        let Some(delay) = index.delay(link) else {
            ok = false;
            result.note(format!("record on unknown link {link}"));
            continue;
        };
        match stage {
            Stage::Undelayed if delay > 0 => {
                ok = false;
                result.note(format!("{key:?} bypassed the delay on {link}"));
            }
            Stage::Undelayed => {}
            Stage::PreDelay => pairs.entry((key, link)).or_default().0.push(r.ts),
            Stage::PostDelay => pairs.entry((key, link)).or_default().1.push(r.ts),
        }
    }
    let mut problems: Vec<String> = Vec::new();
    for ((key, link), (pre, post)) in pairs {
        let delay = index.delay(link).expect("checked above");
        if pre.len() != 1 || post.len() != 1 {
            problems.push(format!("{key:?} on {link}: {} pre / {} post captures", pre.len(), post.len()));
            continue;
        }
        let observed = post[0] - pre[0];
        if (observed - delay).abs() > tolerance {
            problems.push(format!("{key:?} on {link}: delayed {observed} us, configured {delay} us"));
        }
    }
    problems.sort();
    for p in problems {
        ok = false;
        result.note(p);
    }
    result.delayer_ok &= ok;
}

/// Reads the capture drop counter from the summary record.
pub fn summary_drops(records: &[TraceRecord]) -> Option<u64> {
    match records.last()?.body {
        RecordBody::Summary { drops } => Some(drops),
        _ => None,
    }
}
