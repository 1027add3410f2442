use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{PeerId, PrefixId, Route, RouterId, LearnedFrom};
use crate::Micros;

/// `since` of the initial, converged entry of every timeline.
pub const BEGINNING: Micros = Micros::MIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FibAction {
    /// Forward toward an internal egress router along the IGP path.
    Forward(RouterId),
    /// Hand the packet to a directly attached external peer.
    DeliverExternal(PeerId),
    BlackHole,
}

impl FibAction {
    pub fn from_best(best: Option<&Route>) -> Self {
        match best {
            None => FibAction::BlackHole,
            Some(r) if r.learned_from == LearnedFrom::External => FibAction::DeliverExternal(r.origin_peer),
            Some(r) => FibAction::Forward(r.egress),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FibEntry {
    pub since: Micros,
    pub action: FibAction,
}

/// Forwarding actions over time for every (router, prefix).
///
/// Per key the entries are strictly increasing in `since`, start at
/// [`BEGINNING`], and consecutive actions differ.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FibTimeline {
    entries: BTreeMap<(RouterId, PrefixId), Vec<FibEntry>>,
}

impl FibTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_initial(&mut self, router: RouterId, prefix: PrefixId, action: FibAction) {
        self.entries.insert(
            (router, prefix),
            vec![FibEntry {
                since: BEGINNING,
                action,
            }],
        );
    }

    /// Appends a change; returns false when the action is unchanged.
    pub fn record(&mut self, router: RouterId, prefix: PrefixId, at: Micros, action: FibAction) -> bool {
        let list = self.entries.entry((router, prefix)).or_insert_with(|| {
            vec![FibEntry {
                since: BEGINNING,
                action: FibAction::BlackHole,
            }]
        });
        let last = list.last().expect("timelines are never empty");
        if last.action == action {
            return false;
        }
        assert!(at > last.since, "FIB changes must be strictly ordered in time");
        list.push(FibEntry { since: at, action });
        true
    }

    /// The action active at instant `t` (changes take effect at their `since`).
    pub fn action_at(&self, router: RouterId, prefix: PrefixId, t: Micros) -> FibAction {
        match self.entries.get(&(router, prefix)) {
            None => FibAction::BlackHole,
            Some(list) => {
                let idx = list.partition_point(|e| e.since <= t);
                list[idx.saturating_sub(1)].action
            }
        }
    }

    pub fn entries(&self, router: RouterId, prefix: PrefixId) -> &[FibEntry] {
        self.entries.get(&(router, prefix)).map_or(&[], Vec::as_slice)
    }

    pub fn initial_action(&self, router: RouterId, prefix: PrefixId) -> FibAction {
        self.entries(router, prefix).first().map_or(FibAction::BlackHole, |e| e.action)
    }

    pub fn final_action(&self, router: RouterId, prefix: PrefixId) -> FibAction {
        self.entries(router, prefix).last().map_or(FibAction::BlackHole, |e| e.action)
    }

    pub fn keys(&self) -> impl Iterator<Item = (RouterId, PrefixId)> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(RouterId, PrefixId), &Vec<FibEntry>)> {
        self.entries.iter()
    }

    /// Number of changes after the initial state, over all keys.
    pub fn change_count(&self) -> usize {
        self.entries.values().map(|l| l.len() - 1).sum()
    }

    pub fn last_change(&self) -> Option<Micros> {
        self.entries
            .values()
            .filter(|l| l.len() > 1)
            .map(|l| l.last().unwrap().since)
            .max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_half_open() {
        let mut t = FibTimeline::new();
        let (r, p) = (RouterId(0), PrefixId(0));
        t.set_initial(r, p, FibAction::Forward(RouterId(1)));
        assert!(t.record(r, p, 100, FibAction::BlackHole));
        assert!(!t.record(r, p, 150, FibAction::BlackHole));
        assert!(t.record(r, p, 200, FibAction::Forward(RouterId(2))));
        assert_eq!(t.action_at(r, p, 99), FibAction::Forward(RouterId(1)));
        assert_eq!(t.action_at(r, p, 100), FibAction::BlackHole);
        assert_eq!(t.action_at(r, p, 199), FibAction::BlackHole);
        assert_eq!(t.action_at(r, p, 200), FibAction::Forward(RouterId(2)));
        assert_eq!(t.action_at(r, p, BEGINNING), FibAction::Forward(RouterId(1)));
        assert_eq!(t.change_count(), 2);
        assert_eq!(t.last_change(), Some(200));
        assert_eq!(t.action_at(RouterId(5), p, 0), FibAction::BlackHole);
    }
}
