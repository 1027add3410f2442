use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{PeerId, PrefixId, Route, Topology};
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// The peer starts advertising the prefixes with the given AS-path length.
    Announce { as_path_len: u32 },
    /// The peer prepends its AS-path for routes it already advertises.
    UpdateWorse { prepend_delta: u32 },
    Withdraw,
}

/// One external BGP event, emitted by `at_peer` at `time`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    pub at_peer: PeerId,
    /// Processing order of the prefixes at every router.
    pub prefixes: Vec<PrefixId>,
    pub time: Micros,
}

impl EventSpec {
    pub fn validate(&self, topology: &Topology) -> Result<(), SimError> {
        if self.at_peer.index() >= topology.peers().len() {
            return Err(SimError::InvalidEvent(format!("unknown peer {}", self.at_peer)));
        }
        if self.prefixes.is_empty() {
            return Err(SimError::InvalidEvent("event affects no prefixes".into()));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = self.prefixes.iter().find(|p| !seen.insert(**p)) {
            return Err(SimError::InvalidEvent(format!("prefix {dup} listed twice")));
        }
        if let EventKind::Announce { as_path_len: 0 } = self.kind {
            return Err(SimError::InvalidEvent("announced AS path must be non-empty".into()));
        }
        Ok(())
    }

    /// Position of each prefix in the event's processing order.
    pub fn ranks(&self) -> BTreeMap<PrefixId, u32> {
        self.prefixes
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, i as u32))
            .collect()
    }
}

/// Which instant makes a withdrawing peer stop accepting traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Attribution {
    /// The peer drops traffic from the moment it emits the withdraw.
    #[default]
    AtEmission,
    /// Traffic counts as violating once the border router has received the
    /// withdraw, i.e. when it is handed to the peer after that instant.
    EgressReceipt,
}

/// When external peers stop delivering traffic, per prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeerActivity {
    /// Arrival instant at the peer from which packets are dropped, per semantics.
    inactive_from: BTreeMap<(PeerId, PrefixId), Micros>,
    receipt_cutoff: BTreeMap<(PeerId, PrefixId), Micros>,
}

impl PeerActivity {
    pub fn always_active() -> Self {
        Self::default()
    }

    pub fn mark_withdrawn(&mut self, peer: PeerId, prefix: PrefixId, emitted_at: Micros, link_delay: Micros) {
        self.inactive_from.insert((peer, prefix), emitted_at);
        // received at the border at emitted + d, handed back at arrival + d
        self.receipt_cutoff
            .insert((peer, prefix), emitted_at + 2 * link_delay);
    }

    pub fn inactive_from(&self, peer: PeerId, prefix: PrefixId, attribution: Attribution) -> Option<Micros> {
        match attribution {
            Attribution::AtEmission => self.inactive_from.get(&(peer, prefix)).copied(),
            Attribution::EgressReceipt => self.receipt_cutoff.get(&(peer, prefix)).copied(),
        }
    }

    /// Whether a packet reaching `peer` at `arrival` is delivered.
    pub fn is_active(&self, peer: PeerId, prefix: PrefixId, arrival: Micros, attribution: Attribution) -> bool {
        self.inactive_from(peer, prefix, attribution)
            .is_none_or(|from| arrival < from)
    }

    pub fn withdrawn(&self) -> impl Iterator<Item = (PeerId, PrefixId, Micros)> + '_ {
        self.inactive_from.iter().map(|(&(p, x), &t)| (p, x, t))
    }
}

/// A change to one external route caused by the event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteChange {
    pub prefix: PrefixId,
    pub old: Option<Route>,
    pub new: Option<Route>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventEffect {
    /// In event order.
    pub changes: Vec<RouteChange>,
    pub activity: PeerActivity,
}

impl EventEffect {
    pub fn is_noop(&self) -> bool {
        self.changes.iter().all(|c| c.old == c.new)
    }
}

/// Applies the event to the routes the peer advertises.
pub fn apply_event_to_peer(topology: &Topology, event: &EventSpec, external: &[Route]) -> Result<EventEffect, SimError> {
    event.validate(topology)?;
    let current: BTreeMap<PrefixId, Route> = external
        .iter()
        .filter(|r| r.origin_peer == event.at_peer)
        .map(|r| (r.prefix, *r))
        .collect();
    let delay = topology.peer(event.at_peer).propagation_delay;
    let mut activity = PeerActivity::default();
    let mut changes = Vec::with_capacity(event.prefixes.len());
    for &prefix in &event.prefixes {
        let old = current.get(&prefix).copied();
        let new = match event.kind {
            EventKind::Withdraw => {
                if old.is_none() {
                    return Err(SimError::Scenario(format!(
                        "peer {} withdraws {prefix} which it never announced",
                        topology.peer(event.at_peer).name
                    )));
                }
                activity.mark_withdrawn(event.at_peer, prefix, event.time, delay);
                None
            }
            EventKind::UpdateWorse { prepend_delta } => {
                let Some(mut route) = old else {
                    return Err(SimError::Scenario(format!(
                        "peer {} updates {prefix} which it never announced",
                        topology.peer(event.at_peer).name
                    )));
                };
                route.as_path_len += prepend_delta;
                Some(route)
            }
            EventKind::Announce { as_path_len } => Some(Route::external(topology, event.at_peer, prefix, as_path_len)),
        };
        changes.push(RouteChange { prefix, old, new });
    }
    Ok(EventEffect { changes, activity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExternalPeer, Link, RouterId};

    fn topo() -> Topology {
        Topology::new(
            vec!["a".into(), "b".into()],
            vec![Link {
                a: RouterId(0),
                b: RouterId(1),
                propagation_delay: 1_000,
                igp_cost: 1,
            }],
            vec![ExternalPeer {
                name: "e".into(),
                attached_to: RouterId(0),
                propagation_delay: 3_000,
            }],
        )
        .unwrap()
    }

    fn routes(t: &Topology, n: u32) -> Vec<Route> {
        (0..n).map(|p| Route::external(t, PeerId(0), PrefixId(p), 2)).collect()
    }

    #[test]
    fn withdraw_marks_every_prefix_inactive() {
        let t = topo();
        let ev = EventSpec {
            kind: EventKind::Withdraw,
            at_peer: PeerId(0),
            prefixes: (0..10_000).map(PrefixId).collect(),
            time: 5_000,
        };
        let eff = apply_event_to_peer(&t, &ev, &routes(&t, 10_000)).unwrap();
        assert_eq!(eff.changes.len(), 10_000);
        assert!(eff.changes.iter().all(|c| c.new.is_none()));
        assert_eq!(eff.activity.withdrawn().count(), 10_000);
        assert!(eff.activity.withdrawn().all(|(_, _, t)| t == 5_000));
        assert_eq!(eff.activity.inactive_from(PeerId(0), PrefixId(3), Attribution::EgressReceipt), Some(11_000));
        assert!(eff.activity.is_active(PeerId(0), PrefixId(3), 4_999, Attribution::AtEmission));
        assert!(!eff.activity.is_active(PeerId(0), PrefixId(3), 5_000, Attribution::AtEmission));
    }

    #[test]
    fn update_worse_zero_is_noop() {
        let t = topo();
        let ev = EventSpec {
            kind: EventKind::UpdateWorse { prepend_delta: 0 },
            at_peer: PeerId(0),
            prefixes: vec![PrefixId(0)],
            time: 0,
        };
        let eff = apply_event_to_peer(&t, &ev, &routes(&t, 1)).unwrap();
        assert!(eff.is_noop());
        assert_eq!(eff.activity, PeerActivity::always_active());
    }

    #[test]
    fn update_worse_prepends() {
        let t = topo();
        let ev = EventSpec {
            kind: EventKind::UpdateWorse { prepend_delta: 3 },
            at_peer: PeerId(0),
            prefixes: vec![PrefixId(0)],
            time: 0,
        };
        let eff = apply_event_to_peer(&t, &ev, &routes(&t, 1)).unwrap();
        assert_eq!(eff.changes[0].new.unwrap().as_path_len, 5);
    }

    #[test]
    fn withdrawing_unknown_prefix_fails() {
        let t = topo();
        let ev = EventSpec {
            kind: EventKind::Withdraw,
            at_peer: PeerId(0),
            prefixes: vec![PrefixId(7)],
            time: 0,
        };
        assert!(matches!(apply_event_to_peer(&t, &ev, &routes(&t, 1)), Err(SimError::Scenario(_))));
    }

    #[test]
    fn rejects_duplicate_and_empty_prefixes() {
        let t = topo();
        let mut ev = EventSpec {
            kind: EventKind::Announce { as_path_len: 1 },
            at_peer: PeerId(0),
            prefixes: vec![PrefixId(1), PrefixId(1)],
            time: 0,
        };
        assert!(ev.validate(&t).is_err());
        ev.prefixes.clear();
        assert!(ev.validate(&t).is_err());
    }
}
