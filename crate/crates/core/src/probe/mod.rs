//! Probe packets through the time-varying data plane.
//!
//! A probe leaves a source router at some instant and is forwarded hop by hop:
//! every router applies the FIB action that is active when the packet arrives,
//! links add their propagation delay, and forwarding inside a router is
//! instantaneous. The same walk is evaluated symbolically over whole ranges of
//! departure times to obtain exact violation intervals.

mod exact;
mod series;

use serde::{Deserialize, Serialize};

pub use exact::{exact_violation_intervals, fate_pieces, total_length, FatePiece, Interval, PieceFate};
pub use series::{probe_series, SeriesResult};

use crate::model::{Network, PeerId, PrefixId, RouterId};
use crate::sim::{Attribution, FibAction, FibTimeline, PeerActivity};
use crate::{Micros, SEC};

/// Departure instants used to evaluate the stable states. Far enough from any
/// simulated instant that every walk sees only the initial or final FIBs.
pub const FAR_PAST: Micros = -(1 << 52);
pub const FAR_FUTURE: Micros = 1 << 52;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProbeError {
    #[error("probe rate {0} pps does not divide one second into whole microseconds")]
    InvalidRate(u64),
    #[error("probe window [{0}, {1}) must start before and end after the event")]
    InvalidWindow(Micros, Micros),
    #[error("ttl must be positive")]
    InvalidTtl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub rate_pps: u64,
    pub sources: Vec<RouterId>,
    pub prefixes: Vec<PrefixId>,
    /// Probing window relative to the event, `start < 0 < end`.
    pub window: (Micros, Micros),
    pub ttl: u32,
    pub rpf_drop: bool,
    pub attribution: Attribution,
    /// Probes departing this close to either end of the window must all be
    /// delivered for the sample to count.
    pub edge_span: Micros,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            rate_pps: 1000,
            sources: Vec::new(),
            prefixes: Vec::new(),
            window: (-2 * SEC, 2 * SEC),
            ttl: 64,
            rpf_drop: true,
            attribution: Attribution::AtEmission,
            edge_span: SEC,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.rate_pps == 0 || !(SEC as u64).is_multiple_of(self.rate_pps) {
            return Err(ProbeError::InvalidRate(self.rate_pps));
        }
        if !(self.window.0 < 0 && 0 < self.window.1) {
            return Err(ProbeError::InvalidWindow(self.window.0, self.window.1));
        }
        if self.ttl == 0 {
            return Err(ProbeError::InvalidTtl);
        }
        Ok(())
    }

    /// Inter-probe gap in microseconds.
    pub fn spacing(&self) -> Micros {
        SEC / self.rate_pps as Micros
    }
}

/// The data plane a probe is walked through.
#[derive(Debug, Clone, Copy)]
pub struct DataPlane<'a> {
    pub net: &'a Network,
    pub timelines: &'a FibTimeline,
    pub activity: &'a PeerActivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub router: RouterId,
    pub arrived_at: Micros,
    /// TTL carried by the packet when it reached the router.
    pub ttl: u32,
    pub action: FibAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Terminal {
    Delivered { peer: PeerId, at: Micros },
    DroppedBlackHole { router: RouterId, at: Micros },
    DroppedRpf { router: RouterId, at: Micros },
    DroppedTtl { router: RouterId, at: Micros },
    DroppedInactivePeer { peer: PeerId, at: Micros },
}

impl Terminal {
    pub fn is_dropped(&self) -> bool {
        !matches!(self, Terminal::Delivered { .. })
    }

    /// Re-evaluates a peer hand-off under another attribution rule.
    pub fn reclassify(self, prefix: PrefixId, activity: &PeerActivity, attribution: Attribution) -> Terminal {
        match self {
            Terminal::Delivered { peer, at } | Terminal::DroppedInactivePeer { peer, at } => {
                if activity.is_active(peer, prefix, at, attribution) {
                    Terminal::Delivered { peer, at }
                } else {
                    Terminal::DroppedInactivePeer { peer, at }
                }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Walk {
    pub hops: Vec<Hop>,
    pub terminal: Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeFate {
    pub src: RouterId,
    pub prefix: PrefixId,
    pub seq: u64,
    pub departed_at: Micros,
    pub hops: Vec<Hop>,
    pub terminal: Terminal,
    pub violating: bool,
}

/// Walks one packet from `src` toward `prefix`, departing at `depart`.
pub fn walk_packet(dp: DataPlane<'_>, src: RouterId, prefix: PrefixId, depart: Micros, cfg: &ProbeConfig) -> Walk {
    let mut hops = Vec::new();
    let terminal = walk_with(dp, src, prefix, depart, cfg, |h| hops.push(h));
    Walk { hops, terminal }
}

/// Like [`walk_packet`] without collecting hops.
pub fn walk_terminal(dp: DataPlane<'_>, src: RouterId, prefix: PrefixId, depart: Micros, cfg: &ProbeConfig) -> Terminal {
    walk_with(dp, src, prefix, depart, cfg, |_| {})
}

fn walk_with(
    dp: DataPlane<'_>,
    src: RouterId,
    prefix: PrefixId,
    depart: Micros,
    cfg: &ProbeConfig,
    mut on_hop: impl FnMut(Hop),
) -> Terminal {
    let topo = &dp.net.topology;
    let (mut at, mut t, mut ttl, mut prev) = (src, depart, cfg.ttl, None);
    loop {
        let action = dp.timelines.action_at(at, prefix, t);
        on_hop(Hop {
            router: at,
            arrived_at: t,
            ttl,
            action,
        });
        match action {
            FibAction::BlackHole => return Terminal::DroppedBlackHole { router: at, at: t },
            FibAction::DeliverExternal(peer) => {
                let arrival = t + topo.peer(peer).propagation_delay;
                return if dp.activity.is_active(peer, prefix, arrival, cfg.attribution) {
                    Terminal::Delivered { peer, at: arrival }
                } else {
                    Terminal::DroppedInactivePeer { peer, at: arrival }
                };
            }
            FibAction::Forward(egress) => {
                let next = dp.net.igp.next_hop(at, egress).expect("egress is another router");
                if cfg.rpf_drop && prev == Some(next) {
                    return Terminal::DroppedRpf { router: at, at: t };
                }
                if ttl <= 1 {
                    return Terminal::DroppedTtl { router: at, at: t };
                }
                ttl -= 1;
                t += link_delay(dp.net, at, next);
                prev = Some(at);
                at = next;
            }
        }
    }
}

pub fn link_delay(net: &Network, a: RouterId, b: RouterId) -> Micros {
    net.topology
        .link_between(a, b)
        .expect("IGP next hop is adjacent")
        .propagation_delay
}

/// Whether packets from `src` reach `prefix` in both the initial and the final
/// stable state.
pub fn stable_states_deliver(dp: DataPlane<'_>, src: RouterId, prefix: PrefixId, cfg: &ProbeConfig) -> bool {
    !walk_terminal(dp, src, prefix, FAR_PAST, cfg).is_dropped()
        && !walk_terminal(dp, src, prefix, FAR_FUTURE, cfg).is_dropped()
}

/// Exact and probe-based violation time of one (source, prefix).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub src: RouterId,
    pub prefix: PrefixId,
    /// Absolute departure instants.
    pub exact_intervals: Vec<Interval>,
    pub exact_total: Micros,
    pub probe_estimate: Micros,
    pub dropped_count: u64,
    /// Estimate under the other attribution rule.
    pub alt_estimate: Micros,
    pub rate_pps: u64,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{ExternalPeer, IbgpConfig, Link, Route, Topology};
    use crate::sim::{build_initial_state, run_event, EventKind, EventSpec, ProcessingModel, SimOutcome};
    use crate::MS;

    /// Path of three routers with 10 ms links and 10 ms peer links; the
    /// preferred peer sits at r1, the backup at `backup_at`.
    pub(crate) fn path3(backup_at: u32, x: Micros) -> (Network, SimOutcome) {
        let link = |a, b| Link {
            a: RouterId(a),
            b: RouterId(b),
            propagation_delay: 10 * MS,
            igp_cost: 1,
        };
        let peer = |name: &str, r| ExternalPeer {
            name: name.into(),
            attached_to: RouterId(r),
            propagation_delay: 10 * MS,
        };
        let topo = Topology::new(
            vec!["r1".into(), "r2".into(), "r3".into()],
            vec![link(0, 1), link(1, 2)],
            vec![peer("e1", 0), peer("e2", backup_at)],
        )
        .unwrap();
        let routes = vec![
            Route::external(&topo, PeerId(0), PrefixId(0), 1),
            Route::external(&topo, PeerId(1), PrefixId(0), 2),
        ];
        let net = Network::new(topo, IbgpConfig::full_mesh()).unwrap();
        let init = build_initial_state(&net, &routes).unwrap();
        let ev = EventSpec {
            kind: EventKind::Withdraw,
            at_peer: PeerId(0),
            prefixes: vec![PrefixId(0)],
            time: 0,
        };
        let out = run_event(&net, &init, &ev, &ProcessingModel::uniform(3, x), 0).unwrap();
        (net, out)
    }

    pub(crate) fn dp<'a>(net: &'a Network, out: &'a SimOutcome) -> DataPlane<'a> {
        DataPlane {
            net,
            timelines: &out.timelines,
            activity: &out.activity,
        }
    }

    #[test]
    fn in_flight_packet_dropped_at_withdrawing_peer() {
        let (net, out) = path3(2, 100 * MS);
        let cfg = ProbeConfig::default();
        let w = walk_packet(dp(&net, &out), RouterId(1), PrefixId(0), -20 * MS, &cfg);
        assert_eq!(w.terminal, Terminal::DroppedInactivePeer { peer: PeerId(0), at: 0 });
        assert_eq!(w.hops.len(), 2);
        let w = walk_packet(dp(&net, &out), RouterId(1), PrefixId(0), -20 * MS - 1, &cfg);
        assert_eq!(w.terminal, Terminal::Delivered { peer: PeerId(0), at: -1 });
        assert!(stable_states_deliver(dp(&net, &out), RouterId(1), PrefixId(0), &cfg));
    }

    #[test]
    fn after_convergence_delivered_to_backup() {
        let (net, out) = path3(2, 100 * MS);
        let w = walk_packet(dp(&net, &out), RouterId(1), PrefixId(0), 10 * SEC, &ProbeConfig::default());
        assert_eq!(
            w.terminal,
            Terminal::Delivered {
                peer: PeerId(1),
                at: 10 * SEC + 20 * MS
            }
        );
    }

    #[test]
    fn deflected_through_middle_backup() {
        let x = 100 * MS;
        let (net, out) = path3(1, x);
        let w = walk_packet(dp(&net, &out), RouterId(2), PrefixId(0), 2 * x + 20 * MS, &ProbeConfig::default());
        assert_eq!(w.hops[1].action, FibAction::DeliverExternal(PeerId(1)));
        assert!(!w.terminal.is_dropped());
    }

    #[test]
    fn loops_end_in_rpf_or_ttl() {
        let (net, mut out) = path3(2, 100 * MS);
        // Force a two-router loop: r1 points at r3, r2 points back at r1.
        let mut t = FibTimeline::new();
        t.set_initial(RouterId(0), PrefixId(0), FibAction::Forward(RouterId(2)));
        t.set_initial(RouterId(1), PrefixId(0), FibAction::Forward(RouterId(0)));
        out.timelines = t;
        let mut cfg = ProbeConfig::default();
        let w = walk_packet(dp(&net, &out), RouterId(0), PrefixId(0), 0, &cfg);
        assert_eq!(
            w.terminal,
            Terminal::DroppedRpf {
                router: RouterId(1),
                at: 10 * MS
            }
        );
        cfg.rpf_drop = false;
        cfg.ttl = 5;
        let w = walk_packet(dp(&net, &out), RouterId(0), PrefixId(0), 0, &cfg);
        assert_eq!(w.hops.len(), 5);
        assert!(matches!(w.terminal, Terminal::DroppedTtl { router: RouterId(0), at } if at == 40 * MS));
        assert!(w.hops.windows(2).all(|p| p[0].arrived_at < p[1].arrived_at));
    }

    #[test]
    fn reclassify_switches_attribution() {
        let (net, out) = path3(2, 100 * MS);
        let cfg = ProbeConfig::default();
        let term = walk_terminal(dp(&net, &out), RouterId(0), PrefixId(0), 0, &cfg);
        assert!(term.is_dropped());
        // Received at the border 10 ms after emission, handed back 10 ms later.
        let alt = term.reclassify(PrefixId(0), &out.activity, Attribution::EgressReceipt);
        assert!(!alt.is_dropped());
        let late = walk_terminal(dp(&net, &out), RouterId(0), PrefixId(0), 10 * MS, &cfg);
        assert!(late.reclassify(PrefixId(0), &out.activity, Attribution::EgressReceipt).is_dropped());
    }

    #[test]
    fn config_validation() {
        let mut c = ProbeConfig::default();
        assert!(c.validate().is_ok());
        c.rate_pps = 3;
        assert_eq!(c.validate(), Err(ProbeError::InvalidRate(3)));
        c.rate_pps = 1000;
        c.window = (0, 10);
        assert!(c.validate().is_err());
        c.window = (-10, 10);
        c.ttl = 0;
        assert_eq!(c.validate(), Err(ProbeError::InvalidTtl));
    }
}
