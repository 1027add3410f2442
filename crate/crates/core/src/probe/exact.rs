use serde::{Deserialize, Serialize};

use super::{link_delay, stable_states_deliver, DataPlane, ProbeConfig, FAR_FUTURE, FAR_PAST};
use crate::model::{PeerId, PrefixId, RouterId};
use crate::sim::FibAction;
use crate::Micros;

/// Half-open range of departure instants `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: Micros,
    pub end: Micros,
}

impl Interval {
    pub fn len(&self) -> Micros {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: Micros) -> bool {
        self.start <= t && t < self.end
    }
}

/// How every packet departing within `range` ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PieceFate {
    Delivered(PeerId),
    DroppedBlackHole(RouterId),
    DroppedRpf(RouterId),
    DroppedTtl(RouterId),
    DroppedInactivePeer(PeerId),
}

impl PieceFate {
    pub fn is_dropped(&self) -> bool {
        !matches!(self, PieceFate::Delivered(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FatePiece {
    pub range: Interval,
    pub fate: PieceFate,
}

struct Pending {
    range: Interval,
    router: RouterId,
    /// Time spent in flight before reaching `router`; independent of the
    /// departure instant.
    offset: Micros,
    prev: Option<RouterId>,
    ttl: u32,
}

/// Partitions the departure instants in `[FAR_PAST, FAR_FUTURE)` into ranges
/// with a constant fate, sorted by start.
///
/// Each router on the way splits the incoming range at the departure images of
/// its FIB changes (change instant minus time in flight), and a hand-off to a
/// peer splits at the image of the peer's inactivity threshold.
pub fn fate_pieces(dp: DataPlane<'_>, src: RouterId, prefix: PrefixId, cfg: &ProbeConfig) -> Vec<FatePiece> {
    let topo = &dp.net.topology;
    let mut out = Vec::new();
    let mut stack = vec![Pending {
        range: Interval {
            start: FAR_PAST,
            end: FAR_FUTURE,
        },
        router: src,
        offset: 0,
        prev: None,
        ttl: cfg.ttl,
    }];
    while let Some(p) = stack.pop() {
        let entries = dp.timelines.entries(p.router, prefix);
        let actions: Vec<(Interval, FibAction)> = if entries.is_empty() {
            vec![(p.range, FibAction::BlackHole)]
        } else {
            entries
                .iter()
                .enumerate()
                .filter_map(|(i, e)| {
                    let from = e.since.saturating_sub(p.offset);
                    let to = entries.get(i + 1).map_or(Micros::MAX, |n| n.since - p.offset);
                    let range = Interval {
                        start: from.max(p.range.start),
                        end: to.min(p.range.end),
                    };
                    (!range.is_empty()).then_some((range, e.action))
                })
                .collect()
        };
        for (range, action) in actions {
            match action {
                FibAction::BlackHole => out.push(FatePiece {
                    range,
                    fate: PieceFate::DroppedBlackHole(p.router),
                }),
                FibAction::DeliverExternal(peer) => {
                    let arrival_offset = p.offset + topo.peer(peer).propagation_delay;
                    let cut = dp
                        .activity
                        .inactive_from(peer, prefix, cfg.attribution)
                        .map_or(Micros::MAX, |t| t - arrival_offset);
                    let live = Interval {
                        start: range.start,
                        end: range.end.min(cut),
                    };
                    let dead = Interval {
                        start: range.start.max(cut),
                        end: range.end,
                    };
                    if !live.is_empty() {
                        out.push(FatePiece {
                            range: live,
                            fate: PieceFate::Delivered(peer),
                        });
                    }
                    if !dead.is_empty() {
                        out.push(FatePiece {
                            range: dead,
                            fate: PieceFate::DroppedInactivePeer(peer),
                        });
                    }
                }
                FibAction::Forward(egress) => {
                    let next = dp.net.igp.next_hop(p.router, egress).expect("egress is another router");
                    if cfg.rpf_drop && p.prev == Some(next) {
                        out.push(FatePiece {
                            range,
                            fate: PieceFate::DroppedRpf(p.router),
                        });
                    } else if p.ttl <= 1 {
                        out.push(FatePiece {
                            range,
                            fate: PieceFate::DroppedTtl(p.router),
                        });
                    } else {
                        stack.push(Pending {
                            range,
                            router: next,
                            offset: p.offset + link_delay(dp.net, p.router, next),
                            prev: Some(p.router),
                            ttl: p.ttl - 1,
                        });
                    }
                }
            }
        }
    }
    out.sort();
    out
}

/// Maximal ranges of departure instants whose packets are dropped although
/// both stable states deliver them.
pub fn exact_violation_intervals(dp: DataPlane<'_>, src: RouterId, prefix: PrefixId, cfg: &ProbeConfig) -> Vec<Interval> {
    if !stable_states_deliver(dp, src, prefix, cfg) {
        return Vec::new();
    }
    let mut merged: Vec<Interval> = Vec::new();
    for piece in fate_pieces(dp, src, prefix, cfg) {
        if !piece.fate.is_dropped() {
            continue;
        }
        match merged.last_mut() {
            Some(last) if last.end == piece.range.start => last.end = piece.range.end,
            _ => merged.push(piece.range),
        }
    }
    merged
}

pub fn total_length(intervals: &[Interval]) -> Micros {
    intervals.iter().map(Interval::len).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::tests::{dp, path3};
    use crate::probe::walk_terminal;
    use crate::MS;
    use proptest::prelude::*;

    #[test]
    fn path3_middle_router() {
        for x in [1, 10, 100, 700] {
            let x = x * MS;
            let (net, out) = path3(2, x);
            let cfg = ProbeConfig::default();
            let iv = exact_violation_intervals(dp(&net, &out), RouterId(1), PrefixId(0), &cfg);
            assert_eq!(
                iv,
                vec![Interval {
                    start: -20 * MS,
                    end: 3 * x + 40 * MS
                }]
            );
            assert_eq!(total_length(&iv), 3 * x + 60 * MS);
            let r1 = exact_violation_intervals(dp(&net, &out), RouterId(0), PrefixId(0), &cfg);
            assert_eq!(r1[0].start, -10 * MS);
        }
    }

    #[test]
    fn backup_in_the_middle_splits_far_router() {
        for x in [1, 10, 100, 700] {
            let x = x * MS;
            let (net, out) = path3(1, x);
            let iv = exact_violation_intervals(dp(&net, &out), RouterId(2), PrefixId(0), &ProbeConfig::default());
            assert_eq!(
                iv,
                vec![
                    Interval {
                        start: -30 * MS,
                        end: 2 * x + 10 * MS
                    },
                    Interval {
                        start: 2 * x + 30 * MS,
                        end: 3 * x + 30 * MS
                    },
                ]
            );
        }
    }

    #[test]
    fn no_event_no_violation() {
        let (net, mut out) = path3(2, 100 * MS);
        out.timelines = {
            let mut t = crate::sim::FibTimeline::new();
            for r in 0..3 {
                let e = out.timelines.entries(RouterId(r), PrefixId(0))[0];
                t.set_initial(RouterId(r), PrefixId(0), e.action);
            }
            t
        };
        out.activity = crate::sim::PeerActivity::always_active();
        for r in 0..3 {
            assert!(exact_violation_intervals(dp(&net, &out), RouterId(r), PrefixId(0), &ProbeConfig::default()).is_empty());
        }
    }

    #[test]
    fn pieces_cover_the_domain() {
        let (net, out) = path3(1, 10 * MS);
        let pieces = fate_pieces(dp(&net, &out), RouterId(2), PrefixId(0), &ProbeConfig::default());
        assert_eq!(pieces.first().unwrap().range.start, FAR_PAST);
        assert_eq!(pieces.last().unwrap().range.end, FAR_FUTURE);
        assert!(pieces.windows(2).all(|w| w[0].range.end == w[1].range.start));
    }

    proptest! {
        /// The symbolic pieces agree with walking a single packet, including
        /// one microsecond either side of every boundary.
        #[test]
        fn pieces_match_walks(backup in 1u32..3, x in 1i64..300, src in 0u32..3, rpf: bool, ttl in 1u32..6) {
            let (net, out) = path3(backup, x * MS);
            let cfg = ProbeConfig { rpf_drop: rpf, ttl, ..ProbeConfig::default() };
            let d = dp(&net, &out);
            let pieces = fate_pieces(d, RouterId(src), PrefixId(0), &cfg);
            for piece in pieces.iter().filter(|p| p.range.start > FAR_PAST) {
                for t in [piece.range.start - 1, piece.range.start, piece.range.end - 1] {
                    let term = walk_terminal(d, RouterId(src), PrefixId(0), t, &cfg);
                    let expect = pieces.iter().find(|p| p.range.contains(t)).unwrap().fate;
                    prop_assert_eq!(term.is_dropped(), expect.is_dropped(), "t={}", t);
                }
            }
        }
    }
}
