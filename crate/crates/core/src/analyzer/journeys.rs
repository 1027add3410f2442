use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::AnalyzeError;
use crate::model::{PeerId, PrefixId};
use crate::sim::{Attribution, PeerActivity};
use crate::trace::{BgpMsgKind, HardwareMapping, LinkRef, NodeId, RecordBody, Stage, TraceRecord};
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JourneyKey {
    pub src: NodeId,
    pub prefix: u32,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub ts: Micros,
    pub link: LinkRef,
    pub stage: Stage,
    pub ttl: u32,
}

/// Where a reconstructed probe ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JourneyFate {
    Delivered { peer: NodeId, at: Micros },
    DroppedInactivePeer { peer: NodeId, at: Micros },
    /// Last seen entering (or, if the capture lost it in transit, leaving) `node`.
    Dropped { node: NodeId, last_seen: Micros },
}

impl JourneyFate {
    pub fn is_dropped(&self) -> bool {
        !matches!(self, JourneyFate::Delivered { .. })
    }
}

/// Chronological position of a record among those sharing a timestamp: a
/// packet arrives at a node before it leaves it again.
pub(crate) fn stage_rank(s: Stage) -> u8 {
    match s {
        Stage::PostDelay => 0,
        Stage::Undelayed => 1,
        Stage::PreDelay => 2,
    }
}

/// Groups probe records by (source, prefix, sequence number) and orders each
/// group chronologically. Input order does not matter.
pub fn reconstruct_journeys(
    records: &[TraceRecord],
    mapping: &HardwareMapping,
) -> Result<BTreeMap<JourneyKey, Vec<Observation>>, AnalyzeError> {
    let index = mapping.index();
    let mut groups: HashMap<JourneyKey, Vec<Observation>> = HashMap::new();
    for r in records {
        let RecordBody::Probe {
            link,
            stage,
            src,
            prefix,
            seq,
            ttl,
        } = r.body
        else {
            continue;
        };
        if index.delay(link).is_none() {
            return Err(AnalyzeError::Mapping(format!("unknown link {link}")));
        }
        groups.entry(JourneyKey { src, prefix, seq }).or_default().push(Observation {
            ts: r.ts,
            link,
            stage,
            ttl,
        });
    }
    let prober = mapping.prober;
    let mut out = BTreeMap::new();
    for (key, mut obs) in groups {
        // Zero-delay links put several hops at one instant. The TTL falls
        // with every hop after the injection, which carries the initial TTL.
        obs.sort_by_key(|o| (o.ts, Reverse(o.ttl), o.link.from != prober, stage_rank(o.stage), o.link));
        if let Some(w) = obs
            .windows(2)
            .find(|w| (w[0].link, w[0].stage, w[0].ttl) == (w[1].link, w[1].stage, w[1].ttl))
        {
            return Err(AnalyzeError::Malformed(format!(
                "probe {key:?} captured twice on {} ({})",
                w[0].link,
                w[0].stage.as_str()
            )));
        }
        out.insert(key, obs);
    }
    Ok(out)
}

/// Withdrawals as seen on the peer links: a withdraw's first capture marks
/// the emission instant.
pub fn infer_peer_activity(records: &[TraceRecord], mapping: &HardwareMapping) -> PeerActivity {
    let index = mapping.index();
    let mut emitted: BTreeMap<(NodeId, u32), (Micros, Micros)> = BTreeMap::new();
    for r in records {
        let RecordBody::Bgp {
            link,
            stage,
            msg: BgpMsgKind::Withdraw,
            prefix: Some(prefix),
            session,
            ..
        } = r.body
        else {
            continue;
        };
        if !mapping.is_peer(session.from) || link != session {
            continue;
        }
        let Some(delay) = index.delay(link) else { continue };
        let at = if stage.is_departure() { r.ts } else { r.ts - delay };
        emitted.entry((session.from, prefix)).or_insert((at, delay));
    }
    let mut activity = PeerActivity::always_active();
    for ((peer, prefix), (at, delay)) in emitted {
        let peer = mapping.peer_of(peer).expect("checked above");
        activity.mark_withdrawn(peer, PrefixId(prefix), at, delay);
    }
    activity
}

pub fn classify_journey(
    key: &JourneyKey,
    obs: &[Observation],
    mapping: &HardwareMapping,
    activity: &PeerActivity,
    attribution: Attribution,
) -> JourneyFate {
    let last = obs.last().expect("journeys are non-empty");
    if last.stage.is_arrival() {
        if let Some(PeerId(p)) = mapping.peer_of(last.link.to) {
            let peer = last.link.to;
            return if activity.is_active(PeerId(p), PrefixId(key.prefix), last.ts, attribution) {
                JourneyFate::Delivered { peer, at: last.ts }
            } else {
                JourneyFate::DroppedInactivePeer { peer, at: last.ts }
            };
        }
        JourneyFate::Dropped {
            node: last.link.to,
            last_seen: last.ts,
        }
    } else {
        JourneyFate::Dropped {
            node: last.link.from,
            last_seen: last.ts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::tests::path3;
    use crate::trace::{HardwareMapping, TraceRecord};
    use crate::MS;
    use proptest::prelude::*;

    fn mapping() -> HardwareMapping {
        HardwareMapping::from_network(&path3(2, MS).0)
    }

    fn probe(ts: Micros, from: u32, to: u32, stage: Stage, ttl: u32) -> TraceRecord {
        TraceRecord {
            ts,
            body: RecordBody::Probe {
                link: LinkRef { from, to },
                stage,
                src: 0,
                prefix: 0,
                seq: 1,
                ttl,
            },
        }
    }

    /// r1 -> r2 -> r3 -> e2 (node 4), 10 ms per link.
    fn delivered_walk() -> Vec<TraceRecord> {
        vec![
            probe(0, 5, 0, Stage::Undelayed, 64),
            probe(0, 0, 1, Stage::PreDelay, 64),
            probe(10_000, 0, 1, Stage::PostDelay, 64),
            probe(10_000, 1, 2, Stage::PreDelay, 63),
            probe(20_000, 1, 2, Stage::PostDelay, 63),
            probe(20_000, 2, 4, Stage::PreDelay, 62),
            probe(30_000, 2, 4, Stage::PostDelay, 62),
        ]
    }

    fn fate_of(records: &[TraceRecord], activity: &PeerActivity) -> JourneyFate {
        let m = mapping();
        let j = reconstruct_journeys(records, &m).unwrap();
        let (k, obs) = j.iter().next().unwrap();
        classify_journey(k, obs, &m, activity, Attribution::AtEmission)
    }

    #[test]
    fn three_hop_journey_is_delivered() {
        let fate = fate_of(&delivered_walk(), &PeerActivity::always_active());
        assert_eq!(fate, JourneyFate::Delivered { peer: 4, at: 30_000 });
    }

    #[test]
    fn vanishing_probe_is_dropped_at_next_router() {
        let fate = fate_of(&delivered_walk()[..3], &PeerActivity::always_active());
        assert_eq!(fate, JourneyFate::Dropped { node: 1, last_seen: 10_000 });
        let fate = fate_of(&delivered_walk()[..1], &PeerActivity::always_active());
        assert_eq!(fate, JourneyFate::Dropped { node: 0, last_seen: 0 });
    }

    #[test]
    fn zero_delay_hops_at_one_instant_keep_their_order() {
        // a border router handing the probe straight to a peer on an undelayed link
        let mut net = path3(2, MS).0;
        let peers = net.topology.peers().to_vec();
        let topo = crate::model::Topology::new(
            net.topology.router_names().to_vec(),
            net.topology.links().to_vec(),
            peers
                .into_iter()
                .map(|p| crate::model::ExternalPeer { propagation_delay: 0, ..p })
                .collect(),
        )
        .unwrap();
        net = crate::model::Network::new(topo, net.ibgp).unwrap();
        let m = HardwareMapping::from_network(&net);
        let t = [probe(0, 0, 3, Stage::Undelayed, 64), probe(0, 5, 0, Stage::Undelayed, 64)];
        let j = reconstruct_journeys(&t, &m).unwrap();
        let (k, obs) = j.iter().next().unwrap();
        assert_eq!(obs[0].link.from, 5);
        assert_eq!(
            classify_journey(k, obs, &m, &PeerActivity::always_active(), Attribution::AtEmission),
            JourneyFate::Delivered { peer: 3, at: 0 }
        );
    }

    #[test]
    fn arrival_at_withdrawn_peer_is_dropped() {
        let mut act = PeerActivity::always_active();
        act.mark_withdrawn(PeerId(1), PrefixId(0), 25_000, 10_000);
        assert_eq!(
            fate_of(&delivered_walk(), &act),
            JourneyFate::DroppedInactivePeer { peer: 4, at: 30_000 }
        );
    }

    #[test]
    fn duplicate_capture_is_malformed() {
        let mut t = delivered_walk();
        t.push(t[2]);
        assert!(matches!(reconstruct_journeys(&t, &mapping()), Err(AnalyzeError::Malformed(_))));
        let mut t = delivered_walk();
        t[3] = probe(10_000, 0, 2, Stage::PreDelay, 63);
        assert!(matches!(reconstruct_journeys(&t, &mapping()), Err(AnalyzeError::Mapping(_))));
    }

    #[test]
    fn withdraws_from_peers_define_activity() {
        let m = mapping();
        let w = |ts, stage| TraceRecord {
            ts,
            body: RecordBody::Bgp {
                link: LinkRef { from: 3, to: 0 },
                stage,
                msg: BgpMsgKind::Withdraw,
                prefix: Some(0),
                session: LinkRef { from: 3, to: 0 },
                id: 0,
            },
        };
        let act = infer_peer_activity(&[w(0, Stage::PreDelay), w(10_000, Stage::PostDelay)], &m);
        assert_eq!(act.inactive_from(PeerId(0), PrefixId(0), Attribution::AtEmission), Some(0));
        assert_eq!(act.inactive_from(PeerId(0), PrefixId(0), Attribution::EgressReceipt), Some(20_000));
        // the pre-delay capture lost: recover emission from the arrival
        let act = infer_peer_activity(&[w(10_000, Stage::PostDelay)], &m);
        assert_eq!(act.inactive_from(PeerId(0), PrefixId(0), Attribution::AtEmission), Some(0));
    }

    proptest! {
        #[test]
        fn order_insensitive(perm in Just(delivered_walk()).prop_shuffle()) {
            let m = mapping();
            prop_assert_eq!(reconstruct_journeys(&perm, &m).unwrap(), reconstruct_journeys(&delivered_walk(), &m).unwrap());
        }
    }
}
