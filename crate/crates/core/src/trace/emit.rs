use super::{BgpMsgKind, HardwareMapping, LinkRef, NodeId, RecordBody, Stage, TraceRecord};
use crate::model::{Network, Node, RouterId};
use crate::probe::{ProbeFate, Terminal};
use crate::sim::{BgpMessage, MessageKind};
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitOptions {
    pub capture_start: Micros,
    /// Timestamp of the summary record; nothing later is captured.
    pub capture_end: Micros,
    /// Keep-alives on every iBGP session, starting at `capture_start`.
    pub keepalive_interval: Option<Micros>,
    pub drops: u64,
}

/// Records a packet crossing `link` at `depart`, taking `delay`.
fn crossing(out: &mut Vec<TraceRecord>, depart: Micros, delay: Micros, body: impl Fn(Stage) -> RecordBody) {
    if delay == 0 {
        out.push(TraceRecord {
            ts: depart,
            body: body(Stage::Undelayed),
        });
    } else {
        out.push(TraceRecord {
            ts: depart,
            body: body(Stage::PreDelay),
        });
        out.push(TraceRecord {
            ts: depart + delay,
            body: body(Stage::PostDelay),
        });
    }
}

/// Records for a BGP packet hop by hop along the IGP path; returns its arrival.
fn bgp_packet(
    out: &mut Vec<TraceRecord>,
    net: &Network,
    map: &HardwareMapping,
    msg: (BgpMsgKind, Option<u32>, u64),
    from: Node,
    to: RouterId,
    sent_at: Micros,
) -> Micros {
    let session = LinkRef {
        from: map.node_id(from),
        to: to.0,
    };
    let body = |link: LinkRef| {
        move |stage| RecordBody::Bgp {
            link,
            stage,
            msg: msg.0,
            prefix: msg.1,
            session,
            id: msg.2,
        }
    };
    match from {
        Node::Peer(p) => {
            let d = net.topology.peer(p).propagation_delay;
            crossing(out, sent_at, d, body(session));
            sent_at + d
        }
        Node::Router(a) => {
            let mut t = sent_at;
            for pair in net.igp.path(a, to).windows(2) {
                let d = crate::probe::link_delay(net, pair[0], pair[1]);
                crossing(out, t, d, body(LinkRef { from: pair[0].0, to: pair[1].0 }));
                t += d;
            }
            t
        }
    }
}

fn message_records(out: &mut Vec<TraceRecord>, net: &Network, map: &HardwareMapping, m: &BgpMessage) {
    let kind = match m.kind {
        MessageKind::Update(_) => BgpMsgKind::Update,
        MessageKind::Withdraw => BgpMsgKind::Withdraw,
    };
    let Node::Router(to) = m.to else {
        unreachable!("messages are addressed to routers")
    };
    let arrival = bgp_packet(out, net, map, (kind, Some(m.prefix.0), m.id), m.from, to, m.sent_at);
    debug_assert_eq!(arrival, m.arrives_at);
}

fn probe_records(out: &mut Vec<TraceRecord>, map: &HardwareMapping, fate: &ProbeFate) {
    let body = |from: NodeId, to: NodeId, ttl: u32| {
        move |stage| RecordBody::Probe {
            link: LinkRef { from, to },
            stage,
            src: fate.src.0,
            prefix: fate.prefix.0,
            seq: fate.seq,
            ttl,
        }
    };
    let first = fate.hops.first().expect("walks visit their source");
    crossing(out, fate.departed_at, 0, body(map.prober, fate.src.0, first.ttl));
    for pair in fate.hops.windows(2) {
        let (h, next) = (pair[0], pair[1]);
        crossing(out, h.arrived_at, next.arrived_at - h.arrived_at, body(h.router.0, next.router.0, h.ttl));
    }
    if let Terminal::Delivered { peer, at } | Terminal::DroppedInactivePeer { peer, at } = fate.terminal {
        let last = fate.hops.last().expect("non-empty");
        let peer_node = map.node_id(Node::Peer(peer));
        crossing(out, last.arrived_at, at - last.arrived_at, body(last.router.0, peer_node, last.ttl));
    }
}

/// Everything the capture would have recorded for one sample, sorted by
/// timestamp and closed by the summary record.
pub fn emit_sample_records<'a>(
    net: &Network,
    map: &HardwareMapping,
    messages: &[BgpMessage],
    fates: impl IntoIterator<Item = &'a ProbeFate>,
    opts: &EmitOptions,
) -> Vec<TraceRecord> {
    let mut out = Vec::new();
    for m in messages {
        message_records(&mut out, net, map, m);
    }
    if let Some(every) = opts.keepalive_interval.filter(|&i| i > 0) {
        let mut id = messages.len() as u64;
        let mut t = opts.capture_start;
        while t < opts.capture_end {
            for (a, b) in net.ibgp.sessions(&net.topology) {
                for (from, to) in [(a, b), (b, a)] {
                    let mut tmp = Vec::new();
                    let arrival = bgp_packet(&mut tmp, net, map, (BgpMsgKind::KeepAlive, None, id), Node::Router(from), to, t);
                    if arrival <= opts.capture_end {
                        out.append(&mut tmp);
                        id += 1;
                    }
                }
            }
            t += every;
        }
    }
    for fate in fates {
        probe_records(&mut out, map, fate);
    }
    out.sort_by_key(|r| r.ts);
    out.push(TraceRecord {
        ts: opts.capture_end,
        body: RecordBody::Summary { drops: opts.drops },
    });
    out
}
