//! Discrete-event iBGP convergence.
//!
//! Every router owns one FIFO queue of per-prefix work items and a single
//! processing unit. An item takes the router's per-prefix cost; when it
//! completes, the router updates its Adj-RIB-In, re-runs the decision process
//! and, if its best route changed, updates the FIB at that instant and sends
//! per-prefix messages that arrive after the IGP path delay.

mod event;
mod state;
mod timeline;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use event::{apply_event_to_peer, Attribution, EventEffect, EventKind, EventSpec, PeerActivity, RouteChange};
pub use state::{build_initial_state, InitialState, NetworkState, RouterRib};
pub use timeline::{FibAction, FibEntry, FibTimeline, BEGINNING};

use crate::model::{ModelError, Network, Node, PrefixId, Route, RouteAttrs, RouterId};
use crate::Micros;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("invalid processing model: {0}")]
    InvalidProcessing(String),
    #[error("configuration does not converge within {rounds} rounds")]
    NonConverging { rounds: usize },
    #[error("runaway simulation: more than {limit} queued work items")]
    Runaway { limit: usize },
}

/// Control-plane processing delay per router.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingModel {
    /// Indexed by router id.
    pub per_prefix_cost: Vec<Micros>,
    /// Each item's cost is drawn uniformly from `cost * (1 ± jitter)`.
    pub jitter: f64,
}

impl ProcessingModel {
    /// Calibration default: 100 prefixes take 9.5 ms.
    pub const DEFAULT_PER_PREFIX_COST: Micros = 95;

    pub fn uniform(num_routers: usize, cost: Micros) -> Self {
        Self {
            per_prefix_cost: vec![cost; num_routers],
            jitter: 0.0,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn validate(&self, num_routers: usize) -> Result<(), SimError> {
        if self.per_prefix_cost.len() != num_routers {
            return Err(SimError::InvalidProcessing(format!(
                "{} costs for {num_routers} routers",
                self.per_prefix_cost.len()
            )));
        }
        if self.per_prefix_cost.iter().any(|&c| c <= 0) {
            return Err(SimError::InvalidProcessing("per-prefix cost must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(SimError::InvalidProcessing("jitter must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Largest deviation from the nominal cost, in whole microseconds.
    fn jitter_span(&self, router: RouterId) -> Micros {
        (self.per_prefix_cost[router.index()] as f64 * self.jitter).floor() as Micros
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    Update(RouteAttrs),
    Withdraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BgpMessage {
    pub id: u64,
    pub from: Node,
    pub to: Node,
    pub prefix: PrefixId,
    pub kind: MessageKind,
    pub sent_at: Micros,
    pub arrives_at: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub max_queued_items: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_queued_items: 100_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub timelines: FibTimeline,
    /// In emission order.
    pub messages: Vec<BgpMessage>,
    /// Last FIB change or message arrival, whichever is later.
    pub converged_at: Micros,
    pub last_message_at: Micros,
    pub activity: PeerActivity,
    pub final_state: NetworkState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct WorkItem {
    from: Node,
    prefix: PrefixId,
    payload: Option<RouteAttrs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Completion(RouterId),
    Arrival(RouterId, WorkItem),
}

/// Heap key: simultaneous events resolve completions first, then arrivals by
/// (sender, prefix order), then insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Scheduled {
    at: Micros,
    class: u8,
    sender: Node,
    rank: u32,
    seq: u64,
    what: Pending,
}

#[derive(Debug, Default)]
struct RouterQueue {
    items: VecDeque<WorkItem>,
    busy: Option<WorkItem>,
}

struct Engine<'a> {
    net: &'a Network,
    processing: &'a ProcessingModel,
    ranks: std::collections::BTreeMap<PrefixId, u32>,
    state: NetworkState,
    timelines: FibTimeline,
    messages: Vec<BgpMessage>,
    heap: BinaryHeap<Reverse<Scheduled>>,
    queues: Vec<RouterQueue>,
    queued: usize,
    seq: u64,
    rng: ChaCha8Rng,
    limit: usize,
    last_arrival: Micros,
}

impl Engine<'_> {
    fn rank(&self, prefix: PrefixId) -> u32 {
        self.ranks.get(&prefix).copied().unwrap_or(u32::MAX)
    }

    fn schedule(&mut self, at: Micros, sender: Node, rank: u32, what: Pending) {
        let class = match what {
            Pending::Completion(_) => 0,
            Pending::Arrival(..) => 1,
        };
        self.seq += 1;
        self.heap.push(Reverse(Scheduled {
            at,
            class,
            sender,
            rank,
            seq: self.seq,
            what,
        }));
    }

    fn send(&mut self, from: Node, to: RouterId, prefix: PrefixId, payload: Option<RouteAttrs>, sent_at: Micros, delay: Micros) {
        let msg = BgpMessage {
            id: self.messages.len() as u64,
            from,
            to: Node::Router(to),
            prefix,
            kind: payload.map_or(MessageKind::Withdraw, MessageKind::Update),
            sent_at,
            arrives_at: sent_at + delay,
        };
        self.messages.push(msg);
        let rank = self.rank(prefix);
        self.schedule(
            msg.arrives_at,
            from,
            rank,
            Pending::Arrival(to, WorkItem { from, prefix, payload }),
        );
    }

    fn start_next(&mut self, r: RouterId, now: Micros) {
        let q = &mut self.queues[r.index()];
        if q.busy.is_some() {
            return;
        }
        let Some(item) = q.items.pop_front() else {
            return;
        };
        q.busy = Some(item);
        self.queued -= 1;
        let span = self.processing.jitter_span(r);
        let jitter = if span > 0 { self.rng.gen_range(-span..=span) } else { 0 };
        let cost = self.processing.per_prefix_cost[r.index()] + jitter;
        self.schedule(now + cost, Node::Router(r), 0, Pending::Completion(r));
    }

    fn complete(&mut self, r: RouterId, now: Micros) {
        let item = self.queues[r.index()].busy.take().expect("completion without work");
        match item.from {
            Node::Peer(peer) => {
                let route = item.payload.map(|a| Route {
                    prefix: a.prefix,
                    origin_peer: peer,
                    egress: r,
                    as_path_len: a.as_path_len,
                    cluster_list: a.cluster_list,
                    learned_from: crate::model::LearnedFrom::External,
                    igp_cost_to_egress: 0,
                });
                self.state.install(r, item.from, item.prefix, route);
            }
            Node::Router(sender) => self.state.receive(self.net, r, sender, item.prefix, item.payload),
        }
        if self.state.reselect(r, item.prefix).is_some() {
            self.timelines
                .record(r, item.prefix, now, self.state.action(r, item.prefix));
            for (nb, attrs) in self.state.pending_adverts(self.net, r, item.prefix) {
                self.state.commit_advert(r, nb, item.prefix, attrs);
                let delay = self.net.igp.path_delay(r, nb);
                self.send(Node::Router(r), nb, item.prefix, attrs, now, delay);
            }
        }
        self.start_next(r, now);
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(ev)) = self.heap.pop() {
            match ev.what {
                Pending::Completion(r) => self.complete(r, ev.at),
                Pending::Arrival(r, item) => {
                    self.last_arrival = self.last_arrival.max(ev.at);
                    self.queues[r.index()].items.push_back(item);
                    self.queued += 1;
                    if self.queued > self.limit {
                        return Err(SimError::Runaway { limit: self.limit });
                    }
                    self.start_next(r, ev.at);
                }
            }
        }
        Ok(())
    }
}

/// Executes `event` against the converged `initial` state.
pub fn run_event(
    net: &Network,
    initial: &InitialState,
    event: &EventSpec,
    processing: &ProcessingModel,
    seed: u64,
) -> Result<SimOutcome, SimError> {
    run_event_with(net, initial, event, processing, seed, SimOptions::default())
}

pub fn run_event_with(
    net: &Network,
    initial: &InitialState,
    event: &EventSpec,
    processing: &ProcessingModel,
    seed: u64,
    options: SimOptions,
) -> Result<SimOutcome, SimError> {
    processing.validate(net.topology.num_routers())?;
    let effect = apply_event_to_peer(&net.topology, event, &initial.external_routes)?;
    let mut timelines = initial.timelines.clone();
    let mut state = initial.state.clone();
    for &p in &event.prefixes {
        if !state.prefixes().contains(&p) {
            state.add_prefix(p);
            for r in net.topology.routers() {
                timelines.set_initial(r, p, FibAction::BlackHole);
            }
        }
    }

    let mut engine = Engine {
        net,
        processing,
        ranks: event.ranks(),
        state,
        timelines,
        messages: Vec::new(),
        heap: BinaryHeap::new(),
        queues: (0..net.topology.num_routers()).map(|_| RouterQueue::default()).collect(),
        queued: 0,
        seq: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
        limit: options.max_queued_items,
        last_arrival: event.time,
    };

    let peer = net.topology.peer(event.at_peer);
    for change in &effect.changes {
        engine.send(
            Node::Peer(event.at_peer),
            peer.attached_to,
            change.prefix,
            change.new.map(|r| r.attrs()),
            event.time,
            peer.propagation_delay,
        );
    }
    engine.run()?;

    let last_message_at = engine.messages.iter().map(|m| m.arrives_at).max().unwrap_or(event.time);
    let converged_at = engine
        .timelines
        .last_change()
        .map_or(engine.last_arrival, |t| t.max(engine.last_arrival));
    Ok(SimOutcome {
        timelines: engine.timelines,
        messages: engine.messages,
        converged_at,
        last_message_at,
        activity: effect.activity,
        final_state: engine.state,
    })
}
