use std::collections::{BTreeMap, BTreeSet};

use super::{FibAction, FibTimeline, SimError};
use crate::model::{decide_best, Network, Node, PrefixId, Route, RouteAttrs, RouterId};

/// BGP tables of one router.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouterRib {
    rib_in: BTreeMap<PrefixId, BTreeMap<Node, Route>>,
    best: BTreeMap<PrefixId, Route>,
    rib_out: BTreeMap<(PrefixId, RouterId), RouteAttrs>,
}

impl RouterRib {
    pub fn best(&self, prefix: PrefixId) -> Option<&Route> {
        self.best.get(&prefix)
    }

    pub fn candidates(&self, prefix: PrefixId) -> impl Iterator<Item = &Route> {
        self.rib_in.get(&prefix).into_iter().flat_map(|m| m.values())
    }

    pub fn advertised(&self, prefix: PrefixId, to: RouterId) -> Option<&RouteAttrs> {
        self.rib_out.get(&(prefix, to))
    }
}

/// Control-plane state of every router.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkState {
    routers: Vec<RouterRib>,
    prefixes: BTreeSet<PrefixId>,
}

impl NetworkState {
    pub fn new(num_routers: usize) -> Self {
        Self {
            routers: vec![RouterRib::default(); num_routers],
            prefixes: BTreeSet::new(),
        }
    }

    pub fn router(&self, r: RouterId) -> &RouterRib {
        &self.routers[r.index()]
    }

    pub fn prefixes(&self) -> &BTreeSet<PrefixId> {
        &self.prefixes
    }

    pub fn add_prefix(&mut self, prefix: PrefixId) {
        self.prefixes.insert(prefix);
    }

    pub fn action(&self, r: RouterId, prefix: PrefixId) -> FibAction {
        FibAction::from_best(self.router(r).best(prefix))
    }

    /// Stores (or removes) the route `source` currently advertises to `r`.
    pub fn install(&mut self, r: RouterId, source: Node, prefix: PrefixId, route: Option<Route>) {
        self.prefixes.insert(prefix);
        let table = self.routers[r.index()].rib_in.entry(prefix).or_default();
        match route {
            Some(route) => {
                table.insert(source, route);
            }
            None => {
                table.remove(&source);
            }
        }
    }

    /// Applies an iBGP advertisement from `sender`. A router ignores its own
    /// routes reflected back to it.
    pub fn receive(&mut self, net: &Network, r: RouterId, sender: RouterId, prefix: PrefixId, attrs: Option<RouteAttrs>) {
        let route = attrs
            .filter(|a| net.ibgp.accepts(r, a))
            .map(|a| Route::received(a, r, sender, &net.igp));
        self.install(r, Node::Router(sender), prefix, route);
    }

    /// Re-runs the decision process; returns the previous best if it changed.
    pub fn reselect(&mut self, r: RouterId, prefix: PrefixId) -> Option<Option<Route>> {
        let rib = &mut self.routers[r.index()];
        let new = decide_best(rib.rib_in.get(&prefix).into_iter().flat_map(|m| m.values()))
            .expect("rib_in is keyed by prefix")
            .copied();
        let old = rib.best.get(&prefix).copied();
        if new == old {
            return None;
        }
        match new {
            Some(route) => rib.best.insert(prefix, route),
            None => rib.best.remove(&prefix),
        };
        Some(old)
    }

    /// Advertisements `r` still has to send so every session matches its
    /// current best route: `(neighbor, Some(update) | None for withdraw)`.
    pub fn pending_adverts(&self, net: &Network, r: RouterId, prefix: PrefixId) -> Vec<(RouterId, Option<RouteAttrs>)> {
        let rib = self.router(r);
        let best = rib.best(prefix);
        let targets = best.map(|b| net.ibgp.propagation_targets(&net.topology, r, b.learned_from));
        let mut out = Vec::new();
        for nb in net.ibgp.session_peers(&net.topology, r) {
            let want = match (best, &targets) {
                (Some(b), Some(t)) if t.contains(&nb) => Some(net.ibgp.outgoing(r, b)),
                _ => None,
            };
            if rib.advertised(prefix, nb).copied() != want {
                out.push((nb, want));
            }
        }
        out
    }

    pub fn commit_advert(&mut self, r: RouterId, to: RouterId, prefix: PrefixId, attrs: Option<RouteAttrs>) {
        let rib = &mut self.routers[r.index()];
        match attrs {
            Some(a) => rib.rib_out.insert((prefix, to), a),
            None => rib.rib_out.remove(&(prefix, to)),
        };
    }

    /// True when no router would change its selection or send anything, and
    /// every advertisement is reflected in the receiver's Adj-RIB-In.
    pub fn is_stable(&self, net: &Network) -> bool {
        for r in net.topology.routers() {
            for &p in &self.prefixes {
                let rib = self.router(r);
                let best = decide_best(rib.candidates(p)).expect("single prefix").copied();
                if best.as_ref() != rib.best(p) || !self.pending_adverts(net, r, p).is_empty() {
                    return false;
                }
                for nb in net.ibgp.session_peers(&net.topology, r) {
                    let sent = rib.advertised(p, nb).filter(|a| net.ibgp.accepts(nb, a)).copied();
                    let held = self
                        .router(nb)
                        .rib_in
                        .get(&p)
                        .and_then(|m| m.get(&Node::Router(r)))
                        .map(|route| route.attrs());
                    if sent != held {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// The converged pre-event state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitialState {
    pub state: NetworkState,
    pub timelines: FibTimeline,
    pub external_routes: Vec<Route>,
}

/// Computes the converged control plane for the given external routes by
/// iterating selection and advertisement to a fixed point.
pub fn build_initial_state(net: &Network, external_routes: &[Route]) -> Result<InitialState, SimError> {
    let n = net.topology.num_routers();
    let mut state = NetworkState::new(n);
    for route in external_routes {
        if route.origin_peer.index() >= net.topology.peers().len() {
            return Err(SimError::Scenario(format!("route from unknown peer {}", route.origin_peer)));
        }
        let egress = net.topology.peer(route.origin_peer).attached_to;
        if route.egress != egress {
            return Err(SimError::Scenario(format!(
                "external route for {} has egress {} but its peer attaches to {}",
                route.prefix,
                net.topology.router_name(route.egress),
                net.topology.router_name(egress)
            )));
        }
        state.install(egress, Node::Peer(route.origin_peer), route.prefix, Some(*route));
    }

    let prefixes: Vec<PrefixId> = state.prefixes.iter().copied().collect();
    let max_rounds = n * n + 1;
    let mut converged = false;
    for _ in 0..max_rounds {
        let mut changed = false;
        for r in net.topology.routers() {
            for &p in &prefixes {
                changed |= state.reselect(r, p).is_some();
                for (nb, attrs) in state.pending_adverts(net, r, p) {
                    state.commit_advert(r, nb, p, attrs);
                    state.receive(net, nb, r, p, attrs);
                    changed = true;
                }
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SimError::NonConverging { rounds: max_rounds });
    }

    let mut timelines = FibTimeline::new();
    for r in net.topology.routers() {
        for &p in &prefixes {
            timelines.set_initial(r, p, state.action(r, p));
        }
    }
    Ok(InitialState {
        state,
        timelines,
        external_routes: external_routes.to_vec(),
    })
}
