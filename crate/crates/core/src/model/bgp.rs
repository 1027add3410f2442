use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{IgpState, ModelError, PeerId, PrefixId, RouterId, Topology};

/// Where a router learned a route from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearnedFrom {
    External,
    IbgpPeer(RouterId),
}

/// Reflectors a route has passed through. Reflectors drop routes that
/// already list them, which stops reflection loops between reflectors that
/// are clients of each other.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterList(u128);

impl ClusterList {
    /// Highest router id that can act as a reflector.
    pub const MAX_REFLECTOR: u32 = 127;

    pub fn contains(self, r: RouterId) -> bool {
        r.0 <= Self::MAX_REFLECTOR && self.0 & (1 << r.0) != 0
    }

    pub fn with(self, r: RouterId) -> Self {
        assert!(r.0 <= Self::MAX_REFLECTOR, "reflector id {} out of range", r.0);
        Self(self.0 | 1 << r.0)
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// The attributes carried in an advertisement. The receiver fills in
/// `learned_from` and its own IGP cost to reach `egress`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RouteAttrs {
    pub prefix: PrefixId,
    pub origin_peer: PeerId,
    pub egress: RouterId,
    pub as_path_len: u32,
    pub cluster_list: ClusterList,
}

/// A route as held in one router's Adj-RIB-In.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Route {
    pub prefix: PrefixId,
    pub origin_peer: PeerId,
    pub egress: RouterId,
    pub as_path_len: u32,
    pub cluster_list: ClusterList,
    pub learned_from: LearnedFrom,
    pub igp_cost_to_egress: u64,
}

impl Route {
    /// A route received by a border router directly from its eBGP peer.
    pub fn external(topology: &Topology, peer: PeerId, prefix: PrefixId, as_path_len: u32) -> Self {
        Self {
            prefix,
            origin_peer: peer,
            egress: topology.peer(peer).attached_to,
            as_path_len,
            cluster_list: ClusterList::default(),
            learned_from: LearnedFrom::External,
            igp_cost_to_egress: 0,
        }
    }

    /// The route `holder` installs after receiving `attrs` from `sender`.
    pub fn received(attrs: RouteAttrs, holder: RouterId, sender: RouterId, igp: &IgpState) -> Self {
        Self {
            prefix: attrs.prefix,
            origin_peer: attrs.origin_peer,
            egress: attrs.egress,
            as_path_len: attrs.as_path_len,
            cluster_list: attrs.cluster_list,
            learned_from: LearnedFrom::IbgpPeer(sender),
            igp_cost_to_egress: igp.path_cost(holder, attrs.egress),
        }
    }

    pub fn attrs(&self) -> RouteAttrs {
        RouteAttrs {
            prefix: self.prefix,
            origin_peer: self.origin_peer,
            egress: self.egress,
            as_path_len: self.as_path_len,
            cluster_list: self.cluster_list,
        }
    }

    /// Ordered preference key; smaller is better.
    ///
    /// AS-path length, then eBGP over iBGP, then IGP cost to the egress, then
    /// the egress id, then the shorter cluster list. Origin peer, cluster
    /// list and sender only matter for otherwise identical candidates so the
    /// selection is a total order.
    #[allow(clippy::type_complexity)]
    fn preference_key(&self) -> (u32, bool, u64, RouterId, u32, PeerId, ClusterList, LearnedFrom) {
        (
            self.as_path_len,
            matches!(self.learned_from, LearnedFrom::IbgpPeer(_)),
            self.igp_cost_to_egress,
            self.egress,
            self.cluster_list.len(),
            self.origin_peer,
            self.cluster_list,
            self.learned_from,
        )
    }
}

/// BGP best-path selection over candidates for a single prefix.
pub fn decide_best<'a, I>(candidates: I) -> Result<Option<&'a Route>, ModelError>
where
    I: IntoIterator<Item = &'a Route>,
{
    let mut best: Option<&Route> = None;
    for route in candidates {
        if let Some(b) = best {
            if b.prefix != route.prefix {
                return Err(ModelError::MixedPrefixes(b.prefix, route.prefix));
            }
            if route.preference_key() < b.preference_key() {
                best = Some(route);
            }
        } else {
            best = Some(route);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IbgpMode {
    FullMesh,
    /// Every router, reflectors included, is a client of every reflector.
    RouteReflection { reflectors: BTreeSet<RouterId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IbgpConfig {
    pub mode: IbgpMode,
}

impl IbgpConfig {
    pub fn full_mesh() -> Self {
        Self {
            mode: IbgpMode::FullMesh,
        }
    }

    pub fn route_reflection(topology: &Topology, reflectors: impl IntoIterator<Item = RouterId>) -> Result<Self, ModelError> {
        let reflectors: BTreeSet<_> = reflectors.into_iter().collect();
        if reflectors.is_empty() {
            return Err(ModelError::InvalidIbgp("route reflection needs at least one reflector".into()));
        }
        if let Some(r) = reflectors.iter().find(|r| r.index() >= topology.num_routers()) {
            return Err(ModelError::UnknownRouter(r.to_string()));
        }
        if let Some(r) = reflectors.iter().find(|r| r.0 > ClusterList::MAX_REFLECTOR) {
            return Err(ModelError::InvalidIbgp(format!(
                "reflector {r} exceeds the highest supported reflector id {}",
                ClusterList::MAX_REFLECTOR
            )));
        }
        Ok(Self {
            mode: IbgpMode::RouteReflection { reflectors },
        })
    }

    pub fn is_reflector(&self, r: RouterId) -> bool {
        match &self.mode {
            IbgpMode::FullMesh => false,
            IbgpMode::RouteReflection { reflectors } => reflectors.contains(&r),
        }
    }

    pub fn has_session(&self, a: RouterId, b: RouterId) -> bool {
        a != b
            && match &self.mode {
                IbgpMode::FullMesh => true,
                IbgpMode::RouteReflection { reflectors } => reflectors.contains(&a) || reflectors.contains(&b),
            }
    }

    /// Whether `r` keeps an advertisement: never its own route back, and a
    /// reflector never a route it already reflected.
    pub fn accepts(&self, r: RouterId, attrs: &RouteAttrs) -> bool {
        attrs.egress != r && !(self.is_reflector(r) && attrs.cluster_list.contains(r))
    }

    /// The attributes `holder` advertises for its best route `best`.
    pub fn outgoing(&self, holder: RouterId, best: &Route) -> RouteAttrs {
        let mut attrs = best.attrs();
        if self.is_reflector(holder) && best.learned_from != LearnedFrom::External {
            attrs.cluster_list = attrs.cluster_list.with(holder);
        }
        attrs
    }

    /// iBGP session neighbors of `r`, sorted.
    pub fn session_peers(&self, topology: &Topology, r: RouterId) -> Vec<RouterId> {
        topology.routers().filter(|&o| self.has_session(r, o)).collect()
    }

    /// All sessions as ordered pairs `(a, b)` with `a < b`.
    pub fn sessions(&self, topology: &Topology) -> Vec<(RouterId, RouterId)> {
        let mut out = Vec::new();
        for a in topology.routers() {
            for b in topology.routers().filter(|&b| b > a) {
                if self.has_session(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Routers `holder` advertises its best route to, given where it learned it.
    pub fn propagation_targets(&self, topology: &Topology, holder: RouterId, learned_from: LearnedFrom) -> BTreeSet<RouterId> {
        let mut out: BTreeSet<RouterId> = match (&self.mode, learned_from) {
            (IbgpMode::FullMesh, LearnedFrom::External) => topology.routers().collect(),
            (IbgpMode::FullMesh, LearnedFrom::IbgpPeer(_)) => BTreeSet::new(),
            (IbgpMode::RouteReflection { reflectors }, from) => {
                if reflectors.contains(&holder) {
                    topology.routers().collect()
                } else if from == LearnedFrom::External {
                    reflectors.clone()
                } else {
                    BTreeSet::new()
                }
            }
        };
        out.remove(&holder);
        if let LearnedFrom::IbgpPeer(from) = learned_from {
            out.remove(&from);
        }
        out
    }
}
