use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::Micros;

/// Index of an internal router. Ids are assigned in declaration order and the
/// numeric order is the deterministic tie-break everywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RouterId(pub u32);

/// Index of an external (eBGP) peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub u32);

/// Opaque prefix identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrefixId(pub u32);

impl RouterId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PeerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RouterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for PrefixId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Either an internal router or an external peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Router(RouterId),
    Peer(PeerId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: RouterId,
    pub b: RouterId,
    pub propagation_delay: Micros,
    pub igp_cost: u32,
}

impl Link {
    pub fn other(&self, r: RouterId) -> Option<RouterId> {
        if self.a == r {
            Some(self.b)
        } else if self.b == r {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalPeer {
    pub name: String,
    pub attached_to: RouterId,
    /// One-way delay of the eBGP link. Zero is allowed and means the peer sits
    /// directly on the border router's interface.
    pub propagation_delay: Micros,
}

/// Routers, links and external peers of one network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    routers: Vec<String>,
    links: Vec<Link>,
    peers: Vec<ExternalPeer>,
    adjacency: Vec<Vec<(RouterId, usize)>>,
}

impl Topology {
    /// Builds and validates a topology. Router ids follow the order of `routers`.
    pub fn new(
        routers: Vec<String>,
        links: Vec<Link>,
        peers: Vec<ExternalPeer>,
    ) -> Result<Self, ModelError> {
        if routers.is_empty() {
            return Err(ModelError::EmptyTopology);
        }
        let mut names = BTreeSet::new();
        for name in routers.iter().chain(peers.iter().map(|p| &p.name)) {
            if !names.insert(name.as_str()) {
                return Err(ModelError::DuplicateName(name.clone()));
            }
        }
        let n = routers.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (idx, link) in links.iter().enumerate() {
            if link.a.index() >= n || link.b.index() >= n {
                return Err(ModelError::UnknownRouter(format!("{}-{}", link.a, link.b)));
            }
            if link.a == link.b {
                return Err(ModelError::InvalidLink(format!("self-loop at {}", routers[link.a.index()])));
            }
            if link.propagation_delay <= 0 {
                return Err(ModelError::InvalidLink(format!(
                    "{}-{}: propagation delay must be positive",
                    routers[link.a.index()],
                    routers[link.b.index()]
                )));
            }
            if link.igp_cost == 0 {
                return Err(ModelError::InvalidLink(format!(
                    "{}-{}: igp cost must be at least 1",
                    routers[link.a.index()],
                    routers[link.b.index()]
                )));
            }
            let key = (link.a.min(link.b), link.a.max(link.b));
            if !seen.insert(key) {
                return Err(ModelError::InvalidLink(format!(
                    "duplicate link {}-{}",
                    routers[key.0.index()],
                    routers[key.1.index()]
                )));
            }
            adjacency[link.a.index()].push((link.b, idx));
            adjacency[link.b.index()].push((link.a, idx));
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        for peer in &peers {
            if peer.attached_to.index() >= n {
                return Err(ModelError::UnknownRouter(peer.name.clone()));
            }
            if peer.propagation_delay < 0 {
                return Err(ModelError::InvalidLink(format!(
                    "peer {}: negative propagation delay",
                    peer.name
                )));
            }
        }
        let topo = Self {
            routers,
            links,
            peers,
            adjacency,
        };
        if let Some(r) = topo.unreachable_router() {
            return Err(ModelError::Disconnected(topo.routers[r.index()].clone()));
        }
        Ok(topo)
    }

    fn unreachable_router(&self) -> Option<RouterId> {
        let mut seen = vec![false; self.routers.len()];
        let mut queue = VecDeque::from([RouterId(0)]);
        seen[0] = true;
        while let Some(r) = queue.pop_front() {
            for &(next, _) in &self.adjacency[r.index()] {
                if !seen[next.index()] {
                    seen[next.index()] = true;
                    queue.push_back(next);
                }
            }
        }
        seen.iter().position(|s| !s).map(|i| RouterId(i as u32))
    }

    pub fn num_routers(&self) -> usize {
        self.routers.len()
    }

    pub fn routers(&self) -> impl Iterator<Item = RouterId> + '_ {
        (0..self.routers.len() as u32).map(RouterId)
    }

    pub fn peer_ids(&self) -> impl Iterator<Item = PeerId> + '_ {
        (0..self.peers.len() as u32).map(PeerId)
    }

    pub fn router_name(&self, r: RouterId) -> &str {
        &self.routers[r.index()]
    }

    pub fn router_names(&self) -> &[String] {
        &self.routers
    }

    pub fn router_id(&self, name: &str) -> Option<RouterId> {
        self.routers
            .iter()
            .position(|n| n == name)
            .map(|i| RouterId(i as u32))
    }

    pub fn peer_id(&self, name: &str) -> Option<PeerId> {
        self.peers
            .iter()
            .position(|p| p.name == name)
            .map(|i| PeerId(i as u32))
    }

    pub fn peer(&self, p: PeerId) -> &ExternalPeer {
        &self.peers[p.index()]
    }

    pub fn peers(&self) -> &[ExternalPeer] {
        &self.peers
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Neighbors of `r` with the connecting link, sorted by neighbor id.
    pub fn neighbors(&self, r: RouterId) -> impl Iterator<Item = (RouterId, &Link)> + '_ {
        self.adjacency[r.index()]
            .iter()
            .map(move |&(n, idx)| (n, &self.links[idx]))
    }

    pub fn link_between(&self, a: RouterId, b: RouterId) -> Option<&Link> {
        self.adjacency[a.index()]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|&(_, idx)| &self.links[idx])
    }

    pub fn node_name(&self, node: Node) -> &str {
        match node {
            Node::Router(r) => self.router_name(r),
            Node::Peer(p) => &self.peer(p).name,
        }
    }

    /// Peers grouped by the router they attach to.
    pub fn peers_by_router(&self) -> BTreeMap<RouterId, Vec<PeerId>> {
        let mut out: BTreeMap<RouterId, Vec<PeerId>> = BTreeMap::new();
        for p in self.peer_ids() {
            out.entry(self.peer(p).attached_to).or_default().push(p);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(a: u32, b: u32, ms: i64) -> Link {
        Link {
            a: RouterId(a),
            b: RouterId(b),
            propagation_delay: ms * 1000,
            igp_cost: 1,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{}", i + 1)).collect()
    }

    #[test]
    fn rejects_disconnected() {
        let err = Topology::new(names(3), vec![link(0, 1, 1)], vec![]).unwrap_err();
        assert!(matches!(err, ModelError::Disconnected(name) if name == "r3"));
    }

    #[test]
    fn rejects_bad_links() {
        let mut l = link(0, 1, 1);
        l.propagation_delay = 0;
        assert!(Topology::new(names(2), vec![l], vec![]).is_err());
        let mut l = link(0, 1, 1);
        l.igp_cost = 0;
        assert!(Topology::new(names(2), vec![l], vec![]).is_err());
        assert!(Topology::new(names(2), vec![link(0, 1, 1), link(1, 0, 2)], vec![]).is_err());
        assert!(Topology::new(names(2), vec![link(0, 0, 1)], vec![]).is_err());
    }

    #[test]
    fn rejects_peer_on_unknown_router() {
        let peer = ExternalPeer {
            name: "e1".into(),
            attached_to: RouterId(7),
            propagation_delay: 0,
        };
        assert!(Topology::new(names(2), vec![link(0, 1, 1)], vec![peer]).is_err());
    }

    #[test]
    fn rejects_duplicate_names() {
        let peer = ExternalPeer {
            name: "r1".into(),
            attached_to: RouterId(0),
            propagation_delay: 0,
        };
        assert!(matches!(
            Topology::new(names(2), vec![link(0, 1, 1)], vec![peer]),
            Err(ModelError::DuplicateName(_))
        ));
    }

    #[test]
    fn neighbors_are_sorted() {
        let topo = Topology::new(names(4), vec![link(0, 3, 1), link(0, 1, 1), link(0, 2, 1)], vec![]).unwrap();
        let ns: Vec<_> = topo.neighbors(RouterId(0)).map(|(n, _)| n.0).collect();
        assert_eq!(ns, vec![1, 2, 3]);
        assert_eq!(topo.router_id("r3"), Some(RouterId(2)));
    }
}
