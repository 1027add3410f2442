use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LinkRef, NodeId, TraceError};
use crate::model::{Network, Node, PeerId, RouterId};
use crate::Micros;

pub const MAPPING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedLink {
    pub id: String,
    pub a: NodeId,
    pub b: NodeId,
    /// Configured one-way delay; zero means the link is captured once.
    pub delay_us: Micros,
}

/// Names and ids of everything that can appear in a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareMapping {
    pub version: u32,
    /// Node that injects probes; attached to every router without delay.
    pub prober: NodeId,
    pub routers: BTreeMap<String, NodeId>,
    pub peers: BTreeMap<String, NodeId>,
    pub links: Vec<MappedLink>,
}

impl HardwareMapping {
    /// Routers keep their ids, peers follow them, the prober comes last.
    pub fn from_network(net: &Network) -> Self {
        let topo = &net.topology;
        let n = topo.num_routers() as NodeId;
        let mut links: Vec<MappedLink> = topo
            .links()
            .iter()
            .enumerate()
            .map(|(i, l)| MappedLink {
                id: format!("l{i}"),
                a: l.a.0,
                b: l.b.0,
                delay_us: l.propagation_delay,
            })
            .collect();
        for (i, p) in topo.peers().iter().enumerate() {
            links.push(MappedLink {
                id: format!("p{i}"),
                a: p.attached_to.0,
                b: n + i as NodeId,
                delay_us: p.propagation_delay,
            });
        }
        let prober = n + topo.peers().len() as NodeId;
        for r in topo.routers() {
            links.push(MappedLink {
                id: format!("x{}", r.0),
                a: prober,
                b: r.0,
                delay_us: 0,
            });
        }
        Self {
            version: MAPPING_VERSION,
            prober,
            routers: topo.routers().map(|r| (topo.router_name(r).to_string(), r.0)).collect(),
            peers: topo
                .peers()
                .iter()
                .enumerate()
                .map(|(i, p)| (p.name.clone(), n + i as NodeId))
                .collect(),
            links,
        }
    }

    pub fn node_id(&self, node: Node) -> NodeId {
        match node {
            Node::Router(r) => r.0,
            Node::Peer(p) => self.routers.len() as NodeId + p.0,
        }
    }

    pub fn router_of(&self, id: NodeId) -> Option<RouterId> {
        ((id as usize) < self.routers.len()).then_some(RouterId(id))
    }

    pub fn peer_of(&self, id: NodeId) -> Option<PeerId> {
        let n = self.routers.len() as NodeId;
        (id >= n && id < n + self.peers.len() as NodeId).then(|| PeerId(id - n))
    }

    pub fn is_peer(&self, id: NodeId) -> bool {
        self.peer_of(id).is_some()
    }

    /// Router names indexed by id.
    pub fn router_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.routers.len()];
        for (name, &id) in &self.routers {
            names[id as usize] = name.clone();
        }
        names
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let err = |m: String| Err(TraceError::Mapping(m));
        if self.version != MAPPING_VERSION {
            return err(format!("unsupported mapping version {}", self.version));
        }
        let mut ids = BTreeSet::new();
        for &id in self.routers.values().chain(self.peers.values()).chain([&self.prober]) {
            if !ids.insert(id) {
                return err(format!("node id {id} used twice"));
            }
        }
        // routers are 0..n and peers follow so ids double as model ids
        let n = self.routers.len() as NodeId;
        if self.routers.values().any(|&id| id >= n) {
            return err("router ids must be 0..number of routers".into());
        }
        if self.peers.values().any(|&id| id < n || id >= n + self.peers.len() as NodeId) {
            return err("peer ids must follow the router ids".into());
        }
        if self.routers.keys().any(|name| self.peers.contains_key(name)) {
            return err("router and peer names overlap".into());
        }
        let mut link_ids = BTreeSet::new();
        let mut ends = BTreeSet::new();
        for l in &self.links {
            if !link_ids.insert(&l.id) {
                return err(format!("link id {} used twice", l.id));
            }
            if !ids.contains(&l.a) || !ids.contains(&l.b) || l.a == l.b {
                return err(format!("link {} has unknown or identical endpoints", l.id));
            }
            if !ends.insert((l.a.min(l.b), l.a.max(l.b))) {
                return err(format!("link {} duplicates another link", l.id));
            }
            if l.delay_us < 0 {
                return err(format!("link {} has negative delay", l.id));
            }
        }
        Ok(())
    }

    pub fn index(&self) -> LinkIndex {
        LinkIndex {
            delays: self
                .links
                .iter()
                .map(|l| ((l.a.min(l.b), l.a.max(l.b)), l.delay_us))
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("mapping serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, TraceError> {
        let m: Self = toml::from_str(text).map_err(|e| TraceError::Mapping(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

/// Link lookup by endpoints.
#[derive(Debug, Clone)]
pub struct LinkIndex {
    delays: HashMap<(NodeId, NodeId), Micros>,
}

impl LinkIndex {
    pub fn delay(&self, link: LinkRef) -> Option<Micros> {
        self.delays
            .get(&(link.from.min(link.to), link.from.max(link.to)))
            .copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::tests::path3;
    use crate::MS;

    #[test]
    fn network_mapping_round_trips() {
        let (net, _) = path3(2, MS);
        let m = HardwareMapping::from_network(&net);
        m.validate().unwrap();
        assert_eq!(m.prober, 5);
        assert_eq!(m.peers["e2"], 4);
        assert_eq!(m.index().delay(LinkRef { from: 4, to: 2 }), Some(10 * MS));
        assert_eq!(m.index().delay(LinkRef { from: 5, to: 1 }), Some(0));
        assert_eq!(m.index().delay(LinkRef { from: 0, to: 2 }), None);
        assert_eq!(HardwareMapping::from_toml(&m.to_toml()).unwrap(), m);
        assert_eq!(m.router_names(), ["r1", "r2", "r3"]);
        assert_eq!(m.peer_of(3), Some(PeerId(0)));
        assert_eq!(m.router_of(3), None);
    }

    #[test]
    fn rejects_inconsistent_mappings() {
        let (net, _) = path3(2, MS);
        let good = HardwareMapping::from_network(&net);
        let mut m = good.clone();
        m.peers.insert("dup".into(), 0);
        assert!(m.validate().is_err());
        let mut m = good.clone();
        m.links[0].b = 99;
        assert!(m.validate().is_err());
        let mut m = good.clone();
        m.links.push(m.links[0].clone());
        m.links.last_mut().unwrap().id = "again".into();
        assert!(m.validate().is_err());
        let mut m = good;
        m.version = 2;
        assert!(m.validate().is_err());
    }
}
