//! Static network model: topology, converged IGP, iBGP sessions and the BGP
//! decision process.

mod bgp;
mod igp;
mod topology;

pub use bgp::{decide_best, ClusterList, IbgpConfig, IbgpMode, LearnedFrom, Route, RouteAttrs};
pub use igp::{compute_igp, IgpState};
pub use topology::{ExternalPeer, Link, Node, PeerId, PrefixId, RouterId, Topology};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("topology has no routers")]
    EmptyTopology,
    #[error("topology is disconnected: {0} is unreachable")]
    Disconnected(String),
    #[error("unknown router: {0}")]
    UnknownRouter(String),
    #[error("unknown peer: {0}")]
    UnknownPeer(String),
    #[error("duplicate node name: {0}")]
    DuplicateName(String),
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("invalid iBGP configuration: {0}")]
    InvalidIbgp(String),
    #[error("decision process called with mixed prefixes {0} and {1}")]
    MixedPrefixes(PrefixId, PrefixId),
}

/// The immutable static model shared by simulation and probing.
#[derive(Debug, Clone)]
pub struct Network {
    pub topology: Topology,
    pub igp: IgpState,
    pub ibgp: IbgpConfig,
}

impl Network {
    pub fn new(topology: Topology, ibgp: IbgpConfig) -> Result<Self, ModelError> {
        if let IbgpMode::RouteReflection { reflectors } = &ibgp.mode {
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
        }
        let igp = compute_igp(&topology)?;
        Ok(Self { topology, igp, ibgp })
    }
}
