//! Scenario files: a versioned TOML document describing one experiment.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::presets;
use crate::model::{ExternalPeer, IbgpConfig, Link, Network, PeerId, PrefixId, Route, RouterId, Topology};
use crate::probe::ProbeConfig;
use crate::sim::{Attribution, EventKind, EventSpec, ProcessingModel};
use crate::{Micros, MS, SEC};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("unsupported scenario version {0}, expected {SCENARIO_VERSION}")]
    Version(u32),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl From<crate::model::ModelError> for ScenarioError {
    fn from(e: crate::model::ModelError) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub samples: usize,
    /// Number of prefixes affected by the event, `0..prefixes`.
    #[serde(default = "one")]
    pub prefixes: u32,
    pub topology: TopologySection,
    #[serde(default)]
    pub ibgp: IbgpSection,
    pub routes: Vec<RouteSpec>,
    pub event: EventSection,
    #[serde(default)]
    pub processing: ProcessingSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub capture: CaptureSection,
}

fn one<T: From<u8>>() -> T {
    T::from(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    /// Named router and link set; `routers` and `links` must then be empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkSpec>,
    pub peers: Vec<PeerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub delay_us: Micros,
    #[serde(default = "one")]
    pub igp_cost: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerSpec {
    pub name: String,
    pub router: String,
    #[serde(default)]
    pub delay_us: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IbgpModeName {
    #[default]
    FullMesh,
    RouteReflection,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbgpSection {
    pub mode: IbgpModeName,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reflectors: Vec<String>,
}

/// A route the peer advertises for every prefix before the event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub peer: String,
    pub as_path_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKindName {
    Withdraw,
    Announce,
    UpdateWorse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub kind: EventKindName,
    pub peer: String,
    #[serde(default)]
    pub at_us: Micros,
    /// Announce: AS-path length of the new route.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_path_len: Option<u32>,
    /// Update-worse: how much the AS path grows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prepend: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessingSection {
    pub per_prefix_cost_us: Micros,
    #[serde(default)]
    pub jitter: f64,
    /// Per-router cost by router name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, Micros>,
}

impl Default for ProcessingSection {
    fn default() -> Self {
        Self {
            per_prefix_cost_us: ProcessingModel::DEFAULT_PER_PREFIX_COST,
            jitter: 0.0,
            overrides: BTreeMap::new(),
        }
    }
}

/// How the probed prefixes are chosen in each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefixSelection {
    /// `count` distinct prefixes drawn with the sample's seed.
    #[default]
    Random,
    /// Prefix at relative position `(i + 1/2) / count` of the event order.
    Stratified,
    /// The first `count` prefixes.
    First,
    /// Exactly `list`.
    List,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub rate_pps: u64,
    /// Source routers by name; all routers when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
    #[serde(default)]
    pub select: PrefixSelection,
    #[serde(default = "ten")]
    pub count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub list: Vec<u32>,
    #[serde(default = "default_ttl")]
    pub ttl: u32,
    #[serde(default = "yes")]
    pub rpf_drop: bool,
    #[serde(default)]
    pub attribution: Attribution,
    #[serde(default = "default_edge_span")]
    pub edge_span_us: Micros,
    /// Fixed window relative to the event; derived from the simulated
    /// convergence when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_us: Option<[Micros; 2]>,
    /// Slack added on both sides of a derived window.
    #[serde(default = "default_margin")]
    pub margin_us: Micros,
}

fn ten() -> usize {
    10
}
fn default_ttl() -> u32 {
    64
}
fn yes() -> bool {
    true
}
fn default_edge_span() -> Micros {
    SEC
}
fn default_margin() -> Micros {
    100 * MS
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            rate_pps: 1000,
            sources: None,
            select: PrefixSelection::Random,
            count: 10,
            list: Vec::new(),
            ttl: default_ttl(),
            rpf_drop: true,
            attribution: Attribution::AtEmission,
            edge_span_us: default_edge_span(),
            window_us: None,
            margin_us: default_margin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSection {
    /// Zero disables keep-alives in emitted traces.
    #[serde(default = "default_keepalive")]
    pub keepalive_interval_us: Micros,
    #[serde(default = "default_quiet")]
    pub quiet_window_us: Micros,
}

fn default_keepalive() -> Micros {
    SEC
}
fn default_quiet() -> Micros {
    10 * SEC
}

impl Default for CaptureSection {
    fn default() -> Self {
        Self {
            keepalive_interval_us: default_keepalive(),
            quiet_window_us: default_quiet(),
        }
    }
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if file.version != SCENARIO_VERSION {
            return Err(ScenarioError::Version(file.version));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Loads a file, or a built-in preset when `spec` is `preset:<name>`.
    pub fn load(spec: &str) -> Result<Self, ScenarioError> {
        if let Some(name) = spec.strip_prefix("preset:") {
            return presets::preset(name).ok_or_else(|| ScenarioError::UnknownPreset(name.into()));
        }
        let text = std::fs::read_to_string(Path::new(spec)).map_err(|source| ScenarioError::Io {
            path: spec.into(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        Scenario::new(self.clone())
    }
}

/// Capture settings of emitted traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureSettings {
    pub keepalive_interval: Option<Micros>,
    pub quiet_window: Micros,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub net: Network,
    /// Routes advertised by the external peers before the event.
    pub routes: Vec<Route>,
    pub event: EventSpec,
    pub processing: ProcessingModel,
    /// Sources, rate and classification; prefixes and window are filled in
    /// per sample.
    pub probe: ProbeConfig,
    pub capture: CaptureSettings,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

impl Scenario {
    fn new(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.name.is_empty() || file.name.contains(|c: char| c.is_whitespace() || c == '=') {
            return invalid(format!("scenario name {:?} must be non-empty without spaces or '='", file.name));
        }
        if file.samples == 0 {
            return invalid("samples must be at least 1");
        }
        if file.prefixes == 0 {
            return invalid("prefixes must be at least 1");
        }
        let topology = build_topology(&file.topology)?;
        let router = |name: &str| {
            topology
                .router_id(name)
                .ok_or_else(|| ScenarioError::Invalid(format!("unknown router {name:?}")))
        };
        let peer = |name: &str| {
            topology
                .peer_id(name)
                .ok_or_else(|| ScenarioError::Invalid(format!("unknown peer {name:?}")))
        };
        let ibgp = match file.ibgp.mode {
            IbgpModeName::FullMesh => {
                if !file.ibgp.reflectors.is_empty() {
                    return invalid("reflectors given for a full mesh");
                }
                IbgpConfig::full_mesh()
            }
            IbgpModeName::RouteReflection => {
                let rr = file.ibgp.reflectors.iter().map(|n| router(n)).collect::<Result<Vec<_>, _>>()?;
                IbgpConfig::route_reflection(&topology, rr)?
            }
        };

        let mut seen = std::collections::BTreeSet::new();
        let mut route_peers = Vec::new();
        for r in &file.routes {
            let p = peer(&r.peer)?;
            if !seen.insert(p) {
                return invalid(format!("peer {:?} has two routes", r.peer));
            }
            if r.as_path_len == 0 {
                return invalid(format!("route from {:?} has an empty AS path", r.peer));
            }
            route_peers.push((p, r.as_path_len));
        }
        let prefixes: Vec<PrefixId> = (0..file.prefixes).map(PrefixId).collect();
        let mut routes = Vec::with_capacity(route_peers.len() * prefixes.len());
        for &(p, len) in &route_peers {
            routes.extend(prefixes.iter().map(|&x| Route::external(&topology, p, x, len)));
        }

        let ev = &file.event;
        let kind = match ev.kind {
            EventKindName::Withdraw => EventKind::Withdraw,
            EventKindName::Announce => EventKind::Announce {
                as_path_len: ev
                    .as_path_len
                    .ok_or_else(|| ScenarioError::Invalid("announce needs as_path_len".into()))?,
            },
            EventKindName::UpdateWorse => EventKind::UpdateWorse {
                prepend_delta: ev
                    .prepend
                    .ok_or_else(|| ScenarioError::Invalid("update-worse needs prepend".into()))?,
            },
        };
        let event = EventSpec {
            kind,
            at_peer: peer(&ev.peer)?,
            prefixes,
            time: ev.at_us,
        };

        let mut processing =
            ProcessingModel::uniform(topology.num_routers(), file.processing.per_prefix_cost_us).with_jitter(file.processing.jitter);
        for (name, &cost) in &file.processing.overrides {
            processing.per_prefix_cost[router(name)?.index()] = cost;
        }
        processing
            .validate(topology.num_routers())
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let p = &file.probe;
        let sources = match &p.sources {
            None => topology.routers().collect(),
            Some(names) => names.iter().map(|n| router(n)).collect::<Result<Vec<_>, _>>()?,
        };
        if sources.is_empty() {
            return invalid("no probe sources");
        }
        match p.select {
            PrefixSelection::List => {
                if p.list.is_empty() {
                    return invalid("prefix list is empty");
                }
                if let Some(x) = p.list.iter().find(|&&x| x >= file.prefixes) {
                    return invalid(format!("probed prefix {x} is not affected by the event"));
                }
            }
            _ if p.count == 0 || p.count > file.prefixes as usize => {
                return invalid(format!("cannot probe {} of {} prefixes", p.count, file.prefixes));
            }
            _ => {}
        }
        if p.edge_span_us <= 0 || p.margin_us < 0 {
            return invalid("edge span must be positive and margin non-negative");
        }
        let probe = ProbeConfig {
            rate_pps: p.rate_pps,
            sources,
            prefixes: Vec::new(),
            window: p.window_us.map_or((-p.edge_span_us - p.margin_us, p.edge_span_us + p.margin_us), |w| (w[0], w[1])),
            ttl: p.ttl,
            rpf_drop: p.rpf_drop,
            attribution: p.attribution,
            edge_span: p.edge_span_us,
        };
        probe.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let c = &file.capture;
        if c.quiet_window_us <= 0 || c.keepalive_interval_us < 0 {
            return invalid("quiet window must be positive and keep-alive interval non-negative");
        }
        let capture = CaptureSettings {
            keepalive_interval: (c.keepalive_interval_us > 0).then_some(c.keepalive_interval_us),
            quiet_window: c.quiet_window_us,
        };
        let net = Network::new(topology, ibgp)?;
        Ok(Self {
            file,
            net,
            routes,
            event,
            processing,
            probe,
            capture,
        })
    }

    /// Border router of the peer that triggers the event.
    pub fn event_router(&self) -> RouterId {
        self.net.topology.peer(self.event.at_peer).attached_to
    }

    pub fn route_peers(&self) -> Vec<PeerId> {
        let mut peers: Vec<PeerId> = self.routes.iter().map(|r| r.origin_peer).collect();
        peers.dedup();
        peers
    }
}

fn build_topology(t: &TopologySection) -> Result<Topology, ScenarioError> {
    let (routers, links) = match &t.preset {
        Some(name) => {
            if !t.routers.is_empty() || !t.links.is_empty() {
                return invalid("a topology preset cannot be combined with inline routers or links");
            }
            presets::topology(name).ok_or_else(|| ScenarioError::UnknownPreset(name.clone()))?
        }
        None => (t.routers.clone(), t.links.clone()),
    };
    let id = |name: &str| {
        routers
            .iter()
            .position(|r| r == name)
            .map(|i| RouterId(i as u32))
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown router {name:?}")))
    };
    let links = links
        .iter()
        .map(|l| {
            Ok(Link {
                a: id(&l.a)?,
                b: id(&l.b)?,
                propagation_delay: l.delay_us,
                igp_cost: l.igp_cost,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let peers = t
        .peers
        .iter()
        .map(|p| {
            Ok(ExternalPeer {
                name: p.name.clone(),
                attached_to: id(&p.router)?,
                propagation_delay: p.delay_us,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    Ok(Topology::new(routers, links, peers)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PATH3: &str = r#"
version = 1
name = "path3"

[topology]
routers = ["r1", "r2", "r3"]
links = [
  { a = "r1", b = "r2", delay_us = 10000 },
  { a = "r2", b = "r3", delay_us = 10000 },
]
peers = [
  { name = "e1", router = "r1", delay_us = 10000 },
  { name = "e2", router = "r3", delay_us = 10000 },
]

[[routes]]
peer = "e1"
as_path_len = 1

[[routes]]
peer = "e2"
as_path_len = 2

[event]
kind = "withdraw"
peer = "e1"

[processing]
per_prefix_cost_us = 100000

[probe]
rate_pps = 1000
select = "first"
count = 1
"#;

    #[test]
    fn parses_and_resolves() {
        let f = ScenarioFile::from_toml(PATH3).unwrap();
        assert_eq!((f.samples, f.prefixes, f.seed), (1, 1, 0));
        let s = f.resolve().unwrap();
        assert_eq!(s.net.topology.num_routers(), 3);
        assert_eq!(s.routes.len(), 2);
        assert_eq!(s.event_router(), RouterId(0));
        assert_eq!(s.probe.sources.len(), 3);
        assert_eq!(s.processing.per_prefix_cost, vec![100 * MS; 3]);
        assert_eq!(s.capture.quiet_window, 10 * SEC);
    }

    #[test]
    fn round_trips_through_toml() {
        let f = ScenarioFile::from_toml(PATH3).unwrap();
        let again = ScenarioFile::from_toml(&f.to_toml()).unwrap();
        assert_eq!(f, again);
        assert_eq!(f.hash(), again.hash());
        assert_eq!(f.hash().len(), 16);
    }

    #[test]
    fn rejects_bad_references() {
        let bad = PATH3.replace("peer = \"e1\"\n\n[processing]", "peer = \"nope\"\n\n[processing]");
        assert!(matches!(ScenarioFile::from_toml(&bad).unwrap().resolve(), Err(ScenarioError::Invalid(_))));
        let bad = PATH3.replace("version = 1", "version = 2");
        assert!(matches!(ScenarioFile::from_toml(&bad), Err(ScenarioError::Version(2))));
        let bad = PATH3.replace("name = \"path3\"", "name = \"path3\"\nsamples = 0");
        assert!(ScenarioFile::from_toml(&bad).unwrap().resolve().is_err());
        let bad = PATH3.replace("rate_pps = 1000", "rate_pps = 3");
        assert!(ScenarioFile::from_toml(&bad).unwrap().resolve().is_err());
        assert!(ScenarioFile::from_toml(&PATH3.replace("[event]", "[event]\nbogus = 1")).is_err());
    }
}
