//! Capture format shared by the simulator and the analyzer.
//!
//! A trace is a text file: one header line followed by one record per line.
//!
//! ```text
//! ibgptrace/1 rate=1000 t0=0 window_start=-2000000 window_end=2000000 edge_span=1000000
//! ts=-2000000 kind=probe link=5>1 stage=undelayed src=1 prefix=0 seq=0 ttl=64
//! ts=-2000000 kind=probe link=1>0 stage=pre src=1 prefix=0 seq=0 ttl=64
//! ts=-1990000 kind=probe link=1>0 stage=post src=1 prefix=0 seq=0 ttl=64
//! ts=0 kind=bgp link=3>0 stage=pre msg=withdraw prefix=0 session=3>0 id=0
//! ts=12000000 kind=summary drops=0
//! ```
//!
//! Node ids and link delays come from the [`HardwareMapping`]. Every packet
//! crossing a delayed link is captured twice, before (`pre`) and after
//! (`post`) the delay; links without delay yield one `undelayed` record.
//! Exactly one `summary` record ends the trace and carries the capture's drop
//! counter.

mod emit;
mod format;
mod mapping;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use emit::{emit_sample_records, EmitOptions};
pub use format::{read_trace, read_trace_from, write_trace, write_trace_to, Trace, TraceHeader, TraceReader, TraceWriter};
pub use mapping::{HardwareMapping, MappedLink};
pub use validate::{validate_trace, Finding, FindingKind};

use crate::Micros;

pub const FORMAT_VERSION: &str = "ibgptrace/1";

/// Node id in a hardware mapping.
pub type NodeId = u32;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported trace version {0:?}, expected {FORMAT_VERSION}")]
    Version(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("trace is incomplete: no summary record")]
    Incomplete,
    #[error("record at line {line} follows the summary record")]
    AfterSummary { line: usize },
    #[error("records must be written in timestamp order (ts {ts} after {previous})")]
    Unordered { ts: Micros, previous: Micros },
    #[error("invalid header value for {key}: {value:?}")]
    Header { key: String, value: String },
    #[error("mapping: {0}")]
    Mapping(String),
}

/// A directed traversal of a link, `from>to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkRef {
    pub from: NodeId,
    pub to: NodeId,
}

impl fmt::Display for LinkRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}>{}", self.from, self.to)
    }
}

impl FromStr for LinkRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once('>').ok_or_else(|| format!("bad link {s:?}"))?;
        Ok(LinkRef {
            from: a.parse().map_err(|_| format!("bad link {s:?}"))?,
            to: b.parse().map_err(|_| format!("bad link {s:?}"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    PreDelay,
    PostDelay,
    Undelayed,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PreDelay => "pre",
            Stage::PostDelay => "post",
            Stage::Undelayed => "undelayed",
        }
    }

    /// The record is taken where the packet enters its next node.
    pub fn is_arrival(self) -> bool {
        matches!(self, Stage::PostDelay | Stage::Undelayed)
    }

    /// The record is taken where the packet leaves its sender.
    pub fn is_departure(self) -> bool {
        matches!(self, Stage::PreDelay | Stage::Undelayed)
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" => Ok(Stage::PreDelay),
            "post" => Ok(Stage::PostDelay),
            "undelayed" => Ok(Stage::Undelayed),
            _ => Err(format!("bad stage {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BgpMsgKind {
    Update,
    Withdraw,
    KeepAlive,
}

impl BgpMsgKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BgpMsgKind::Update => "update",
            BgpMsgKind::Withdraw => "withdraw",
            BgpMsgKind::KeepAlive => "keepalive",
        }
    }
}

impl FromStr for BgpMsgKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "update" => Ok(BgpMsgKind::Update),
            "withdraw" => Ok(BgpMsgKind::Withdraw),
            "keepalive" => Ok(BgpMsgKind::KeepAlive),
            _ => Err(format!("bad message kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RecordBody {
    Probe {
        link: LinkRef,
        stage: Stage,
        /// Router id of the probe's source.
        src: NodeId,
        prefix: u32,
        seq: u64,
        ttl: u32,
    },
    Bgp {
        link: LinkRef,
        stage: Stage,
        msg: BgpMsgKind,
        prefix: Option<u32>,
        session: LinkRef,
        id: u64,
    },
    Summary {
        drops: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ts: Micros,
    pub body: RecordBody,
}

impl TraceRecord {
    pub fn link(&self) -> Option<(LinkRef, Stage)> {
        match self.body {
            RecordBody::Probe { link, stage, .. } | RecordBody::Bgp { link, stage, .. } => Some((link, stage)),
            RecordBody::Summary { .. } => None,
        }
    }

    /// Identity of the packet a record captures; a packet's pre and post
    /// records on one link share it.
    pub fn packet_key(&self) -> Option<PacketKey> {
        match self.body {
            RecordBody::Probe {
                src, prefix, seq, ttl, ..
            } => Some(PacketKey::Probe { src, prefix, seq, ttl }),
            RecordBody::Bgp { id, .. } => Some(PacketKey::Bgp { id }),
            RecordBody::Summary { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKey {
    Probe { src: NodeId, prefix: u32, seq: u64, ttl: u32 },
    Bgp { id: u64 },
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ts={} ", self.ts)?;
        match self.body {
            RecordBody::Probe {
                link,
                stage,
                src,
                prefix,
                seq,
                ttl,
            } => write!(
                f,
                "kind=probe link={link} stage={} src={src} prefix={prefix} seq={seq} ttl={ttl}",
                stage.as_str()
            ),
            RecordBody::Bgp {
                link,
                stage,
                msg,
                prefix,
                session,
                id,
            } => {
                write!(f, "kind=bgp link={link} stage={} msg={} prefix=", stage.as_str(), msg.as_str())?;
                match prefix {
                    Some(p) => write!(f, "{p}")?,
                    None => f.write_str("-")?,
                }
                write!(f, " session={session} id={id}")
            }
            RecordBody::Summary { drops } => write!(f, "kind=summary drops={drops}"),
        }
    }
}

impl FromStr for TraceRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut fields: Vec<(&str, &str)> = Vec::with_capacity(8);
        for tok in line.split(' ') {
            let (k, v) = tok.split_once('=').ok_or_else(|| format!("expected key=value, got {tok:?}"))?;
            if fields.iter().any(|(seen, _)| *seen == k) {
                return Err(format!("field {k} repeated"));
            }
            fields.push((k, v));
        }
        let mut take = |key: &str| -> Result<&str, String> {
            let i = fields
                .iter()
                .position(|(k, _)| *k == key)
                .ok_or_else(|| format!("missing field {key}"))?;
            Ok(fields.swap_remove(i).1)
        };
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad {key} {v:?}"))
        }
        let ts = num("ts", take("ts")?)?;
        let body = match take("kind")? {
            "probe" => RecordBody::Probe {
                link: take("link")?.parse()?,
                stage: take("stage")?.parse()?,
                src: num("src", take("src")?)?,
                prefix: num("prefix", take("prefix")?)?,
                seq: num("seq", take("seq")?)?,
                ttl: num("ttl", take("ttl")?)?,
            },
            "bgp" => RecordBody::Bgp {
                link: take("link")?.parse()?,
                stage: take("stage")?.parse()?,
                msg: take("msg")?.parse()?,
                prefix: match take("prefix")? {
                    "-" => None,
                    v => Some(num("prefix", v)?),
                },
                session: take("session")?.parse()?,
                id: num("id", take("id")?)?,
            },
            "summary" => RecordBody::Summary {
                drops: num("drops", take("drops")?)?,
            },
            other => return Err(format!("unknown kind {other:?}")),
        };
        if let Some((k, _)) = fields.first() {
            return Err(format!("unexpected field {k}"));
        }
        Ok(TraceRecord { ts, body })
    }
}
