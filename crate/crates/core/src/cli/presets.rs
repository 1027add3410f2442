//! Built-in topologies and scenarios.
//!
//! Abilene scenarios are named `abilene-<event>[-visible][-rr-<routers>][-n<prefixes>][-backup-<router>]`,
//! for example `abilene-withdraw-visible-rr-se-ny`. `<event>` is one of
//! `withdraw`, `update-worse` and `announce`; reflectors and the backup
//! router use the lower-case router codes listed by [`ABILENE_ROUTERS`].

use super::scenario::{
    CaptureSection, EventKindName, EventSection, IbgpModeName, IbgpSection, LinkSpec, PeerSpec, PrefixSelection, ProbeSection,
    ProcessingSection, RouteSpec, ScenarioFile, TopologySection, SCENARIO_VERSION,
};
use crate::{Micros, MS};

/// Seattle, Sunnyvale, Los Angeles, Denver, Kansas City, Houston, Atlanta,
/// Indianapolis, Chicago, Washington DC, New York.
pub const ABILENE_ROUTERS: [&str; 11] = ["SE", "SV", "LA", "DN", "KC", "HS", "AT", "IN", "CH", "DC", "NY"];

/// Link delays in microseconds, roughly proportional to geographic distance.
const ABILENE_LINKS: [(&str, &str, Micros); 14] = [
    ("SE", "SV", 5_600),
    ("SE", "DN", 8_200),
    ("SV", "LA", 2_500),
    ("SV", "DN", 7_600),
    ("LA", "HS", 11_200),
    ("DN", "KC", 4_400),
    ("KC", "HS", 5_020),
    ("HS", "AT", 5_700),
    ("KC", "IN", 3_700),
    ("IN", "CH", 1_300),
    ("IN", "AT", 3_500),
    ("AT", "DC", 4_400),
    ("CH", "NY", 5_800),
    ("DC", "NY", 1_700),
];

/// Processing cost of the path scenarios.
pub const PATH3_PROCESSING: Micros = 100 * MS;

/// Router names and links of a named topology.
pub fn topology(name: &str) -> Option<(Vec<String>, Vec<LinkSpec>)> {
    match name {
        "abilene" => Some((
            ABILENE_ROUTERS.iter().map(|s| s.to_string()).collect(),
            ABILENE_LINKS
                .iter()
                .map(|&(a, b, d)| LinkSpec {
                    a: a.into(),
                    b: b.into(),
                    delay_us: d,
                    igp_cost: 1,
                })
                .collect(),
        )),
        _ => None,
    }
}

/// Names of the presets shipped as examples; [`preset`] accepts more.
pub fn preset_names() -> Vec<String> {
    let mut names = vec!["path3".to_string(), "path3-deflection".to_string()];
    for ev in ["withdraw", "update-worse", "announce"] {
        names.push(format!("abilene-{ev}"));
        for rr in ["se", "se-ny", "at-ny-se"] {
            names.push(format!("abilene-{ev}-rr-{rr}"));
        }
    }
    for ev in ["withdraw", "update-worse"] {
        names.push(format!("abilene-{ev}-visible"));
        for rr in ["se", "se-ny"] {
            names.push(format!("abilene-{ev}-visible-rr-{rr}"));
        }
    }
    for n in [1, 10, 100, 1000, 100_000] {
        names.push(format!("abilene-withdraw-n{n}"));
    }
    for r in ABILENE_ROUTERS {
        if r != "LA" && r != "KC" {
            names.push(format!("abilene-withdraw-backup-{}", r.to_lowercase()));
        }
    }
    names
}

pub fn preset(name: &str) -> Option<ScenarioFile> {
    match name {
        "path3" => Some(path3("path3", "r3")),
        "path3-deflection" => Some(path3("path3-deflection", "r2")),
        _ => abilene(name),
    }
}

/// Three routers in a row with 10 ms links; the preferred peer sits at r1
/// and the backup at `backup`.
fn path3(name: &str, backup: &str) -> ScenarioFile {
    let link = |a: &str, b: &str| LinkSpec {
        a: a.into(),
        b: b.into(),
        delay_us: 10 * MS,
        igp_cost: 1,
    };
    let peer = |name: &str, router: &str| PeerSpec {
        name: name.into(),
        router: router.into(),
        delay_us: 10 * MS,
    };
    ScenarioFile {
        version: SCENARIO_VERSION,
        name: name.into(),
        seed: 1,
        samples: 1,
        prefixes: 1,
        topology: TopologySection {
            preset: None,
            routers: vec!["r1".into(), "r2".into(), "r3".into()],
            links: vec![link("r1", "r2"), link("r2", "r3")],
            peers: vec![peer("e1", "r1"), peer("e2", backup)],
        },
        ibgp: IbgpSection::default(),
        routes: vec![
            RouteSpec {
                peer: "e1".into(),
                as_path_len: 1,
            },
            RouteSpec {
                peer: "e2".into(),
                as_path_len: 2,
            },
        ],
        event: EventSection {
            kind: EventKindName::Withdraw,
            peer: "e1".into(),
            at_us: 0,
            as_path_len: None,
            prepend: None,
        },
        processing: ProcessingSection {
            per_prefix_cost_us: PATH3_PROCESSING,
            ..ProcessingSection::default()
        },
        probe: ProbeSection {
            select: PrefixSelection::First,
            count: 1,
            ..ProbeSection::default()
        },
        capture: CaptureSection::default(),
    }
}

fn router_code(code: &str) -> Option<&'static str> {
    ABILENE_ROUTERS.iter().copied().find(|r| r.eq_ignore_ascii_case(code))
}

fn abilene(name: &str) -> Option<ScenarioFile> {
    let rest = name.strip_prefix("abilene-")?;
    let (kind, mut rest) = [
        ("withdraw", EventKindName::Withdraw),
        ("update-worse", EventKindName::UpdateWorse),
        ("announce", EventKindName::Announce),
    ]
    .into_iter()
    .find_map(|(s, k)| rest.strip_prefix(s).map(|r| (k, r)))?;

    let mut visible = false;
    if let Some(r) = rest.strip_prefix("-visible") {
        visible = true;
        rest = r;
    }
    let mut reflectors = Vec::new();
    if let Some(r) = rest.strip_prefix("-rr") {
        rest = r;
        while let Some(r) = rest.strip_prefix('-') {
            let code = r.get(..2)?;
            let Some(router) = router_code(code) else { break };
            if reflectors.contains(&router.to_string()) {
                return None;
            }
            reflectors.push(router.to_string());
            rest = &r[2..];
        }
        if reflectors.is_empty() {
            return None;
        }
    }
    let mut prefixes = 10_000u32;
    if let Some(r) = rest.strip_prefix("-n") {
        let digits = r.bytes().take_while(u8::is_ascii_digit).count();
        prefixes = r[..digits].parse().ok().filter(|&n| n > 0)?;
        rest = &r[digits..];
    }
    let mut backup = "KC";
    if let Some(r) = rest.strip_prefix("-backup-") {
        backup = router_code(r).filter(|&b| b != "LA")?;
        rest = "";
    }
    if !rest.is_empty() || (visible && kind == EventKindName::Announce) {
        return None;
    }

    let backup_len = if visible { 1 } else { 2 };
    let (routes, event) = match kind {
        EventKindName::Announce => (
            vec![RouteSpec {
                peer: "backup".into(),
                as_path_len: 2,
            }],
            EventSection {
                kind,
                peer: "primary".into(),
                at_us: 0,
                as_path_len: Some(1),
                prepend: None,
            },
        ),
        _ => (
            vec![
                RouteSpec {
                    peer: "primary".into(),
                    as_path_len: 1,
                },
                RouteSpec {
                    peer: "backup".into(),
                    as_path_len: backup_len,
                },
            ],
            EventSection {
                kind,
                peer: "primary".into(),
                at_us: 0,
                as_path_len: None,
                prepend: (kind == EventKindName::UpdateWorse).then_some(2),
            },
        ),
    };
    let ibgp = if reflectors.is_empty() {
        IbgpSection::default()
    } else {
        IbgpSection {
            mode: IbgpModeName::RouteReflection,
            reflectors,
        }
    };
    Some(ScenarioFile {
        version: SCENARIO_VERSION,
        name: name.into(),
        seed: 1,
        samples: 50,
        prefixes,
        topology: TopologySection {
            preset: Some("abilene".into()),
            routers: Vec::new(),
            links: Vec::new(),
            peers: vec![
                PeerSpec {
                    name: "primary".into(),
                    router: "LA".into(),
                    delay_us: 0,
                },
                PeerSpec {
                    name: "backup".into(),
                    router: backup.into(),
                    delay_us: 0,
                },
            ],
        },
        ibgp,
        routes,
        event,
        processing: ProcessingSection {
            jitter: 0.1,
            ..ProcessingSection::default()
        },
        probe: ProbeSection {
            count: 10.min(prefixes as usize),
            ..ProbeSection::default()
        },
        capture: CaptureSection::default(),
    })
}
