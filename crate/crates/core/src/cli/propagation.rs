//! Total propagation delay: how long the news of a lost route and the
//! replacement route need to reach each router, without processing.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::report::ReportError;
use super::scenario::Scenario;
use crate::model::RouterId;
use crate::sim::EventKind;
use crate::{fmt_ms, Micros};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationRow {
    pub router: String,
    pub to_egress_us: Micros,
    pub egress_to_backup_us: Micros,
    pub backup_to_router_us: Micros,
    pub total_us: Micros,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PropagationError {
    #[error("the event must replace the route of the triggering peer (withdraw or update-worse)")]
    NotWithdrawLike,
    #[error("expected exactly one backup border router besides the initial egress, found {0}")]
    AmbiguousBackup(usize),
}

/// Per router: delay to the initial egress including its external link,
/// plus egress to backup (again including the external link, which the
/// event has to cross first), plus backup back to the router. The backup
/// router itself waits for the round trip to the initial egress.
pub fn propagation_table(scn: &Scenario) -> Result<Vec<PropagationRow>, PropagationError> {
    if matches!(scn.event.kind, EventKind::Announce { .. }) {
        return Err(PropagationError::NotWithdrawLike);
    }
    let topo = &scn.net.topology;
    let igp = &scn.net.igp;
    let peer = scn.event.at_peer;
    let egress = topo.peer(peer).attached_to;
    let ext = topo.peer(peer).propagation_delay;
    let mut backups: Vec<RouterId> = scn
        .route_peers()
        .into_iter()
        .filter(|&p| p != peer)
        .map(|p| topo.peer(p).attached_to)
        .filter(|&r| r != egress)
        .collect();
    backups.sort_unstable();
    backups.dedup();
    let [backup] = backups[..] else {
        return Err(PropagationError::AmbiguousBackup(backups.len()));
    };
    let between = igp.path_delay(egress, backup);
    Ok(topo
        .routers()
        .map(|r| {
            let (to_egress, egress_to_backup, backup_to_router) = if r == backup {
                (between + ext, between + ext, 0)
            } else {
                (igp.path_delay(r, egress) + ext, ext + between, igp.path_delay(backup, r))
            };
            PropagationRow {
                router: topo.router_name(r).to_string(),
                to_egress_us: to_egress,
                egress_to_backup_us: egress_to_backup,
                backup_to_router_us: backup_to_router,
                total_us: to_egress + egress_to_backup + backup_to_router,
            }
        })
        .collect())
}

pub fn write_csv(out: impl Write, rows: &[PropagationRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["router", "to_egress_ms", "egress_to_backup_ms", "backup_to_router_ms", "total_ms"])?;
    for r in rows {
        w.write_record([
            r.router.clone(),
            fmt_ms(r.to_egress_us),
            fmt_ms(r.egress_to_backup_us),
            fmt_ms(r.backup_to_router_us),
            fmt_ms(r.total_us),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::presets::preset;
    use crate::cli::scenario::{LinkSpec, PeerSpec};
    use crate::MS;

    fn totals(name: &str) -> Vec<Micros> {
        let scn = preset(name).unwrap().resolve().unwrap();
        propagation_table(&scn).unwrap().iter().map(|r| r.total_us).collect()
    }

    #[test]
    fn path3_totals() {
        // r1: 0+10 | 10+20 | 20; r2: 10+10 | 10+20 | 10; r3 (backup): 2 * (20 + 10)
        assert_eq!(totals("path3"), [60 * MS, 60 * MS, 60 * MS]);
        // backup at r2: r1 10 + 20 + 10, r2 2 * (10 + 10), r3 30 + 20 + 10
        assert_eq!(totals("path3-deflection"), [40 * MS, 40 * MS, 60 * MS]);
    }

    #[test]
    fn star_with_uniform_delays() {
        let d = 3 * MS;
        let mut f = preset("path3").unwrap();
        f.topology.routers = vec!["hub".into(), "a".into(), "b".into(), "c".into(), "e".into()];
        f.topology.links = ["a", "b", "c", "e"]
            .iter()
            .map(|leaf| LinkSpec {
                a: "hub".into(),
                b: leaf.to_string(),
                delay_us: d,
                igp_cost: 1,
            })
            .collect();
        f.topology.peers = vec![
            PeerSpec {
                name: "e1".into(),
                router: "hub".into(),
                delay_us: 0,
            },
            PeerSpec {
                name: "e2".into(),
                router: "a".into(),
                delay_us: 0,
            },
        ];
        let scn = f.resolve().unwrap();
        let t = propagation_table(&scn).unwrap();
        // initial egress at the hub: every other leaf is d + d + 2d away
        let got: Vec<Micros> = t.iter().map(|r| r.total_us).collect();
        assert_eq!(got, [2 * d, 2 * d, 4 * d, 4 * d, 4 * d]);
    }

    #[test]
    fn announce_is_rejected() {
        let scn = preset("abilene-announce-n10").unwrap().resolve().unwrap();
        assert_eq!(propagation_table(&scn), Err(PropagationError::NotWithdrawLike));
    }
}
