use super::{stable_states_deliver, walk_packet, DataPlane, ProbeConfig, ProbeError, ProbeFate};
use crate::model::{PrefixId, RouterId};
use crate::sim::Attribution;
use crate::Micros;

/// Outcome of probing one (source, prefix) at a fixed rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesResult {
    pub sent: u64,
    pub dropped: u64,
    /// Dropped packets that both stable states would have delivered.
    pub dropped_violating: u64,
    /// Drops when classified under the other attribution rule.
    pub alt_dropped: u64,
    pub probe_estimate: Micros,
    pub alt_estimate: Micros,
    /// Every probe in the first and last `edge_span` of the window was delivered.
    pub edges_ok: bool,
}

impl ProbeConfig {
    pub fn other_attribution(&self) -> Attribution {
        match self.attribution {
            Attribution::AtEmission => Attribution::EgressReceipt,
            Attribution::EgressReceipt => Attribution::AtEmission,
        }
    }
}

/// Sends probes from `src` toward `prefix` every `1/rate` over the window
/// around the event at `t0`, handing each fate to `sink` in departure order.
///
/// The estimate is the number of violating drops times the probe spacing.
pub fn probe_series(
    dp: DataPlane<'_>,
    src: RouterId,
    prefix: PrefixId,
    t0: Micros,
    cfg: &ProbeConfig,
    mut sink: impl FnMut(ProbeFate),
) -> Result<SeriesResult, ProbeError> {
    cfg.validate()?;
    let spacing = cfg.spacing();
    let stable = stable_states_deliver(dp, src, prefix, cfg);
    let (first, last) = (t0 + cfg.window.0, t0 + cfg.window.1);
    let alt = cfg.other_attribution();
    let mut res = SeriesResult {
        sent: 0,
        dropped: 0,
        dropped_violating: 0,
        alt_dropped: 0,
        probe_estimate: 0,
        alt_estimate: 0,
        edges_ok: true,
    };
    let mut seq = 0u64;
    let mut depart = first;
    while depart < last {
        let walk = walk_packet(dp, src, prefix, depart, cfg);
        let dropped = walk.terminal.is_dropped();
        res.sent += 1;
        if dropped {
            res.dropped += 1;
            if stable {
                res.dropped_violating += 1;
            }
            let on_edge = depart < first + cfg.edge_span || depart >= last - cfg.edge_span;
            if on_edge {
                res.edges_ok = false;
            }
        }
        if stable && walk.terminal.reclassify(prefix, dp.activity, alt).is_dropped() {
            res.alt_dropped += 1;
        }
        sink(ProbeFate {
            src,
            prefix,
            seq,
            departed_at: depart,
            hops: walk.hops,
            terminal: walk.terminal,
            violating: dropped && stable,
        });
        seq += 1;
        depart += spacing;
    }
    res.probe_estimate = res.dropped_violating as Micros * spacing;
    res.alt_estimate = res.alt_dropped as Micros * spacing;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::total_length;
    use crate::probe::tests::{dp, path3};
    use crate::probe::exact_violation_intervals;
    use crate::{MS, SEC};

    #[test]
    fn path3_estimate_close_to_exact() {
        let (net, out) = path3(2, 100 * MS);
        let cfg = ProbeConfig::default();
        let mut fates = Vec::new();
        let r = probe_series(dp(&net, &out), RouterId(1), PrefixId(0), 0, &cfg, |f| fates.push(f)).unwrap();
        assert_eq!(r.sent, 4000);
        assert!(r.edges_ok);
        assert!((r.probe_estimate - 360 * MS).abs() <= 2 * MS);
        assert_eq!(fates.len(), 4000);
        assert!(fates.windows(2).all(|w| w[0].seq + 1 == w[1].seq));
    }

    #[test]
    fn deflection_scenario_estimate() {
        let (net, out) = path3(1, 100 * MS);
        let cfg = ProbeConfig::default();
        let r = probe_series(dp(&net, &out), RouterId(2), PrefixId(0), 0, &cfg, |_| {}).unwrap();
        assert!((r.probe_estimate - 340 * MS).abs() <= 3 * MS);
    }

    #[test]
    fn estimate_tracks_exact_at_all_rates() {
        for backup in [1, 2] {
            let (net, out) = path3(backup, 37 * MS + 3);
            for rate in [1_000, 10_000, 100_000] {
                let cfg = ProbeConfig {
                    rate_pps: rate,
                    ..ProbeConfig::default()
                };
                for src in 0..3 {
                    let d = dp(&net, &out);
                    let iv = exact_violation_intervals(d, RouterId(src), PrefixId(0), &cfg);
                    let r = probe_series(d, RouterId(src), PrefixId(0), 0, &cfg, |_| {}).unwrap();
                    let bound = (iv.len() as Micros + 1) * cfg.spacing();
                    assert!((r.probe_estimate - total_length(&iv)).abs() <= bound);
                }
            }
        }
    }

    #[test]
    fn short_window_fails_edge_check() {
        let (net, out) = path3(2, 100 * MS);
        let cfg = ProbeConfig {
            window: (-SEC / 2, SEC),
            ..ProbeConfig::default()
        };
        let r = probe_series(dp(&net, &out), RouterId(1), PrefixId(0), 0, &cfg, |_| {}).unwrap();
        assert!(!r.edges_ok);
    }

    #[test]
    fn delivered_everywhere_estimates_zero() {
        let (net, out) = path3(2, 100 * MS);
        let r = probe_series(dp(&net, &out), RouterId(1), PrefixId(0), 100 * SEC, &ProbeConfig::default(), |_| {}).unwrap();
        assert_eq!((r.dropped, r.probe_estimate), (0, 0));
    }
}
