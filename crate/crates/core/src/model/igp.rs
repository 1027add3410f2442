use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{ModelError, RouterId, Topology};
use crate::Micros;

/// Converged, static IGP forwarding state: all-pairs shortest paths.
///
/// Paths minimize IGP cost first and total propagation delay second; the
/// remaining ties pick the neighbor with the smallest router id. Because both
/// metrics are additive, every suffix of a chosen path is itself the chosen
/// path of its first router, so `next_hop` chains never loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IgpState {
    n: usize,
    next_hop: Vec<Option<RouterId>>,
    path_delay: Vec<Micros>,
    path_cost: Vec<u64>,
}

impl IgpState {
    fn at(&self, src: RouterId, dst: RouterId) -> usize {
        src.index() * self.n + dst.index()
    }

    /// Next router on the path from `src` to `dst`; `None` when `src == dst`.
    pub fn next_hop(&self, src: RouterId, dst: RouterId) -> Option<RouterId> {
        self.next_hop[self.at(src, dst)]
    }

    pub fn path_delay(&self, src: RouterId, dst: RouterId) -> Micros {
        self.path_delay[self.at(src, dst)]
    }

    pub fn path_cost(&self, src: RouterId, dst: RouterId) -> u64 {
        self.path_cost[self.at(src, dst)]
    }

    /// Full router sequence from `src` to `dst`, both included.
    pub fn path(&self, src: RouterId, dst: RouterId) -> Vec<RouterId> {
        let mut out = vec![src];
        let mut cur = src;
        while let Some(next) = self.next_hop(cur, dst) {
            out.push(next);
            cur = next;
        }
        out
    }

    pub fn num_routers(&self) -> usize {
        self.n
    }
}

/// All-pairs shortest paths over `(igp_cost, propagation_delay)`.
pub fn compute_igp(topology: &Topology) -> Result<IgpState, ModelError> {
    let n = topology.num_routers();
    let mut cost = vec![u64::MAX; n * n];
    let mut delay = vec![Micros::MAX; n * n];
    for src in topology.routers() {
        let dist = dijkstra(topology, src);
        for (dst, d) in dist.into_iter().enumerate() {
            let Some((c, dl)) = d else {
                return Err(ModelError::Disconnected(
                    topology.router_name(RouterId(dst as u32)).to_string(),
                ));
            };
            cost[src.index() * n + dst] = c;
            delay[src.index() * n + dst] = dl;
        }
    }

    let mut next_hop = vec![None; n * n];
    for src in topology.routers() {
        for dst in topology.routers() {
            if src == dst {
                continue;
            }
            let want = (cost[src.index() * n + dst.index()], delay[src.index() * n + dst.index()]);
            // neighbors() is sorted by id, so the first match is the smallest
            let hop = topology.neighbors(src).find_map(|(nb, link)| {
                let via = (
                    link.igp_cost as u64 + cost[nb.index() * n + dst.index()],
                    link.propagation_delay + delay[nb.index() * n + dst.index()],
                );
                (via == want).then_some(nb)
            });
            next_hop[src.index() * n + dst.index()] = hop;
        }
    }

    Ok(IgpState {
        n,
        next_hop,
        path_delay: delay,
        path_cost: cost,
    })
}

fn dijkstra(topology: &Topology, src: RouterId) -> Vec<Option<(u64, Micros)>> {
    let mut dist: Vec<Option<(u64, Micros)>> = vec![None; topology.num_routers()];
    let mut heap = BinaryHeap::new();
    dist[src.index()] = Some((0, 0));
    heap.push(Reverse((0u64, 0 as Micros, src)));
    while let Some(Reverse((c, d, r))) = heap.pop() {
        if dist[r.index()] != Some((c, d)) {
            continue;
        }
        for (nb, link) in topology.neighbors(r) {
            let cand = (c + link.igp_cost as u64, d + link.propagation_delay);
            if dist[nb.index()].is_none_or(|cur| cand < cur) {
                dist[nb.index()] = Some(cand);
                heap.push(Reverse((cand.0, cand.1, nb)));
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Link;

    fn topo(n: usize, links: &[(u32, u32, i64, u32)]) -> Topology {
        Topology::new(
            (0..n).map(|i| format!("r{}", i + 1)).collect(),
            links
                .iter()
                .map(|&(a, b, d, c)| Link {
                    a: RouterId(a),
                    b: RouterId(b),
                    propagation_delay: d,
                    igp_cost: c,
                })
                .collect(),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn path3_next_hop_and_delay() {
        let t = topo(3, &[(0, 1, 10_000, 1), (1, 2, 10_000, 1)]);
        let igp = compute_igp(&t).unwrap();
        assert_eq!(igp.next_hop(RouterId(0), RouterId(2)), Some(RouterId(1)));
        assert_eq!(igp.path_delay(RouterId(0), RouterId(2)), 20_000);
        assert_eq!(igp.next_hop(RouterId(1), RouterId(1)), None);
        assert_eq!(igp.path_delay(RouterId(1), RouterId(1)), 0);
    }

    /// Enumerates the two directions around a ring and picks the smallest
    /// (cost, delay, first hop) key by brute force.
    fn ring_oracle(n: u32, delays: &[i64], src: u32, dst: u32) -> (u32, i64) {
        let cw_hops = (dst + n - src) % n;
        let ccw_hops = (src + n - dst) % n;
        let cw_delay: i64 = (0..cw_hops).map(|i| delays[((src + i) % n) as usize]).sum();
        let ccw_delay: i64 = (0..ccw_hops)
            .map(|i| delays[((src + n - i - 1) % n) as usize])
            .sum();
        let cw = (cw_hops, cw_delay, (src + 1) % n);
        let ccw = (ccw_hops, ccw_delay, (src + n - 1) % n);
        let best = cw.min(ccw);
        (best.2, best.1)
    }

    #[test]
    fn ring_tie_goes_to_smaller_delay_side() {
        // link i joins router i and i+1
        let delays = [1_000, 5_000, 2_000, 1_000];
        let t = topo(
            4,
            &[
                (0, 1, delays[0], 1),
                (1, 2, delays[1], 1),
                (2, 3, delays[2], 1),
                (3, 0, delays[3], 1),
            ],
        );
        let igp = compute_igp(&t).unwrap();
        // r1 -> r3: both sides have cost 2; via r2 costs 6 ms, via r4 costs 3 ms
        assert_eq!(igp.next_hop(RouterId(0), RouterId(2)), Some(RouterId(3)));
        assert_eq!(igp.path_delay(RouterId(0), RouterId(2)), 3_000);
        for src in 0..4 {
            for dst in 0..4 {
                if src == dst {
                    continue;
                }
                let (hop, d) = ring_oracle(4, &delays, src, dst);
                assert_eq!(igp.next_hop(RouterId(src), RouterId(dst)), Some(RouterId(hop)));
                assert_eq!(igp.path_delay(RouterId(src), RouterId(dst)), d);
            }
        }
    }

    #[test]
    fn full_tie_uses_smallest_next_hop() {
        let t = topo(4, &[(0, 1, 1_000, 1), (1, 2, 1_000, 1), (2, 3, 1_000, 1), (3, 0, 1_000, 1)]);
        let igp = compute_igp(&t).unwrap();
        assert_eq!(igp.next_hop(RouterId(0), RouterId(2)), Some(RouterId(1)));
        assert_eq!(igp.next_hop(RouterId(2), RouterId(0)), Some(RouterId(1)));
    }

    #[test]
    fn cost_beats_delay() {
        let t = topo(3, &[(0, 1, 1_000, 5), (0, 2, 10_000, 1), (2, 1, 10_000, 1)]);
        let igp = compute_igp(&t).unwrap();
        assert_eq!(igp.path(RouterId(0), RouterId(1)), vec![RouterId(0), RouterId(2), RouterId(1)]);
        assert_eq!(igp.path_cost(RouterId(0), RouterId(1)), 2);
        assert_eq!(igp.path_delay(RouterId(0), RouterId(1)), 20_000);
    }
}
