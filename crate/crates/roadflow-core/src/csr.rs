//! Compact adjacency shared by the shortest-path routines.
//!
//! Nodes are addressed by dense indices into the sorted id list, and edge
//! slots follow the canonical (from, to, key) order of the graph, so a slot
//! doubles as an index into any per-edge weight vector built in that order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::graph::{NodeId, RoadGraph};

pub(crate) const NO_PRED: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Csr {
    ids: Vec<NodeId>,
    offsets: Vec<u32>,
    targets: Vec<u32>,
    sources: Vec<u32>,
}

impl Csr {
    pub fn from_graph(g: &RoadGraph) -> Self {
        let ids: Vec<NodeId> = g.node_ids().collect();
        let index = |id: NodeId| -> u32 {
            ids.binary_search(&id).expect("edge endpoint exists") as u32
        };
        let mut offsets = Vec::with_capacity(ids.len() + 1);
        let mut targets = Vec::with_capacity(g.edge_count());
        let mut sources = Vec::with_capacity(g.edge_count());
        offsets.push(0u32);
        let mut edges = g.edges().peekable();
        for (i, &id) in ids.iter().enumerate() {
            while let Some(e) = edges.peek() {
                if e.id.from != id {
                    break;
                }
                targets.push(index(e.id.to));
                sources.push(i as u32);
                edges.next();
            }
            offsets.push(targets.len() as u32);
        }
        debug_assert!(edges.next().is_none());
        Self {
            ids,
            offsets,
            targets,
            sources,
        }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn m(&self) -> usize {
        self.targets.len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<u32> {
        self.ids.binary_search(&id).ok().map(|i| i as u32)
    }

    pub fn id_of(&self, idx: u32) -> NodeId {
        self.ids[idx as usize]
    }

    pub fn out_slots(&self, node: u32) -> std::ops::Range<usize> {
        self.offsets[node as usize] as usize..self.offsets[node as usize + 1] as usize
    }

    pub fn target(&self, slot: usize) -> u32 {
        self.targets[slot]
    }

    pub fn source(&self, slot: usize) -> u32 {
        self.sources[slot]
    }

    /// Single-source shortest paths over positive edge weights.
    ///
    /// `weights` is indexed by edge slot. `dist`/`pred_slot` are resized and
    /// overwritten; unreachable nodes keep `f64::INFINITY` and `NO_PRED`.
    /// When `until` is given (as node indices), the search stops once all of
    /// them are settled; entries for other nodes are then unspecified.
    ///
    /// Ties are broken deterministically: among equal-distance paths the one
    /// whose predecessor has the smallest node id wins, and parallel edges
    /// resolve to the smallest key.
    pub fn dijkstra(
        &self,
        src: u32,
        weights: &[f64],
        until: Option<&[u32]>,
        dist: &mut Vec<f64>,
        pred_slot: &mut Vec<u32>,
    ) {
        debug_assert_eq!(weights.len(), self.m());
        let n = self.n();
        dist.clear();
        dist.resize(n, f64::INFINITY);
        pred_slot.clear();
        pred_slot.resize(n, NO_PRED);

        let mut needed: Vec<u32> = until.map(|u| u.to_vec()).unwrap_or_default();
        needed.sort_unstable();
        needed.dedup();
        let mut remaining = needed.len();

        let mut heap = BinaryHeap::new();
        dist[src as usize] = 0.0;
        heap.push(Entry {
            dist: 0.0,
            node: src,
        });
        while let Some(Entry { dist: d, node: u }) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            if remaining > 0 && needed.binary_search(&u).is_ok() {
                remaining -= 1;
                if remaining == 0 && until.is_some() {
                    return;
                }
            }
            for slot in self.out_slots(u) {
                let w = weights[slot];
                debug_assert!(w > 0.0, "edge weights must be positive");
                let t = self.targets[slot] as usize;
                let nd = d + w;
                if nd < dist[t] {
                    dist[t] = nd;
                    pred_slot[t] = slot as u32;
                    heap.push(Entry {
                        dist: nd,
                        node: t as u32,
                    });
                } else if nd == dist[t] && pred_slot[t] != NO_PRED {
                    // Equal-cost alternative: prefer the smaller predecessor
                    // node. Slots from one node arrive in ascending key
                    // order, so the first parallel edge wins by default.
                    if u < self.sources[pred_slot[t] as usize] {
                        pred_slot[t] = slot as u32;
                    }
                }
            }
        }
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    node: u32,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so the max-heap pops the smallest distance; equal distances
    // pop the smaller node index first for determinism.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .expect("distances are finite")
            .then_with(|| other.node.cmp(&self.node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_util::{edge, node};
    use crate::graph::RoadGraph;
    use proptest::prelude::*;

    fn weighted(edges: &[(i64, i64, i64, f64)]) -> (Csr, Vec<f64>) {
        let mut g = RoadGraph::new();
        let mut ids: Vec<i64> = edges.iter().flat_map(|&(a, b, _, _)| [a, b]).collect();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            g.add_node(node(id)).unwrap();
        }
        for &(a, b, k, _) in edges {
            g.add_edge(edge(a, b, k)).unwrap();
        }
        let csr = Csr::from_graph(&g);
        // Weight lookup must follow canonical edge order.
        let mut sorted: Vec<_> = edges.to_vec();
        sorted.sort_by_key(|&(a, b, k, _)| (a, b, k));
        let w: Vec<f64> = sorted.iter().map(|&(_, _, _, w)| w).collect();
        (csr, w)
    }

    fn run(csr: &Csr, w: &[f64], src: u32) -> (Vec<f64>, Vec<u32>) {
        let (mut dist, mut pred) = (Vec::new(), Vec::new());
        csr.dijkstra(src, w, None, &mut dist, &mut pred);
        (dist, pred)
    }

    #[test]
    fn line_distances() {
        let (csr, w) = weighted(&[(1, 2, 0, 3.0), (2, 3, 0, 4.0)]);
        let (dist, pred) = run(&csr, &w, 0);
        assert_eq!(dist, vec![0.0, 3.0, 7.0]);
        assert_eq!(pred[0], NO_PRED);
        assert_eq!(csr.source(pred[2] as usize), 1);
    }

    #[test]
    fn equal_cost_diamond_prefers_smaller_predecessor() {
        // 1 -> 2 -> 4 and 1 -> 3 -> 4, both cost 2.
        let (csr, w) = weighted(&[
            (1, 2, 0, 1.0),
            (1, 3, 0, 1.0),
            (2, 4, 0, 1.0),
            (3, 4, 0, 1.0),
        ]);
        let (dist, pred) = run(&csr, &w, 0);
        assert_eq!(dist[3], 2.0);
        assert_eq!(csr.id_of(csr.source(pred[3] as usize)), 2);
    }

    #[test]
    fn equal_parallel_edges_prefer_smaller_key() {
        let (csr, w) = weighted(&[(1, 2, 0, 5.0), (1, 2, 1, 5.0)]);
        let (_, pred) = run(&csr, &w, 0);
        assert_eq!(pred[1], 0);
    }

    #[test]
    fn early_exit_matches_full_run_on_requested_nodes() {
        let (csr, w) = weighted(&[
            (1, 2, 0, 1.0),
            (2, 3, 0, 1.0),
            (3, 4, 0, 1.0),
            (1, 4, 0, 10.0),
        ]);
        let (full, _) = run(&csr, &w, 0);
        let (mut dist, mut pred) = (Vec::new(), Vec::new());
        csr.dijkstra(0, &w, Some(&[2]), &mut dist, &mut pred);
        assert_eq!(dist[2], full[2]);
    }

    /// O(n m) relaxation oracle.
    fn bellman_ford(csr: &Csr, w: &[f64], src: u32) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; csr.n()];
        dist[src as usize] = 0.0;
        for _ in 0..csr.n() {
            let mut changed = false;
            for u in 0..csr.n() as u32 {
                if dist[u as usize].is_infinite() {
                    continue;
                }
                for slot in csr.out_slots(u) {
                    let t = csr.target(slot) as usize;
                    if dist[u as usize] + w[slot] < dist[t] {
                        dist[t] = dist[u as usize] + w[slot];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist
    }

    proptest! {
        #[test]
        fn distances_match_relaxation_oracle(
            raw in prop::collection::vec((0i64..12, 0i64..12, 1u32..1000), 1..40),
        ) {
            let edges: Vec<(i64, i64, i64, f64)> = raw
                .iter()
                .enumerate()
                .filter(|(_, &(a, b, _))| a != b)
                .map(|(i, &(a, b, w))| (a, b, i as i64, w as f64))
                .collect();
            prop_assume!(!edges.is_empty());
            let (csr, w) = weighted(&edges);
            let (dist, pred) = run(&csr, &w, 0);
            let oracle = bellman_ford(&csr, &w, 0);
            for i in 0..csr.n() {
                prop_assert!(
                    (dist[i] - oracle[i]).abs() <= 1e-9 * oracle[i].max(1.0)
                        || (dist[i].is_infinite() && oracle[i].is_infinite())
                );
                // Predecessor chains must reproduce the distance exactly.
                if dist[i].is_finite() && i != 0 {
                    let mut acc = 0.0;
                    let mut cur = i;
                    let mut hops = 0;
                    while cur != 0 {
                        let slot = pred[cur] as usize;
                        acc += w[slot];
                        cur = csr.source(slot) as usize;
                        hops += 1;
                        prop_assert!(hops <= csr.n());
                    }
                    prop_assert!((acc - dist[i]).abs() <= 1e-9 * acc.max(1.0));
                }
            }
        }
    }
}
