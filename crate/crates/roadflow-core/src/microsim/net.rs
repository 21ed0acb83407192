//! Static network view used by the simulation: per-edge geometry and speed,
//! lane slot layout for the atlas, node adjacency for intersection control,
//! and route planning over mutable edge weights.

use rand::Rng;

use super::{SimError, Vehicle};
use crate::attrs::EnrichedGraph;
use crate::csr::{Csr, NO_PRED};
use crate::graph::{EdgeId, NodeId};

/// Reroute share per iteration (1-based); later iterations keep the last
/// value.
pub(crate) const REROUTE_FRACTIONS: [f64; 4] = [1.0, 1.0, 0.5, 0.25];

pub struct SimNetwork {
    pub(crate) csr: Csr,
    pub(crate) edge_ids: Vec<EdgeId>,
    pub(crate) length_m: Vec<f64>,
    pub(crate) lanes: Vec<u32>,
    pub(crate) speed_mps: Vec<f64>,
    /// 1 m cells per lane of each edge.
    pub(crate) cells: Vec<u32>,
    /// First atlas lane slot of each edge; lane l of edge e is slot
    /// lane_base[e] + l.
    pub(crate) lane_base: Vec<u32>,
    n_lane_slots: u32,
    /// Inbound / outbound edge slots per dense node index, ascending.
    pub(crate) node_in: Vec<Vec<u32>>,
    pub(crate) node_out: Vec<Vec<u32>>,
}

impl SimNetwork {
    pub fn new(g: &EnrichedGraph) -> Self {
        let csr = Csr::from_graph(g.graph());
        let n = csr.n();
        let mut edge_ids = Vec::with_capacity(g.edge_count());
        let mut length_m = Vec::with_capacity(g.edge_count());
        let mut lanes = Vec::with_capacity(g.edge_count());
        let mut speed_mps = Vec::with_capacity(g.edge_count());
        let mut cells = Vec::with_capacity(g.edge_count());
        let mut lane_base = Vec::with_capacity(g.edge_count());
        let mut node_in: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut node_out: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut slots = 0u32;
        for (i, (e, a)) in g.iter().enumerate() {
            edge_ids.push(e.id);
            length_m.push(e.length_m);
            lanes.push(a.lanes);
            speed_mps.push(a.speed_mps);
            cells.push((e.length_m.ceil() as u32).max(1));
            lane_base.push(slots);
            slots += a.lanes;
            let from = csr.index_of(e.id.from).expect("endpoint in graph");
            let to = csr.index_of(e.id.to).expect("endpoint in graph");
            node_out[from as usize].push(i as u32);
            node_in[to as usize].push(i as u32);
        }
        Self {
            csr,
            edge_ids,
            length_m,
            lanes,
            speed_mps,
            cells,
            lane_base,
            n_lane_slots: slots,
            node_in,
            node_out,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edge_ids.len()
    }

    pub fn node_count(&self) -> usize {
        self.csr.n()
    }

    pub(crate) fn lane_slot(&self, edge: u32, lane: u32) -> u32 {
        debug_assert!(lane < self.lanes[edge as usize]);
        self.lane_base[edge as usize] + lane
    }

    /// Cell counts per lane slot, in slot order, for sizing an atlas.
    pub(crate) fn lane_cell_counts(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.n_lane_slots as usize);
        for e in 0..self.edge_count() {
            for _ in 0..self.lanes[e] {
                out.push(self.cells[e]);
            }
        }
        out
    }

    /// Dense index of the node an edge leads into.
    pub(crate) fn head_node(&self, edge: u32) -> u32 {
        self.csr.target(self.slot_of(edge))
    }

    fn slot_of(&self, edge: u32) -> usize {
        // Edge indices and routing slots coincide: both follow canonical
        // (from, to, key) order.
        edge as usize
    }

    pub fn node_index(&self, id: NodeId) -> Result<u32, SimError> {
        self.csr.index_of(id).ok_or(SimError::UnknownNode(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    /// Seeded from lane count, length, and free-flow speed.
    Init,
    /// Replaced by a measured mean traversal time.
    Measured,
}

/// Per-edge routing weights in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    pub seconds: Vec<f64>,
    pub source: Vec<WeightSource>,
}

/// Initial routing weights: sqrt(lanes) * length / speed. The lane factor
/// deliberately overweights multi-lane edges so early iterations spread
/// traffic onto high-capacity roads.
pub fn init_edge_weights(net: &SimNetwork) -> EdgeWeights {
    let seconds = (0..net.edge_count())
        .map(|e| (net.lanes[e] as f64).sqrt() * net.length_m[e] / net.speed_mps[e])
        .collect();
    EdgeWeights {
        seconds,
        source: vec![WeightSource::Init; net.edge_count()],
    }
}

/// Reroutes a deterministic random subset of vehicles along current
/// shortest paths by `weights`.
///
/// The rerouted share follows the decaying schedule 1, 1, 0.5, 0.25, then
/// 0.25 onward; the subset is drawn without replacement from the seeded
/// generator. Returns the number of vehicles rerouted.
pub fn plan_routes<R: Rng>(
    net: &SimNetwork,
    vehicles: &mut [Vehicle],
    weights: &EdgeWeights,
    iteration: usize,
    rng: &mut R,
) -> Result<usize, SimError> {
    assert!(iteration >= 1);
    assert_eq!(weights.seconds.len(), net.edge_count());
    assert!(weights.seconds.iter().all(|&w| w > 0.0));
    let fraction = REROUTE_FRACTIONS[(iteration - 1).min(REROUTE_FRACTIONS.len() - 1)];
    let n = vehicles.len();
    let m = ((fraction * n as f64).round() as usize).min(n);
    let selected: Vec<usize> = if m == n {
        (0..n).collect()
    } else {
        let mut idx = rand::seq::index::sample(rng, n, m).into_vec();
        idx.sort_unstable();
        idx
    };

    // Distinct origins among the selected vehicles, then one shortest-path
    // tree per origin. With distinct origins capped by the node count, the
    // per-origin search never costs more than the all-pairs sweep it would
    // otherwise amortize into, so the all-pairs branch of the cost model
    // (origins * E log V vs V * E log V) never wins; both produce the same
    // trees.
    let mut by_origin: std::collections::BTreeMap<u32, Vec<u32>> =
        std::collections::BTreeMap::new();
    for &i in &selected {
        let v = &vehicles[i];
        let o = net.node_index(v.origin)?;
        let d = net.node_index(v.dest)?;
        by_origin.entry(o).or_default().push(d);
    }
    let groups: Vec<(u32, Vec<u32>)> = by_origin.into_iter().collect();

    use rayon::prelude::*;
    struct Tree {
        origin: u32,
        dist: Vec<f64>,
        pred: Vec<u32>,
    }
    let trees: Vec<Tree> = groups
        .par_iter()
        .map(|(origin, dests)| {
            let (mut dist, mut pred) = (Vec::new(), Vec::new());
            net.csr
                .dijkstra(*origin, &weights.seconds, Some(dests), &mut dist, &mut pred);
            Tree {
                origin: *origin,
                dist,
                pred,
            }
        })
        .collect();
    let tree_of = |origin: u32| {
        &trees[trees
            .binary_search_by_key(&origin, |t| t.origin)
            .expect("tree built for every origin")]
    };

    for &i in &selected {
        let v = &mut vehicles[i];
        let o = net.node_index(v.origin)?;
        let d = net.node_index(v.dest)?;
        let tree = tree_of(o);
        if tree.dist[d as usize].is_infinite() {
            return Err(SimError::UnreachableDestination(v.origin, v.dest));
        }
        let mut route_rev = Vec::new();
        let mut cur = d;
        while cur != o {
            let slot = tree.pred[cur as usize];
            debug_assert_ne!(slot, NO_PRED);
            route_rev.push(slot);
            cur = net.csr.source(slot as usize);
        }
        route_rev.reverse();
        v.route = route_rev;
    }
    Ok(selected.len())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::attrs::{attrs_from_values, EnrichedGraph};
    use crate::graph::test_util::{edge, node};
    use crate::graph::RoadGraph;
    use crate::microsim::VehicleClass;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    pub(crate) fn grid_net(rows: &[(i64, i64, i64, f64, f64, u32)]) -> SimNetwork {
        // rows: (from, to, key, length_m, speed_mps, lanes)
        let mut g = RoadGraph::new();
        let mut ids: Vec<i64> = rows.iter().flat_map(|r| [r.0, r.1]).collect();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            g.add_node(node(id)).unwrap();
        }
        let mut attrs = BTreeMap::new();
        for &(a, b, k, len, speed, lanes) in rows {
            let mut e = edge(a, b, k);
            e.length_m = len;
            e.lanes = Some(lanes);
            g.add_edge(e.clone()).unwrap();
            let t0 = len / speed;
            attrs.insert(e.id, attrs_from_values(t0, 0.5, lanes, len, 0.15, 4.0));
        }
        SimNetwork::new(&EnrichedGraph::from_parts(g, attrs).unwrap())
    }

    fn fleet(n: usize, origin: i64, dest: i64) -> Vec<Vehicle> {
        (0..n)
            .map(|i| Vehicle {
                id: i as u32,
                class: VehicleClass::Car,
                origin,
                dest,
                departure_s: 0.0,
                seed: i as u64,
                route: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn init_weights_scale_with_lane_root() {
        let net = grid_net(&[
            (1, 2, 0, 100.0, 10.0, 1),
            (2, 3, 0, 100.0, 10.0, 4),
        ]);
        let w = init_edge_weights(&net);
        assert_eq!(w.seconds[0], 10.0);
        assert_eq!(w.seconds[1], 20.0);
        assert_eq!(w.source, vec![WeightSource::Init; 2]);
    }

    #[test]
    fn lane_slots_follow_edge_order() {
        let net = grid_net(&[
            (1, 2, 0, 100.0, 10.0, 2),
            (2, 3, 0, 250.5, 10.0, 3),
        ]);
        assert_eq!(net.lane_slot(0, 0), 0);
        assert_eq!(net.lane_slot(0, 1), 1);
        assert_eq!(net.lane_slot(1, 0), 2);
        assert_eq!(net.lane_cell_counts(), vec![100, 100, 251, 251, 251]);
    }

    #[test]
    fn reroute_counts_follow_schedule() {
        let net = grid_net(&[(1, 2, 0, 100.0, 10.0, 1)]);
        let w = init_edge_weights(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (iteration, expect) in [(1, 100), (2, 100), (3, 50), (4, 25), (7, 25)] {
            let mut vs = fleet(100, 1, 2);
            let n = plan_routes(&net, &mut vs, &w, iteration, &mut rng).unwrap();
            assert_eq!(n, expect, "iteration {iteration}");
        }
    }

    #[test]
    fn fixed_seed_reroutes_identically() {
        let net = grid_net(&[(1, 2, 0, 100.0, 10.0, 1), (1, 2, 1, 300.0, 10.0, 1)]);
        let w = init_edge_weights(&net);
        let run = || {
            let mut vs = fleet(40, 1, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            plan_routes(&net, &mut vs, &w, 4, &mut rng).unwrap();
            vs.iter().map(|v| v.route.clone()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn routes_follow_cheapest_weights() {
        // Direct edge 1->3 is longer than the 1->2->3 detour by weight.
        let net = grid_net(&[
            (1, 2, 0, 100.0, 10.0, 1),
            (1, 3, 0, 500.0, 10.0, 1),
            (2, 3, 0, 100.0, 10.0, 1),
        ]);
        let w = init_edge_weights(&net);
        let mut vs = fleet(1, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        plan_routes(&net, &mut vs, &w, 1, &mut rng).unwrap();
        assert_eq!(vs[0].route, vec![0, 2]);

        // Flip the weights; replanning must take the direct edge.
        let w2 = EdgeWeights {
            seconds: vec![300.0, 500.0, 300.0],
            source: w.source.clone(),
        };
        plan_routes(&net, &mut vs, &w2, 2, &mut rng).unwrap();
        assert_eq!(vs[0].route, vec![1]);
    }

    #[test]
    fn unreachable_destination_is_an_error() {
        let net = grid_net(&[(1, 2, 0, 100.0, 10.0, 1)]);
        let w = init_edge_weights(&net);
        let mut vs = fleet(1, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            plan_routes(&net, &mut vs, &w, 1, &mut rng),
            Err(SimError::UnreachableDestination(2, 1))
        ));
    }
}
