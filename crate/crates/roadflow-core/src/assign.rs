//! Static user-equilibrium assignment.
//!
//! Solves for edge volumes such that no driver can reduce their travel time
//! by switching paths, via repeated shortest-path loading, an exact
//! bisection line search, and convex-combination updates. Volumes are in
//! vehicles per second, times in seconds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::attrs::{pow_beta, EdgeAttributes, EnrichedGraph};
use crate::csr::{Csr, NO_PRED};
use crate::graph::{EdgeId, NodeId};

#[derive(Debug, Error)]
pub enum AssignError {
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("no path from {0} to {1}")]
    UnreachableDestination(NodeId, NodeId),
    #[error("demand {origin}->{dest} has negative rate {rate}")]
    NegativeDemand {
        origin: NodeId,
        dest: NodeId,
        rate: f64,
    },
    #[error("solver limits must be positive")]
    InvalidConfig,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One origin-destination flow, in vehicles per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdPair {
    pub origin: NodeId,
    pub dest: NodeId,
    pub rate_vps: f64,
}

/// Aggregates node-to-node trip records into OD rates, summing over
/// departure buckets and scaling counts by `scale` (e.g. 1/3600 to turn
/// trips per hour into vehicles per second).
pub fn od_pairs_from_node_demand(
    records: &[crate::demand::NodeDemand],
    scale: f64,
) -> Vec<OdPair> {
    let mut agg: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    for r in records {
        *agg.entry((r.origin_node, r.dest_node)).or_insert(0.0) += r.trips;
    }
    agg.into_iter()
        .map(|((origin, dest), trips)| OdPair {
            origin,
            dest,
            rate_vps: trips * scale,
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct FwConfig {
    pub max_iterations: usize,
    pub gap_tolerance: f64,
    pub line_search_tolerance: f64,
    /// Record every search direction and step size; lets tests verify the
    /// solution is the implied convex combination. Memory-heavy, off by
    /// default.
    pub record_steps: bool,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gap_tolerance: 1e-4,
            line_search_tolerance: 1e-10,
            record_steps: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssignmentState {
    /// Per-edge volumes (veh/s) in canonical edge order.
    pub volumes: Vec<f64>,
    /// Per-edge congested times (s) at those volumes.
    pub times: Vec<f64>,
    /// Number of shortest-path loadings performed after the initial one.
    pub iteration: usize,
    pub relative_gap: f64,
    pub objective: f64,
    /// Objective after the initial loading and after every update.
    pub objective_trace: Vec<f64>,
    /// (step size, direction volumes) per iteration when recording was
    /// requested; the first entry is (1, initial loading).
    #[serde(skip)]
    pub steps: Option<Vec<(f64, Vec<f64>)>>,
}

/// The immutable solver view of an enriched graph: compact adjacency plus
/// per-edge delay coefficients in canonical edge order.
pub struct AssignmentNetwork {
    csr: Csr,
    edge_ids: Vec<EdgeId>,
    attrs: Vec<EdgeAttributes>,
}

impl AssignmentNetwork {
    pub fn new(g: &EnrichedGraph) -> Self {
        let csr = Csr::from_graph(g.graph());
        let mut edge_ids = Vec::with_capacity(g.edge_count());
        let mut attrs = Vec::with_capacity(g.edge_count());
        for (e, a) in g.iter() {
            edge_ids.push(e.id);
            attrs.push(*a);
        }
        Self {
            csr,
            edge_ids,
            attrs,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edge_ids.len()
    }

    pub fn edge_ids(&self) -> &[EdgeId] {
        &self.edge_ids
    }

    pub fn free_flow_times(&self) -> Vec<f64> {
        self.attrs.iter().map(|a| a.t0_s).collect()
    }

    pub fn congested_times(&self, volumes: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; volumes.len()];
        self.times_into(volumes, &mut out);
        out
    }

    fn times_into(&self, volumes: &[f64], out: &mut [f64]) {
        debug_assert_eq!(volumes.len(), self.attrs.len());
        for i in 0..volumes.len() {
            out[i] = self.attrs[i].bpr_time_unchecked(volumes[i]);
        }
    }

    fn node_index(&self, id: NodeId) -> Result<u32, AssignError> {
        self.csr.index_of(id).ok_or(AssignError::UnknownNode(id))
    }
}

/// Demand grouped per origin, node indices resolved, zero rates dropped.
fn group_by_origin(
    net: &AssignmentNetwork,
    demand: &[OdPair],
) -> Result<Vec<(u32, Vec<(u32, f64)>)>, AssignError> {
    let mut by_origin: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    for od in demand {
        if od.rate_vps < 0.0 {
            return Err(AssignError::NegativeDemand {
                origin: od.origin,
                dest: od.dest,
                rate: od.rate_vps,
            });
        }
        let o = net.node_index(od.origin)?;
        let d = net.node_index(od.dest)?;
        if od.rate_vps == 0.0 || o == d {
            continue;
        }
        by_origin.entry(o).or_default().push((d, od.rate_vps));
    }
    Ok(by_origin.into_iter().collect())
}

/// Loads every OD pair's full rate onto its current shortest path.
///
/// This is the linearized subproblem of the equilibrium program: the
/// returned vector minimizes the dot product with `times` over all feasible
/// loadings. Origins run concurrently; partial volumes are summed in origin
/// order so results do not depend on thread count.
pub fn all_or_nothing(
    net: &AssignmentNetwork,
    demand: &[OdPair],
    times: &[f64],
) -> Result<Vec<f64>, AssignError> {
    assert_eq!(times.len(), net.edge_count());
    assert!(
        times.iter().all(|&t| t > 0.0),
        "edge times must be positive"
    );
    let groups = group_by_origin(net, demand)?;

    use rayon::prelude::*;
    let partials: Vec<Result<Vec<(u32, f64)>, AssignError>> = groups
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), vec![0.0f64; net.edge_count()]),
            |(dist, pred, dense), (origin, dests)| {
                let needed: Vec<u32> = dests.iter().map(|&(d, _)| d).collect();
                net.csr.dijkstra(*origin, times, Some(&needed), dist, pred);
                let mut touched: Vec<u32> = Vec::new();
                for &(d, rate) in dests {
                    if dist[d as usize].is_infinite() {
                        return Err(AssignError::UnreachableDestination(
                            net.csr.id_of(*origin),
                            net.csr.id_of(d),
                        ));
                    }
                    let mut cur = d;
                    while cur != *origin {
                        let slot = pred[cur as usize];
                        debug_assert_ne!(slot, NO_PRED);
                        if dense[slot as usize] == 0.0 {
                            touched.push(slot);
                        }
                        dense[slot as usize] += rate;
                        cur = net.csr.source(slot as usize);
                    }
                }
                touched.sort_unstable();
                let sparse: Vec<(u32, f64)> = touched
                    .iter()
                    .map(|&s| (s, dense[s as usize]))
                    .collect();
                for &s in &touched {
                    dense[s as usize] = 0.0;
                }
                Ok(sparse)
            },
        )
        .collect();

    let mut volumes = vec![0.0f64; net.edge_count()];
    for partial in partials {
        for (slot, vol) in partial? {
            volumes[slot as usize] += vol;
        }
    }
    Ok(volumes)
}

/// Value of the equilibrium objective: the sum over edges of the integral
/// of the delay curve from 0 to the edge volume.
pub fn beckmann_objective(net: &AssignmentNetwork, volumes: &[f64]) -> f64 {
    debug_assert_eq!(volumes.len(), net.edge_count());
    let mut total = 0.0;
    for (a, &v) in net.attrs.iter().zip(volumes) {
        debug_assert!(v >= 0.0);
        total += a.a0 * v + a.a4 * pow_beta(v, a.beta + 1.0) / (a.beta + 1.0);
    }
    total
}

/// Exact step size along the segment from `x` to `y`: bisection on the
/// directional derivative g(a) = sum (y-x) * t(x + a (y-x)), which is
/// nondecreasing in a. Returns an endpoint when g never changes sign.
pub fn line_search(net: &AssignmentNetwork, x: &[f64], y: &[f64], tolerance: f64) -> f64 {
    let g = |alpha: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..x.len() {
            let d = y[i] - x[i];
            if d != 0.0 {
                acc += d * net.attrs[i].bpr_time_unchecked(x[i] + alpha * d);
            }
        }
        acc
    };
    if x == y {
        return 0.0;
    }
    if g(0.0) >= 0.0 {
        return 0.0;
    }
    if g(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo >= tolerance {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Iterates shortest-path loading, line search, and convex-combination
/// updates until the relative gap drops below tolerance or the iteration
/// budget runs out. Hitting the budget is not an error; the returned state
/// reports the gap actually achieved.
pub fn frank_wolfe(
    net: &AssignmentNetwork,
    demand: &[OdPair],
    cfg: &FwConfig,
) -> Result<AssignmentState, AssignError> {
    if cfg.max_iterations == 0
        || !(cfg.gap_tolerance > 0.0)
        || !(cfg.line_search_tolerance > 0.0)
    {
        return Err(AssignError::InvalidConfig);
    }
    let m = net.edge_count();
    let free_flow = net.free_flow_times();
    let mut x = all_or_nothing(net, demand, &free_flow)?;
    let mut objective_trace = vec![beckmann_objective(net, &x)];
    let mut steps = cfg.record_steps.then(|| vec![(1.0, x.clone())]);

    let mut times = vec![0.0; m];
    let mut relative_gap = 0.0;
    let mut iteration = 0;
    for k in 1..=cfg.max_iterations {
        net.times_into(&x, &mut times);
        let y = all_or_nothing(net, demand, &times)?;
        let xt: f64 = x.iter().zip(&times).map(|(a, b)| a * b).sum();
        let yt: f64 = y.iter().zip(&times).map(|(a, b)| a * b).sum();
        relative_gap = if xt > 0.0 { (xt - yt) / xt } else { 0.0 };
        iteration = k;
        if relative_gap < cfg.gap_tolerance || k == cfg.max_iterations {
            break;
        }
        let alpha = line_search(net, &x, &y, cfg.line_search_tolerance);
        for i in 0..m {
            x[i] += alpha * (y[i] - x[i]);
        }
        objective_trace.push(beckmann_objective(net, &x));
        if let Some(s) = steps.as_mut() {
            s.push((alpha, y));
        }
    }
    net.times_into(&x, &mut times);
    Ok(AssignmentState {
        objective: *objective_trace.last().unwrap(),
        volumes: x,
        times,
        iteration,
        relative_gap,
        objective_trace,
        steps,
    })
}

/// Writes per-edge results: `from,to,key,volume_vps,congested_time_s`.
pub fn write_flows_csv(
    path: &Path,
    net: &AssignmentNetwork,
    state: &AssignmentState,
) -> Result<(), AssignError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["from", "to", "key", "volume_vps", "congested_time_s"])?;
    for (i, id) in net.edge_ids.iter().enumerate() {
        w.write_record(&[
            id.from.to_string(),
            id.to.to_string(),
            id.key.to_string(),
            state.volumes[i].to_string(),
            state.times[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run summary for the machine-readable log.
pub fn summary_json(state: &AssignmentState, wall_time_ms: u128) -> serde_json::Value {
    serde_json::json!({
        "iterations": state.iteration,
        "relative_gap": state.relative_gap,
        "objective": state.objective,
        "wall_time_ms": wall_time_ms,
    })
}
