//! Topology simplification: contracting chains of pass-through nodes so that
//! nodes remain only at intersections and dead-ends.
//!
//! An interstitial (pass-through) node has exactly one distinct in-neighbor
//! and one distinct out-neighbor: either the one-way pattern a->n->b with
//! a != b, or the mirrored two-way pattern (one edge each of a->n, n->a,
//! b->n, n->b). Self-loop endpoints are never interstitial. Maximal chains of
//! interstitial nodes collapse into single edges; chains that form closed
//! rings with no retained node anywhere keep their smallest-id node and
//! collapse into self-loops.

use std::collections::{BTreeMap, BTreeSet};

use super::{EdgeId, EdgeRecord, NodeId, RoadGraph, RoadType};

pub fn simplify_topology(g: &RoadGraph) -> RoadGraph {
    let mut interstitial: BTreeSet<NodeId> = g
        .node_ids()
        .filter(|&n| is_interstitial(g, n))
        .collect();

    let mut consumed: BTreeSet<EdgeId> = BTreeSet::new();
    let mut chains: Vec<Chain> = Vec::new();

    // Chains starting at retained nodes.
    for u in g.node_ids() {
        if interstitial.contains(&u) {
            continue;
        }
        for e in g.out_edges(u) {
            if !consumed.contains(&e.id) {
                chains.push(walk(g, e, &interstitial, &mut consumed));
            }
        }
    }

    // Leftover edges belong to closed rings of interstitial nodes. Promote
    // the smallest node id of each ring and walk from it. Edge iteration is
    // ordered by (from, to, key), so the first unconsumed edge always starts
    // at the smallest node id that still has work.
    loop {
        let Some(start) = g
            .edges()
            .find(|e| !consumed.contains(&e.id))
            .map(|e| e.id.from)
        else {
            break;
        };
        interstitial.remove(&start);
        let ring_starts: Vec<EdgeId> = g
            .out_edges(start)
            .filter(|e| !consumed.contains(&e.id))
            .map(|e| e.id)
            .collect();
        for id in ring_starts {
            if !consumed.contains(&id) {
                let e = g.edge(id).expect("edge exists");
                chains.push(walk(g, e, &interstitial, &mut consumed));
            }
        }
    }

    let mut out = RoadGraph::new();
    for n in g.nodes() {
        if !interstitial.contains(&n.id) {
            out.add_node(*n).expect("unique node ids");
        }
    }
    // Untouched edges keep their identity; contracted edges get the smallest
    // key still free for their endpoint pair, allocated after all verbatim
    // copies so the two can never collide.
    for c in &chains {
        if c.edges.len() == 1 {
            out.add_edge(g.edge(c.edges[0]).expect("edge exists").clone())
                .expect("unique edge ids");
        }
    }
    for c in &chains {
        if c.edges.len() > 1 {
            out.add_contracted(contract_chain(g, c));
        }
    }
    out
}

struct Chain {
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
}

fn is_interstitial(g: &RoadGraph, n: NodeId) -> bool {
    if g.has_self_loop(n) {
        return false;
    }
    let ins: Vec<NodeId> = g.in_edges(n).map(|e| e.id.from).collect();
    let outs: Vec<NodeId> = g.out_edges(n).map(|e| e.id.to).collect();
    match (ins.as_slice(), outs.as_slice()) {
        ([a], [b]) => a != b,
        ([a1, a2], _) if outs.len() == 2 => {
            let mut i = [*a1, *a2];
            let mut o = [outs[0], outs[1]];
            i.sort_unstable();
            o.sort_unstable();
            i[0] != i[1] && i == o
        }
        _ => false,
    }
}

/// Follows a chain from `start` through interstitial nodes until a retained
/// node ends it. At each pass-through node the continuation is the unique
/// unconsumed out-edge that does not head back where we came from.
fn walk(
    g: &RoadGraph,
    start: &EdgeRecord,
    interstitial: &BTreeSet<NodeId>,
    consumed: &mut BTreeSet<EdgeId>,
) -> Chain {
    consumed.insert(start.id);
    let mut nodes = vec![start.id.from, start.id.to];
    let mut edges = vec![start.id];
    let mut prev = start.id.from;
    let mut cur = start.id.to;
    while interstitial.contains(&cur) {
        let next = g
            .out_edges(cur)
            .find(|e| !consumed.contains(&e.id) && e.id.to != prev)
            .expect("interstitial node must have a continuation");
        consumed.insert(next.id);
        edges.push(next.id);
        prev = cur;
        cur = next.id.to;
        nodes.push(cur);
    }
    Chain { nodes, edges }
}

fn contract_chain(g: &RoadGraph, c: &Chain) -> EdgeRecord {
    let parts: Vec<&EdgeRecord> = c
        .edges
        .iter()
        .map(|id| g.edge(*id).expect("edge exists"))
        .collect();

    let length_m: f64 = parts.iter().map(|e| e.length_m).sum();

    // Modal road type; ties go to the type of the longest constituent edge.
    let mut counts: BTreeMap<RoadType, usize> = BTreeMap::new();
    for e in &parts {
        *counts.entry(e.road_type).or_insert(0) += 1;
    }
    let top = counts.values().copied().max().expect("nonempty chain");
    let tied: BTreeSet<RoadType> = counts
        .iter()
        .filter(|(_, &c)| c == top)
        .map(|(&t, _)| t)
        .collect();
    let road_type = parts
        .iter()
        .filter(|e| tied.contains(&e.road_type))
        .max_by(|a, b| a.length_m.partial_cmp(&b.length_m).expect("finite"))
        .expect("nonempty")
        .road_type;

    let lanes = parts.iter().filter_map(|e| e.lanes).min();
    let maxspeed_mph = parts
        .iter()
        .filter_map(|e| e.maxspeed_mph)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.min(v)))
        });
    let lanes_imputed = parts.iter().any(|e| e.lanes_imputed);

    // Concatenated geometry; constituents without one contribute a straight
    // segment, and duplicated junction points are collapsed.
    let coord = |n: NodeId| {
        let r = g.node(n).expect("node exists");
        (r.lat, r.lon)
    };
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for e in &parts {
        let seg = e
            .geometry
            .clone()
            .unwrap_or_else(|| vec![coord(e.id.from), coord(e.id.to)]);
        for p in seg {
            if pts.last() != Some(&p) {
                pts.push(p);
            }
        }
    }

    let from = c.nodes[0];
    let to = *c.nodes.last().expect("nonempty chain");
    EdgeRecord {
        // Key allocated by the caller against the output graph.
        id: EdgeId { from, to, key: 0 },
        road_type,
        length_m,
        lanes,
        lanes_imputed,
        maxspeed_mph,
        geometry: Some(pts),
    }
}

impl RoadGraph {
    fn add_contracted(&mut self, mut e: EdgeRecord) {
        e.id.key = self.next_free_key(e.id.from, e.id.to);
        self.add_edge(e).expect("key freshly allocated");
    }
}
