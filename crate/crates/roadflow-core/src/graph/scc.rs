//! Strongly connected components over the directed multigraph.
//!
//! Tarjan's algorithm, iterative rather than recursive: the input graphs run
//! to tens of thousands of nodes and long one-way chains would overflow the
//! call stack.

use std::collections::BTreeSet;

use super::{induced_subgraph, GraphError, NodeId, RoadGraph};

pub fn strongly_connected_components(g: &RoadGraph) -> Vec<Vec<NodeId>> {
    let ids: Vec<NodeId> = g.node_ids().collect();
    let n = ids.len();
    let idx = |id: NodeId| ids.binary_search(&id).expect("node id present") as u32;

    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for e in g.edges() {
        if e.id.from != e.id.to {
            adj[idx(e.id.from) as usize].push(idx(e.id.to));
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    const UNVISITED: u32 = u32::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut next_index = 0u32;
    let mut comps: Vec<Vec<NodeId>> = Vec::new();
    // (node, next out-neighbor position) frames of the simulated recursion.
    let mut work: Vec<(u32, usize)> = Vec::new();

    for root in 0..n as u32 {
        if index[root as usize] != UNVISITED {
            continue;
        }
        work.push((root, 0));
        while let Some(&(v, pos)) = work.last() {
            let vu = v as usize;
            if pos == 0 {
                index[vu] = next_index;
                low[vu] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[vu] = true;
            }
            if pos < adj[vu].len() {
                work.last_mut().expect("frame").1 += 1;
                let w = adj[vu][pos] as usize;
                if index[w] == UNVISITED {
                    work.push((w as u32, 0));
                } else if on_stack[w] {
                    low[vu] = low[vu].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    let pu = parent as usize;
                    low[pu] = low[pu].min(low[vu]);
                }
                if low[vu] == index[vu] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w as usize] = false;
                        comp.push(ids[w as usize]);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Induced subgraph on the largest strongly connected component. Size ties
/// break toward the component containing the smallest node id.
pub fn largest_scc(g: &RoadGraph) -> Result<RoadGraph, GraphError> {
    if g.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let comps = strongly_connected_components(g);
    let best = comps
        .iter()
        .max_by(|a, b| {
            a.len()
                .cmp(&b.len())
                .then(b[0].cmp(&a[0])) // prefer the smaller minimum id
        })
        .expect("nonempty graph has at least one component");
    let members: BTreeSet<NodeId> = best.iter().copied().collect();
    Ok(induced_subgraph(g, &members))
}

#[cfg(test)]
mod tests {
    use super::super::test_util::{edge, node};
    use super::*;

    fn cycle(g: &mut RoadGraph, ids: &[NodeId]) {
        for id in ids {
            let _ = g.add_node(node(*id));
        }
        for w in ids.windows(2) {
            g.add_edge(edge(w[0], w[1], 0)).unwrap();
        }
        g.add_edge(edge(ids[ids.len() - 1], ids[0], 0)).unwrap();
    }

    /// Brute-force strong connectivity: forward and backward reachability.
    fn reaches_all(g: &RoadGraph, start: NodeId, reversed: bool) -> bool {
        let mut seen = BTreeSet::from([start]);
        let mut frontier = vec![start];
        while let Some(v) = frontier.pop() {
            let next: Vec<NodeId> = if reversed {
                g.in_edges(v).map(|e| e.id.from).collect()
            } else {
                g.out_edges(v).map(|e| e.id.to).collect()
            };
            for w in next {
                if seen.insert(w) {
                    frontier.push(w);
                }
            }
        }
        seen.len() == g.node_count()
    }

    #[test]
    fn picks_larger_cycle() {
        let mut g = RoadGraph::new();
        cycle(&mut g, &[1, 2, 3]);
        cycle(&mut g, &[10, 11, 12, 13, 14]);
        let s = largest_scc(&g).unwrap();
        assert_eq!(s.node_count(), 5);
        assert!(s.node(10).is_some());
        assert!(reaches_all(&s, 10, false) && reaches_all(&s, 10, true));
    }

    #[test]
    fn strongly_connected_graph_unchanged() {
        let mut g = RoadGraph::new();
        cycle(&mut g, &[1, 2, 3, 4]);
        assert_eq!(largest_scc(&g).unwrap(), g);
    }

    #[test]
    fn dead_end_spur_trimmed() {
        let mut g = RoadGraph::new();
        cycle(&mut g, &[1, 2, 3]);
        g.add_node(node(4)).unwrap();
        g.add_edge(edge(3, 4, 0)).unwrap();
        let s = largest_scc(&g).unwrap();
        assert_eq!(s.node_count(), 3);
        assert!(s.node(4).is_none());
        assert_eq!(s.edge_count(), 3);
    }

    #[test]
    fn size_tie_prefers_smaller_min_id() {
        let mut g = RoadGraph::new();
        cycle(&mut g, &[5, 6, 7]);
        cycle(&mut g, &[1, 2, 9]);
        let s = largest_scc(&g).unwrap();
        assert!(s.node(1).is_some());
        assert!(s.node(5).is_none());
    }

    #[test]
    fn empty_graph_errors() {
        assert!(matches!(
            largest_scc(&RoadGraph::new()),
            Err(GraphError::EmptyGraph)
        ));
    }

    #[test]
    fn long_chain_does_not_overflow_stack() {
        // A single 40k-node cycle exercises the iterative implementation.
        let mut g = RoadGraph::new();
        let ids: Vec<NodeId> = (0..40_000).collect();
        cycle(&mut g, &ids);
        let s = largest_scc(&g).unwrap();
        assert_eq!(s.node_count(), 40_000);
    }

    #[test]
    fn parallel_edges_and_self_loops_survive() {
        let mut g = RoadGraph::new();
        cycle(&mut g, &[1, 2]);
        g.add_edge(edge(1, 2, 1)).unwrap();
        g.add_edge(edge(1, 1, 0)).unwrap();
        let s = largest_scc(&g).unwrap();
        assert_eq!(s.edge_count(), 4);
    }
}
