//! Directed road multigraph: construction, filtering, strongly connected
//! component extraction, and topology simplification.

mod graphml;
mod load;
mod scc;
mod simplify;

pub use graphml::write_graphml;
pub use load::{load_graph, read_nodes_csv, write_edges_csv, write_nodes_csv};
pub(crate) use load::base_edge_fields;
pub use scc::{largest_scc, strongly_connected_components};
pub use simplify::simplify_topology;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub type NodeId = i64;

/// Edge identity within the multigraph. `key` disambiguates parallel edges
/// between the same node pair. The derived ordering (from, to, key) is the
/// canonical edge iteration order everywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId {
    pub from: NodeId,
    pub to: NodeId,
    pub key: i64,
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.from, self.to, self.key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

/// The 12 road types kept by the default pipeline, plus `Other` so that
/// loading is lossless before filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoadType {
    Motorway,
    MotorwayLink,
    Trunk,
    TrunkLink,
    Primary,
    PrimaryLink,
    Secondary,
    SecondaryLink,
    Tertiary,
    TertiaryLink,
    Unclassified,
    Road,
    Other,
}

impl RoadType {
    /// The default keep-set: everything except `Other`.
    pub const RETAINED: [RoadType; 12] = [
        RoadType::Motorway,
        RoadType::MotorwayLink,
        RoadType::Trunk,
        RoadType::TrunkLink,
        RoadType::Primary,
        RoadType::PrimaryLink,
        RoadType::Secondary,
        RoadType::SecondaryLink,
        RoadType::Tertiary,
        RoadType::TertiaryLink,
        RoadType::Unclassified,
        RoadType::Road,
    ];

    /// Unknown strings map to `Other`; they are dropped later by the
    /// road-type filter rather than rejected at load time.
    pub fn parse(s: &str) -> RoadType {
        match s {
            "motorway" => RoadType::Motorway,
            "motorway_link" => RoadType::MotorwayLink,
            "trunk" => RoadType::Trunk,
            "trunk_link" => RoadType::TrunkLink,
            "primary" => RoadType::Primary,
            "primary_link" => RoadType::PrimaryLink,
            "secondary" => RoadType::Secondary,
            "secondary_link" => RoadType::SecondaryLink,
            "tertiary" => RoadType::Tertiary,
            "tertiary_link" => RoadType::TertiaryLink,
            "unclassified" => RoadType::Unclassified,
            "road" => RoadType::Road,
            _ => RoadType::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RoadType::Motorway => "motorway",
            RoadType::MotorwayLink => "motorway_link",
            RoadType::Trunk => "trunk",
            RoadType::TrunkLink => "trunk_link",
            RoadType::Primary => "primary",
            RoadType::PrimaryLink => "primary_link",
            RoadType::Secondary => "secondary",
            RoadType::SecondaryLink => "secondary_link",
            RoadType::Tertiary => "tertiary",
            RoadType::TertiaryLink => "tertiary_link",
            RoadType::Unclassified => "unclassified",
            RoadType::Road => "road",
            RoadType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub id: EdgeId,
    pub road_type: RoadType,
    /// Metres, always > 0.
    pub length_m: f64,
    pub lanes: Option<u32>,
    /// True when `lanes` was filled in by imputation rather than tagged.
    pub lanes_imputed: bool,
    /// Tagged speed limit in mph; absent edges fall back to the type tables.
    pub maxspeed_mph: Option<f64>,
    /// Polyline as (lat, lon) waypoints, endpoints included.
    pub geometry: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("edge {from}->{to} references a node that does not exist")]
    DanglingEdge { from: NodeId, to: NodeId },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate edge {0}")]
    DuplicateEdge(EdgeId),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Directed multigraph with self-loops permitted. Node and edge storage is
/// ordered, so every iteration over the graph is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadGraph {
    nodes: BTreeMap<NodeId, NodeRecord>,
    edges: BTreeMap<EdgeId, EdgeRecord>,
    // (to, from, key) index for in-edge queries.
    rev: BTreeSet<(NodeId, NodeId, i64)>,
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: NodeRecord) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id, node);
        Ok(())
    }

    pub fn add_edge(&mut self, edge: EdgeRecord) -> Result<(), GraphError> {
        let id = edge.id;
        if !self.nodes.contains_key(&id.from) || !self.nodes.contains_key(&id.to) {
            return Err(GraphError::DanglingEdge {
                from: id.from,
                to: id.to,
            });
        }
        if self.edges.contains_key(&id) {
            return Err(GraphError::DuplicateEdge(id));
        }
        self.rev.insert((id.to, id.from, id.key));
        self.edges.insert(id, edge);
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&EdgeRecord> {
        self.edges.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.values()
    }

    pub fn out_edges(&self, n: NodeId) -> impl Iterator<Item = &EdgeRecord> {
        let lo = EdgeId {
            from: n,
            to: NodeId::MIN,
            key: i64::MIN,
        };
        let hi = EdgeId {
            from: n,
            to: NodeId::MAX,
            key: i64::MAX,
        };
        self.edges.range(lo..=hi).map(|(_, e)| e)
    }

    pub fn in_edges(&self, n: NodeId) -> impl Iterator<Item = &EdgeRecord> + '_ {
        self.rev
            .range((n, NodeId::MIN, i64::MIN)..=(n, NodeId::MAX, i64::MAX))
            .map(move |&(to, from, key)| &self.edges[&EdgeId { from, to, key }])
    }

    pub fn out_degree(&self, n: NodeId) -> usize {
        self.out_edges(n).count()
    }

    pub fn in_degree(&self, n: NodeId) -> usize {
        self.in_edges(n).count()
    }

    pub fn has_self_loop(&self, n: NodeId) -> bool {
        self.out_edges(n).any(|e| e.id.to == n)
    }

    pub fn total_length_m(&self) -> f64 {
        self.edges.values().map(|e| e.length_m).sum()
    }

    /// Smallest non-negative key not used by any existing from->to edge.
    pub fn next_free_key(&self, from: NodeId, to: NodeId) -> i64 {
        let mut key = 0;
        let lo = EdgeId {
            from,
            to,
            key: i64::MIN,
        };
        let hi = EdgeId {
            from,
            to,
            key: i64::MAX,
        };
        for (id, _) in self.edges.range(lo..=hi) {
            if id.key == key {
                key += 1;
            } else if id.key > key {
                break;
            }
        }
        key
    }
}

/// Keeps only edges whose road type is in `keep`, then drops nodes left with
/// no incident edge.
pub fn filter_by_road_type(g: &RoadGraph, keep: &BTreeSet<RoadType>) -> RoadGraph {
    assert!(!keep.is_empty(), "keep set must be nonempty");
    let mut out = RoadGraph::new();
    let mut used: BTreeSet<NodeId> = BTreeSet::new();
    for e in g.edges() {
        if keep.contains(&e.road_type) {
            used.insert(e.id.from);
            used.insert(e.id.to);
        }
    }
    for id in &used {
        out.add_node(g.nodes[id]).expect("unique source node ids");
    }
    for e in g.edges() {
        if keep.contains(&e.road_type) {
            out.add_edge(e.clone()).expect("unique source edge ids");
        }
    }
    out
}

/// Induced subgraph on a node set.
pub(crate) fn induced_subgraph(g: &RoadGraph, nodes: &BTreeSet<NodeId>) -> RoadGraph {
    let mut out = RoadGraph::new();
    for id in nodes {
        out.add_node(g.nodes[id]).expect("unique source node ids");
    }
    for e in g.edges() {
        if nodes.contains(&e.id.from) && nodes.contains(&e.id.to) {
            out.add_edge(e.clone()).expect("unique source edge ids");
        }
    }
    out
}
