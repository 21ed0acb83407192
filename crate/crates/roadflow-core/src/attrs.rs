//! Per-edge congestion attributes: lane imputation, free-flow speed and
//! capacity defaults, free-flow times, and volume-delay coefficients.
//!
//! The volume-delay curve is t(v) = t0 * (1 + alpha * (v/c)^beta), stored in
//! the equivalent polynomial form a0 + a4 * v^beta with a0 = t0 and
//! a4 = t0 * alpha / c^beta.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::graph::{EdgeId, EdgeRecord, GraphError, RoadGraph, RoadType};
use crate::units::{mph_to_mps, SECS_PER_HOUR};

pub const DEFAULT_ALPHA: f64 = 0.15;
pub const DEFAULT_BETA: f64 = 4.0;

#[derive(Debug, Error)]
pub enum AttrError {
    #[error("road type `other` has no table defaults (edge {0})")]
    UnknownRoadType(EdgeId),
    #[error("road type `other` has no table defaults")]
    UnknownRoadTypeBare,
    #[error("edge {0} has no lanes; run lane imputation first")]
    MissingLanes(EdgeId),
    #[error("length and speed must be positive")]
    NonPositiveInput,
    #[error("volume must be non-negative, got {0}")]
    NegativeVolume(f64),
    #[error("alpha and beta must be positive")]
    InvalidCoefficients,
    #[error(
        "edge {0}: stored a4 disagrees with alpha/beta; the file was built with different parameters"
    )]
    CoefficientMismatch(EdgeId),
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: String,
        line: u64,
        reason: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn lane_bucket(lanes: u32) -> usize {
    debug_assert!(lanes >= 1);
    (lanes.min(4) - 1) as usize
}

/// Default free-flow speed in mph by road type and lane bucket {1,2,3,4+}.
pub fn infer_free_flow_speed(road_type: RoadType, lanes: u32) -> Result<f64, AttrError> {
    let row: [f64; 4] = match road_type {
        RoadType::Motorway | RoadType::MotorwayLink => [50.0, 50.0, 65.0, 65.0],
        RoadType::Trunk | RoadType::TrunkLink => [45.0; 4],
        RoadType::Primary | RoadType::PrimaryLink => [30.0; 4],
        RoadType::Secondary | RoadType::SecondaryLink => [25.0; 4],
        RoadType::Tertiary | RoadType::TertiaryLink => [20.0; 4],
        RoadType::Unclassified => [20.0; 4],
        RoadType::Road => [30.0; 4],
        RoadType::Other => return Err(AttrError::UnknownRoadTypeBare),
    };
    Ok(row[lane_bucket(lanes)])
}

/// Default capacity in vehicles per lane per hour by road type and lane
/// bucket {1,2,3,4+}.
pub fn infer_capacity(road_type: RoadType, lanes: u32) -> Result<f64, AttrError> {
    let row: [f64; 4] = match road_type {
        RoadType::Motorway | RoadType::MotorwayLink => [1900.0, 2000.0, 2000.0, 2200.0],
        RoadType::Trunk | RoadType::TrunkLink => [1900.0, 2000.0, 2000.0, 2000.0],
        RoadType::Primary | RoadType::PrimaryLink => [1000.0; 4],
        RoadType::Secondary | RoadType::SecondaryLink => [900.0; 4],
        RoadType::Tertiary | RoadType::TertiaryLink => [900.0; 4],
        RoadType::Unclassified => [800.0; 4],
        RoadType::Road => [900.0; 4],
        RoadType::Other => return Err(AttrError::UnknownRoadTypeBare),
    };
    Ok(row[lane_bucket(lanes)])
}

pub fn free_flow_time(length_m: f64, speed_mps: f64) -> Result<f64, AttrError> {
    if !(length_m > 0.0) || !(speed_mps > 0.0) {
        return Err(AttrError::NonPositiveInput);
    }
    Ok(length_m / speed_mps)
}

/// Fills missing lane counts with the median of tagged lanes among edges of
/// the same road type; the median of an even count is the mean of the middle
/// two rounded half-up. Types with no tagged lanes anywhere fall back to 1.
pub fn impute_lanes(g: &RoadGraph) -> RoadGraph {
    let mut samples: BTreeMap<RoadType, Vec<u32>> = BTreeMap::new();
    for e in g.edges() {
        if let Some(l) = e.lanes {
            samples.entry(e.road_type).or_default().push(l);
        }
    }
    let medians: BTreeMap<RoadType, u32> = samples
        .into_iter()
        .map(|(t, mut v)| {
            v.sort_unstable();
            let n = v.len();
            let m = if n % 2 == 1 {
                v[n / 2]
            } else {
                ((v[n / 2 - 1] + v[n / 2]) as f64 / 2.0).round() as u32
            };
            (t, m)
        })
        .collect();

    let mut out = RoadGraph::new();
    for n in g.nodes() {
        out.add_node(*n).expect("unique node ids");
    }
    for e in g.edges() {
        let mut e = e.clone();
        if e.lanes.is_none() {
            e.lanes = Some(*medians.get(&e.road_type).unwrap_or(&1));
            e.lanes_imputed = true;
        }
        out.add_edge(e).expect("unique edge ids");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedSource {
    /// Taken from the edge's maxspeed tag.
    Tagged,
    /// Looked up in the default speed table.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeAttributes {
    pub lanes: u32,
    pub lanes_imputed: bool,
    pub speed_mps: f64,
    pub speed_source: SpeedSource,
    /// Vehicles per second over the whole edge (all lanes).
    pub capacity_vps: f64,
    pub t0_s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a0: f64,
    pub a4: f64,
}

impl EdgeAttributes {
    /// Congested travel time at volume v (veh/s).
    pub fn bpr_time(&self, v: f64) -> Result<f64, AttrError> {
        if v < 0.0 {
            return Err(AttrError::NegativeVolume(v));
        }
        Ok(self.bpr_time_unchecked(v))
    }

    #[inline]
    pub(crate) fn bpr_time_unchecked(&self, v: f64) -> f64 {
        self.a0 + self.a4 * pow_beta(v, self.beta)
    }
}

/// v^beta with a fast path for small integral exponents (beta is 4 in every
/// standard configuration).
#[inline]
pub(crate) fn pow_beta(v: f64, beta: f64) -> f64 {
    if beta == 4.0 {
        let v2 = v * v;
        v2 * v2
    } else if beta.fract() == 0.0 && (0.0..=16.0).contains(&beta) {
        v.powi(beta as i32)
    } else {
        v.powf(beta)
    }
}

/// A road graph where every edge carries volume-delay attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedGraph {
    graph: RoadGraph,
    attrs: BTreeMap<EdgeId, EdgeAttributes>,
}

impl EnrichedGraph {
    pub fn from_parts(
        graph: RoadGraph,
        attrs: BTreeMap<EdgeId, EdgeAttributes>,
    ) -> Result<Self, AttrError> {
        for e in graph.edges() {
            if !attrs.contains_key(&e.id) {
                return Err(AttrError::MissingLanes(e.id));
            }
        }
        assert_eq!(graph.edge_count(), attrs.len(), "attrs for unknown edges");
        Ok(Self { graph, attrs })
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn attrs(&self, id: EdgeId) -> &EdgeAttributes {
        &self.attrs[&id]
    }

    /// Edges and attributes in canonical (from, to, key) order.
    pub fn iter(&self) -> impl Iterator<Item = (&EdgeRecord, &EdgeAttributes)> {
        self.graph.edges().map(|e| (e, &self.attrs[&e.id]))
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }
}

/// Derives volume-delay coefficients for every edge.
///
/// Tagged maxspeed values are trusted verbatim; only untagged edges fall
/// back to the type tables. Capacity always comes from the tables, so every
/// edge must carry one of the 12 typed road classes.
pub fn compute_bpr_coefficients(
    g: &RoadGraph,
    alpha: f64,
    beta: f64,
) -> Result<EnrichedGraph, AttrError> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(AttrError::InvalidCoefficients);
    }
    let mut attrs = BTreeMap::new();
    for e in g.edges() {
        let lanes = e.lanes.ok_or(AttrError::MissingLanes(e.id))?;
        let (speed_mps, speed_source) = match e.maxspeed_mph {
            Some(mph) => (mph_to_mps(mph), SpeedSource::Tagged),
            None => {
                let mph = infer_free_flow_speed(e.road_type, lanes)
                    .map_err(|_| AttrError::UnknownRoadType(e.id))?;
                (mph_to_mps(mph), SpeedSource::Table)
            }
        };
        let cap_per_lane_hr = infer_capacity(e.road_type, lanes)
            .map_err(|_| AttrError::UnknownRoadType(e.id))?;
        let capacity_vps = cap_per_lane_hr * lanes as f64 / SECS_PER_HOUR;
        let t0_s = free_flow_time(e.length_m, speed_mps)?;
        let a4 = t0_s * alpha / pow_beta(capacity_vps, beta);
        attrs.insert(
            e.id,
            EdgeAttributes {
                lanes,
                lanes_imputed: e.lanes_imputed,
                speed_mps,
                speed_source,
                capacity_vps,
                t0_s,
                alpha,
                beta,
                a0: t0_s,
                a4,
            },
        );
    }
    Ok(EnrichedGraph {
        graph: g.clone(),
        attrs,
    })
}

const ENRICHED_HEADER: [&str; 14] = [
    "from",
    "to",
    "key",
    "road_type",
    "length",
    "lanes",
    "maxspeed",
    "geometry",
    "lanes_imputed",
    "free_flow_speed_mps",
    "capacity_vps",
    "t0_s",
    "a0",
    "a4",
];

/// Writes the enriched edge table: the base edge columns plus the derived
/// attribute columns.
pub fn write_enriched_csv(path: &Path, g: &EnrichedGraph) -> Result<(), AttrError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ENRICHED_HEADER)?;
    for (e, a) in g.iter() {
        let mut rec: Vec<String> = crate::graph::base_edge_fields(e).to_vec();
        rec[5] = a.lanes.to_string();
        rec.extend([
            a.lanes_imputed.to_string(),
            a.speed_mps.to_string(),
            a.capacity_vps.to_string(),
            a.t0_s.to_string(),
            a.a0.to_string(),
            a.a4.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an enriched edge table back, together with its node file.
///
/// `alpha`/`beta` must match the parameters the file was built with; the
/// stored a4 column is checked against them.
pub fn read_enriched_csv(
    nodes_path: &Path,
    edges_path: &Path,
    alpha: f64,
    beta: f64,
) -> Result<EnrichedGraph, AttrError> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(AttrError::InvalidCoefficients);
    }
    let mut graph = RoadGraph::new();
    for n in crate::graph::read_nodes_csv(nodes_path)? {
        graph.add_node(n)?;
    }
    let mut reader = csv::Reader::from_path(edges_path)?;
    let display = edges_path.display().to_string();
    {
        let got = reader.headers()?.clone();
        if got.iter().ne(ENRICHED_HEADER.iter().copied()) {
            return Err(AttrError::MalformedRow {
                path: display,
                line: 1,
                reason: format!("expected header `{}`", ENRICHED_HEADER.join(",")),
            });
        }
    }
    let mut attrs = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let err = |reason: String| AttrError::MalformedRow {
            path: display.clone(),
            line,
            reason,
        };
        if rec.len() != ENRICHED_HEADER.len() {
            return Err(err(format!("expected {} fields", ENRICHED_HEADER.len())));
        }
        let (edge, a) = parse_enriched_row(&rec, alpha, beta).map_err(&err)?;
        let id = edge.id;
        graph.add_edge(edge)?;
        // a4 must be consistent with t0, capacity and the requested
        // alpha/beta; a mismatch means the file came from other parameters.
        let expect_a4 = a.t0_s * alpha / pow_beta(a.capacity_vps, beta);
        if (a.a4 - expect_a4).abs() > 1e-9 * expect_a4.max(1e-300) {
            return Err(AttrError::CoefficientMismatch(id));
        }
        attrs.insert(id, a);
    }
    EnrichedGraph::from_parts(graph, attrs)
}

fn parse_enriched_row(
    rec: &csv::StringRecord,
    alpha: f64,
    beta: f64,
) -> Result<(EdgeRecord, EdgeAttributes), String> {
    let p = |s: &str, name: &str| -> Result<f64, String> {
        s.trim()
            .parse()
            .map_err(|_| format!("invalid {name}: `{s}`"))
    };
    let from: i64 = rec[0]
        .trim()
        .parse()
        .map_err(|_| format!("invalid from: `{}`", &rec[0]))?;
    let to: i64 = rec[1]
        .trim()
        .parse()
        .map_err(|_| format!("invalid to: `{}`", &rec[1]))?;
    let key: i64 = rec[2]
        .trim()
        .parse()
        .map_err(|_| format!("invalid key: `{}`", &rec[2]))?;
    let road_type = RoadType::parse(rec[3].trim());
    let length_m = p(&rec[4], "length")?;
    if !(length_m > 0.0) {
        return Err(format!("length must be > 0, got {length_m}"));
    }
    let lanes: u32 = rec[5]
        .trim()
        .parse()
        .map_err(|_| format!("invalid lanes: `{}`", &rec[5]))?;
    if lanes == 0 {
        return Err("lanes must be >= 1".into());
    }
    let maxspeed_mph = match rec[6].trim() {
        "" => None,
        s => Some(p(s, "maxspeed")?),
    };
    let geometry = match rec[7].trim() {
        "" => None,
        s => {
            let mut pts = Vec::new();
            for part in s.split(';') {
                let mut it = part.split_whitespace();
                let (Some(la), Some(lo)) = (it.next(), it.next()) else {
                    return Err(format!("invalid geometry point `{part}`"));
                };
                pts.push((p(la, "geometry lat")?, p(lo, "geometry lon")?));
            }
            Some(pts)
        }
    };
    let lanes_imputed = match rec[8].trim() {
        "true" => true,
        "false" => false,
        s => return Err(format!("invalid lanes_imputed: `{s}`")),
    };
    let speed_mps = p(&rec[9], "free_flow_speed_mps")?;
    let capacity_vps = p(&rec[10], "capacity_vps")?;
    let t0_s = p(&rec[11], "t0_s")?;
    let a0 = p(&rec[12], "a0")?;
    let a4 = p(&rec[13], "a4")?;
    if !(speed_mps > 0.0) || !(capacity_vps > 0.0) || !(t0_s > 0.0) {
        return Err("speed, capacity, and t0 must be positive".into());
    }
    let edge = EdgeRecord {
        id: EdgeId { from, to, key },
        road_type,
        length_m,
        lanes: Some(lanes),
        lanes_imputed,
        maxspeed_mph,
        geometry,
    };
    let attrs = EdgeAttributes {
        lanes,
        lanes_imputed,
        speed_mps,
        speed_source: if maxspeed_mph.is_some() {
            SpeedSource::Tagged
        } else {
            SpeedSource::Table
        },
        capacity_vps,
        t0_s,
        alpha,
        beta,
        a0,
        a4,
    };
    Ok((edge, attrs))
}

/// Convenience used by tests and the assignment fixtures: a uniform
/// attribute set built directly from explicit t0/capacity values.
pub fn attrs_from_values(
    t0_s: f64,
    capacity_vps: f64,
    lanes: u32,
    length_m: f64,
    alpha: f64,
    beta: f64,
) -> EdgeAttributes {
    let speed_mps = length_m / t0_s;
    EdgeAttributes {
        lanes,
        lanes_imputed: false,
        speed_mps,
        speed_source: SpeedSource::Tagged,
        capacity_vps,
        t0_s,
        alpha,
        beta,
        a0: t0_s,
        a4: t0_s * alpha / pow_beta(capacity_vps, beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_util::{edge, node};
    use proptest::prelude::*;

    #[test]
    fn speed_table_spot_checks() {
        assert_eq!(infer_free_flow_speed(RoadType::Motorway, 3).unwrap(), 65.0);
        assert_eq!(infer_free_flow_speed(RoadType::Tertiary, 1).unwrap(), 20.0);
        // Lane counts past 4 use the 4+ bucket.
        assert_eq!(infer_free_flow_speed(RoadType::Motorway, 7).unwrap(), 65.0);
        assert!(infer_free_flow_speed(RoadType::Other, 2).is_err());
    }

    #[test]
    fn capacity_table_spot_checks() {
        assert_eq!(infer_capacity(RoadType::Motorway, 4).unwrap(), 2200.0);
        assert_eq!(infer_capacity(RoadType::Unclassified, 2).unwrap(), 800.0);
        assert_eq!(infer_capacity(RoadType::Trunk, 1).unwrap(), 1900.0);
        assert!(infer_capacity(RoadType::Other, 1).is_err());
    }

    #[test]
    fn free_flow_time_cases() {
        assert_eq!(free_flow_time(100.0, 10.0).unwrap(), 10.0);
        assert!((free_flow_time(0.0001, 10.0).unwrap() - 0.00001).abs() < 1e-18);
        assert!(matches!(
            free_flow_time(0.0, 10.0),
            Err(AttrError::NonPositiveInput)
        ));
        // One mile of motorway at 65 mph.
        let t = free_flow_time(1609.34, mph_to_mps(65.0)).unwrap();
        assert!((t - 55.38).abs() < 5e-3);
    }

    #[test]
    fn median_imputation() {
        let mut g = RoadGraph::new();
        for id in 1..=2 {
            g.add_node(node(id)).unwrap();
        }
        // Secondary with known lanes {2, 2, 3} and one unknown.
        for (key, lanes) in [(0, Some(2)), (1, Some(2)), (2, Some(3)), (3, None)] {
            let mut e = edge(1, 2, key);
            e.road_type = RoadType::Secondary;
            e.lanes = lanes;
            g.add_edge(e).unwrap();
        }
        // Tertiary with known lanes {1, 2}: even count, median 1.5 -> 2.
        for (key, lanes) in [(4, Some(1)), (5, Some(2)), (6, None)] {
            let mut e = edge(1, 2, key);
            e.road_type = RoadType::Tertiary;
            e.lanes = lanes;
            g.add_edge(e).unwrap();
        }
        // A type with no tagged lanes anywhere falls back to 1.
        let mut e = edge(2, 1, 0);
        e.road_type = RoadType::Road;
        g.add_edge(e).unwrap();

        let out = impute_lanes(&g);
        let get = |key| out.edge(EdgeId { from: 1, to: 2, key }).unwrap();
        assert_eq!(get(3).lanes, Some(2));
        assert!(get(3).lanes_imputed);
        assert_eq!(get(6).lanes, Some(2));
        assert_eq!(
            out.edge(EdgeId { from: 2, to: 1, key: 0 }).unwrap().lanes,
            Some(1)
        );
        // Tagged values never change.
        assert_eq!(get(2).lanes, Some(3));
        assert!(!get(2).lanes_imputed);
    }

    #[test]
    fn impute_on_fully_tagged_graph_is_identity() {
        let mut g = RoadGraph::new();
        g.add_node(node(1)).unwrap();
        g.add_node(node(2)).unwrap();
        let mut e = edge(1, 2, 0);
        e.lanes = Some(2);
        g.add_edge(e).unwrap();
        assert_eq!(impute_lanes(&g), g);
    }

    fn enriched_fixture() -> EnrichedGraph {
        let mut g = RoadGraph::new();
        for id in 1..=3 {
            g.add_node(node(id)).unwrap();
        }
        let mut e1 = edge(1, 2, 0);
        e1.road_type = RoadType::Motorway;
        e1.lanes = Some(2);
        e1.length_m = 2000.0;
        let mut e2 = edge(2, 3, 0);
        e2.road_type = RoadType::Secondary;
        e2.lanes = Some(1);
        e2.maxspeed_mph = Some(35.0);
        e2.length_m = 500.0;
        g.add_edge(e1).unwrap();
        g.add_edge(e2).unwrap();
        compute_bpr_coefficients(&g, DEFAULT_ALPHA, DEFAULT_BETA).unwrap()
    }

    #[test]
    fn coefficients_and_identities() {
        let eg = enriched_fixture();
        let a = eg.attrs(EdgeId { from: 1, to: 2, key: 0 });
        // Motorway, 2 lanes: 2000 veh/ln/hr -> 1.1111 veh/s over the edge.
        assert!((a.capacity_vps - 2000.0 * 2.0 / 3600.0).abs() < 1e-12);
        assert_eq!(a.speed_source, SpeedSource::Table);
        assert_eq!(a.speed_mps, mph_to_mps(50.0));
        assert_eq!(a.a0, a.t0_s);
        assert!((a.bpr_time(0.0).unwrap() - a.t0_s).abs() < 1e-12 * a.t0_s);
        let at_cap = a.bpr_time(a.capacity_vps).unwrap();
        assert!((at_cap - 1.15 * a.t0_s).abs() < 1e-12 * a.t0_s);

        let b = eg.attrs(EdgeId { from: 2, to: 3, key: 0 });
        assert_eq!(b.speed_source, SpeedSource::Tagged);
        assert_eq!(b.speed_mps, mph_to_mps(35.0));
    }

    #[test]
    fn bpr_double_capacity() {
        let a = attrs_from_values(10.0, 1.0, 1, 100.0, 0.15, 4.0);
        assert!((a.bpr_time(2.0).unwrap() - 34.0).abs() < 1e-12);
        assert!(matches!(
            a.bpr_time(-0.1),
            Err(AttrError::NegativeVolume(_))
        ));
    }

    #[test]
    fn missing_lanes_rejected() {
        let mut g = RoadGraph::new();
        g.add_node(node(1)).unwrap();
        g.add_node(node(2)).unwrap();
        g.add_edge(edge(1, 2, 0)).unwrap();
        assert!(matches!(
            compute_bpr_coefficients(&g, 0.15, 4.0),
            Err(AttrError::MissingLanes(_))
        ));
    }

    #[test]
    fn other_type_without_tag_rejected() {
        let mut g = RoadGraph::new();
        g.add_node(node(1)).unwrap();
        g.add_node(node(2)).unwrap();
        let mut e = edge(1, 2, 0);
        e.road_type = RoadType::Other;
        e.lanes = Some(1);
        e.maxspeed_mph = Some(30.0);
        g.add_edge(e).unwrap();
        // Speed is tagged but capacity still needs the table.
        assert!(matches!(
            compute_bpr_coefficients(&g, 0.15, 4.0),
            Err(AttrError::UnknownRoadType(_))
        ));
    }

    #[test]
    fn enriched_csv_roundtrip() {
        let eg = enriched_fixture();
        let dir = tempfile::tempdir().unwrap();
        let nodes = dir.path().join("nodes.csv");
        let edges = dir.path().join("edges.csv");
        crate::graph::write_nodes_csv(&nodes, eg.graph()).unwrap();
        write_enriched_csv(&edges, &eg).unwrap();
        let back = read_enriched_csv(&nodes, &edges, DEFAULT_ALPHA, DEFAULT_BETA).unwrap();
        assert_eq!(back, eg);

        // Reading with different parameters is rejected.
        assert!(matches!(
            read_enriched_csv(&nodes, &edges, 0.3, 4.0),
            Err(AttrError::CoefficientMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn polynomial_and_ratio_forms_agree(
            t0 in 1.0f64..1000.0,
            c in 0.01f64..10.0,
            v in 0.0f64..50.0,
        ) {
            let a = attrs_from_values(t0, c, 1, t0 * 10.0, 0.15, 4.0);
            let ratio = t0 * (1.0 + 0.15 * (v / c).powi(4));
            let poly = a.bpr_time(v).unwrap();
            prop_assert!((ratio - poly).abs() <= 1e-12 * ratio.abs().max(1.0));
        }

        #[test]
        fn bpr_is_increasing_and_convex(
            t0 in 1.0f64..100.0,
            c in 0.05f64..5.0,
        ) {
            let a = attrs_from_values(t0, c, 1, t0 * 10.0, 0.15, 4.0);
            let grid: Vec<f64> = (0..50).map(|i| i as f64 * c / 10.0).collect();
            let times: Vec<f64> = grid.iter().map(|&v| a.bpr_time(v).unwrap()).collect();
            for w in times.windows(2) {
                prop_assert!(w[1] >= w[0]);
                prop_assert!(w[0] >= a.t0_s);
            }
            for w in times.windows(3) {
                // Second difference non-negative on a uniform grid.
                prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9);
            }
        }
    }
}
