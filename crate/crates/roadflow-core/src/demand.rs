//! Zone-based travel demand and its conversion to network-node demand via
//! nearest-node matching of zone centroids.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{NodeId, RoadGraph};
use crate::units::EARTH_RADIUS_M;

pub type ZoneId = i64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zone {
    pub zone_id: ZoneId,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
}

/// Zone-to-zone demand. `trips` is a positive count for microsimulation or a
/// rate in veh/s for static assignment; the consumer decides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub origin_zone: ZoneId,
    pub dest_zone: ZoneId,
    pub trips: f64,
    pub departure_bucket: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDemand {
    pub origin_node: NodeId,
    pub dest_node: NodeId,
    pub trips: f64,
    pub departure_bucket: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedDemand {
    pub records: Vec<NodeDemand>,
    /// Zone pairs whose endpoints collapsed onto one node, dropped.
    pub dropped_records: usize,
    pub dropped_trips: f64,
}

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("unknown zone id {0}")]
    UnknownZone(ZoneId),
    #[error("duplicate zone id {0}")]
    DuplicateZone(ZoneId),
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: String,
        line: u64,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Great-circle distance in metres between two (lat, lon) points in degrees.
///
/// The arccos argument is clamped to [-1, 1] to absorb floating-point drift
/// near coincident or antipodal points.
pub fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let p1 = lat1.to_radians();
    let p2 = lat2.to_radians();
    let dl = (lon1 - lon2).abs().to_radians();
    let arg = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
    EARTH_RADIUS_M * arg.acos()
}

/// Nearest node to a point by great-circle distance; full scan over all
/// nodes, ties broken by smallest node id.
pub fn nearest_node(lat: f64, lon: f64, g: &RoadGraph) -> Result<NodeId, DemandError> {
    let mut best: Option<(f64, NodeId)> = None;
    for n in g.nodes() {
        let d = haversine(lat, lon, n.lat, n.lon);
        // Strict comparison keeps the first (smallest-id) node on ties.
        if best.map(|(bd, _)| d < bd).unwrap_or(true) {
            best = Some((d, n.id));
        }
    }
    best.map(|(_, id)| id).ok_or(DemandError::EmptyGraph)
}

/// Rewrites zone-based trips as node-based demand.
///
/// Each zone is matched to its nearest node once; records collapsing onto the
/// same (origin, destination, bucket) triple are summed, and records whose
/// endpoints collapse onto a single node are dropped and counted.
pub fn link_demand(
    trips: &[TripRecord],
    zones: &[Zone],
    g: &RoadGraph,
) -> Result<LinkedDemand, DemandError> {
    if g.is_empty() {
        return Err(DemandError::EmptyGraph);
    }
    let mut zone_index: BTreeMap<ZoneId, Zone> = BTreeMap::new();
    for z in zones {
        if zone_index.insert(z.zone_id, *z).is_some() {
            return Err(DemandError::DuplicateZone(z.zone_id));
        }
    }
    // Independent scans over the immutable graph; collected in zone order.
    let matched: Vec<(ZoneId, NodeId)> = zone_index
        .par_iter()
        .map(|(&id, z)| {
            let n = nearest_node(z.centroid_lat, z.centroid_lon, g).expect("graph nonempty");
            (id, n)
        })
        .collect();
    let node_of: BTreeMap<ZoneId, NodeId> = matched.into_iter().collect();

    let mut agg: BTreeMap<(NodeId, NodeId, Option<u32>), f64> = BTreeMap::new();
    let mut dropped_records = 0usize;
    let mut dropped_trips = 0.0f64;
    for t in trips {
        let o = *node_of
            .get(&t.origin_zone)
            .ok_or(DemandError::UnknownZone(t.origin_zone))?;
        let d = *node_of
            .get(&t.dest_zone)
            .ok_or(DemandError::UnknownZone(t.dest_zone))?;
        if o == d {
            dropped_records += 1;
            dropped_trips += t.trips;
            continue;
        }
        *agg.entry((o, d, t.departure_bucket)).or_insert(0.0) += t.trips;
    }
    let records = agg
        .into_iter()
        .map(|((origin_node, dest_node, departure_bucket), trips)| NodeDemand {
            origin_node,
            dest_node,
            trips,
            departure_bucket,
        })
        .collect();
    Ok(LinkedDemand {
        records,
        dropped_records,
        dropped_trips,
    })
}

pub fn read_zones_csv(path: &Path) -> Result<Vec<Zone>, DemandError> {
    let mut reader = csv::Reader::from_path(path)?;
    expect_header(path, &mut reader, &["zone_id", "centroid_lat", "centroid_lon"])?;
    let display = path.display().to_string();
    let mut zones = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let err = |reason: String| DemandError::MalformedRow {
            path: display.clone(),
            line,
            reason,
        };
        if rec.len() != 3 {
            return Err(err("expected 3 fields".into()));
        }
        let zone_id = parse(&rec[0], "zone_id").map_err(&err)?;
        let centroid_lat: f64 = parse(&rec[1], "centroid_lat").map_err(&err)?;
        let centroid_lon: f64 = parse(&rec[2], "centroid_lon").map_err(&err)?;
        if !(-90.0..=90.0).contains(&centroid_lat) || !(-180.0..=180.0).contains(&centroid_lon) {
            return Err(err(format!(
                "centroid ({centroid_lat}, {centroid_lon}) out of range"
            )));
        }
        zones.push(Zone {
            zone_id,
            centroid_lat,
            centroid_lon,
        });
    }
    Ok(zones)
}

pub fn read_trips_csv(path: &Path) -> Result<Vec<TripRecord>, DemandError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let with_bucket: bool = if headers.iter().eq(["origin_zone", "dest_zone", "trips"]) {
        false
    } else if headers
        .iter()
        .eq(["origin_zone", "dest_zone", "trips", "departure_bucket"])
    {
        true
    } else {
        return Err(DemandError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            reason: "expected header `origin_zone,dest_zone,trips[,departure_bucket]`".into(),
        });
    };
    let display = path.display().to_string();
    let mut trips = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let err = |reason: String| DemandError::MalformedRow {
            path: display.clone(),
            line,
            reason,
        };
        let origin_zone = parse(&rec[0], "origin_zone").map_err(&err)?;
        let dest_zone = parse(&rec[1], "dest_zone").map_err(&err)?;
        let t: f64 = parse(&rec[2], "trips").map_err(&err)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(err(format!("trips must be > 0, got {t}")));
        }
        let departure_bucket = if with_bucket {
            match rec.get(3).map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(parse(s, "departure_bucket").map_err(&err)?),
            }
        } else {
            None
        };
        trips.push(TripRecord {
            origin_zone,
            dest_zone,
            trips: t,
            departure_bucket,
        });
    }
    Ok(trips)
}

pub fn read_node_demand_csv(path: &Path) -> Result<Vec<NodeDemand>, DemandError> {
    let mut reader = csv::Reader::from_path(path)?;
    expect_header(
        path,
        &mut reader,
        &["origin_node", "dest_node", "trips", "departure_bucket"],
    )?;
    let display = path.display().to_string();
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let err = |reason: String| DemandError::MalformedRow {
            path: display.clone(),
            line,
            reason,
        };
        if rec.len() != 4 {
            return Err(err("expected 4 fields".into()));
        }
        let origin_node = parse(&rec[0], "origin_node").map_err(&err)?;
        let dest_node = parse(&rec[1], "dest_node").map_err(&err)?;
        let trips: f64 = parse(&rec[2], "trips").map_err(&err)?;
        if !(trips > 0.0) || !trips.is_finite() {
            return Err(err(format!("trips must be > 0, got {trips}")));
        }
        let departure_bucket = match rec[3].trim() {
            "" => None,
            s => Some(parse(s, "departure_bucket").map_err(&err)?),
        };
        out.push(NodeDemand {
            origin_node,
            dest_node,
            trips,
            departure_bucket,
        });
    }
    Ok(out)
}

pub fn write_node_demand_csv(path: &Path, records: &[NodeDemand]) -> Result<(), DemandError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["origin_node", "dest_node", "trips", "departure_bucket"])?;
    for r in records {
        w.write_record([
            r.origin_node.to_string(),
            r.dest_node.to_string(),
            r.trips.to_string(),
            r.departure_bucket.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn expect_header(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    header: &[&str],
) -> Result<(), DemandError> {
    let got = reader.headers()?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(DemandError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected header `{}`", header.join(",")),
        });
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, name: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("invalid {name}: `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeRecord;
    use proptest::prelude::*;

    fn graph_with(coords: &[(NodeId, f64, f64)]) -> RoadGraph {
        let mut g = RoadGraph::new();
        for &(id, lat, lon) in coords {
            g.add_node(NodeRecord { id, lat, lon }).unwrap();
        }
        g
    }

    #[test]
    fn haversine_analytic_cases() {
        assert_eq!(haversine(12.0, 34.0, 12.0, 34.0), 0.0);
        // One radian of longitude along the equator is exactly r.
        let one_rad_deg = 1.0f64.to_degrees();
        let d = haversine(0.0, 0.0, 0.0, one_rad_deg);
        assert!((d - EARTH_RADIUS_M).abs() / EARTH_RADIUS_M < 1e-9);
        // Antipodal points.
        let d = haversine(0.0, 0.0, 0.0, 180.0);
        let expect = std::f64::consts::PI * EARTH_RADIUS_M;
        assert!((d - expect).abs() / expect < 1e-9);
    }

    #[test]
    fn nearest_prefers_smaller_id_on_ties() {
        // Nodes 7 and 9 equidistant from the origin point.
        let g = graph_with(&[(9, 0.0, 0.1), (7, 0.0, -0.1), (8, 0.0, 0.5)]);
        assert_eq!(nearest_node(0.0, 0.0, &g).unwrap(), 7);
    }

    #[test]
    fn nearest_on_empty_graph_errors() {
        let g = RoadGraph::new();
        assert!(matches!(
            nearest_node(0.0, 0.0, &g),
            Err(DemandError::EmptyGraph)
        ));
    }

    #[test]
    fn link_merges_and_drops() {
        let g = graph_with(&[(1, 0.0, 0.0), (2, 0.0, 1.0), (3, 1.0, 1.0)]);
        let zones = vec![
            Zone { zone_id: 10, centroid_lat: 0.01, centroid_lon: 0.0 },
            Zone { zone_id: 11, centroid_lat: 0.01, centroid_lon: 1.0 },
            // Maps to the same node as zone 10.
            Zone { zone_id: 12, centroid_lat: -0.01, centroid_lon: 0.0 },
        ];
        let trips = vec![
            TripRecord { origin_zone: 10, dest_zone: 11, trips: 30.0, departure_bucket: None },
            TripRecord { origin_zone: 12, dest_zone: 11, trips: 70.0, departure_bucket: None },
            TripRecord { origin_zone: 10, dest_zone: 12, trips: 5.0, departure_bucket: None },
        ];
        let linked = link_demand(&trips, &zones, &g).unwrap();
        assert_eq!(linked.records.len(), 1);
        assert_eq!(linked.records[0].origin_node, 1);
        assert_eq!(linked.records[0].dest_node, 2);
        assert_eq!(linked.records[0].trips, 100.0);
        assert_eq!(linked.dropped_records, 1);
        assert_eq!(linked.dropped_trips, 5.0);
    }

    #[test]
    fn buckets_kept_separate() {
        let g = graph_with(&[(1, 0.0, 0.0), (2, 0.0, 1.0)]);
        let zones = vec![
            Zone { zone_id: 1, centroid_lat: 0.0, centroid_lon: 0.0 },
            Zone { zone_id: 2, centroid_lat: 0.0, centroid_lon: 1.0 },
        ];
        let trips = vec![
            TripRecord { origin_zone: 1, dest_zone: 2, trips: 3.0, departure_bucket: Some(0) },
            TripRecord { origin_zone: 1, dest_zone: 2, trips: 4.0, departure_bucket: Some(1) },
            TripRecord { origin_zone: 1, dest_zone: 2, trips: 5.0, departure_bucket: Some(0) },
        ];
        let linked = link_demand(&trips, &zones, &g).unwrap();
        assert_eq!(linked.records.len(), 2);
        assert_eq!(linked.records[0].trips, 8.0);
        assert_eq!(linked.records[1].trips, 4.0);
    }

    #[test]
    fn unknown_zone_errors() {
        let g = graph_with(&[(1, 0.0, 0.0)]);
        let zones = vec![Zone { zone_id: 1, centroid_lat: 0.0, centroid_lon: 0.0 }];
        let trips = vec![TripRecord {
            origin_zone: 1,
            dest_zone: 99,
            trips: 1.0,
            departure_bucket: None,
        }];
        assert!(matches!(
            link_demand(&trips, &zones, &g),
            Err(DemandError::UnknownZone(99))
        ));
    }

    proptest! {
        #[test]
        fn haversine_is_symmetric(
            lat1 in -89.0f64..89.0, lon1 in -179.0f64..179.0,
            lat2 in -89.0f64..89.0, lon2 in -179.0f64..179.0,
        ) {
            let d1 = haversine(lat1, lon1, lat2, lon2);
            let d2 = haversine(lat2, lon2, lat1, lon1);
            prop_assert!((d1 - d2).abs() <= 1e-6 * d1.max(1.0));
            prop_assert!(d1 >= 0.0);
        }

        #[test]
        fn triangle_inequality_holds(
            a in (-60.0f64..60.0, -60.0f64..60.0),
            b in (-60.0f64..60.0, -60.0f64..60.0),
            c in (-60.0f64..60.0, -60.0f64..60.0),
        ) {
            let ab = haversine(a.0, a.1, b.0, b.1);
            let bc = haversine(b.0, b.1, c.0, c.1);
            let ac = haversine(a.0, a.1, c.0, c.1);
            prop_assert!(ac <= ab + bc + 1e-6 * (ab + bc).max(1.0));
        }

        #[test]
        fn nearest_matches_exhaustive_scan(
            pts in prop::collection::vec((-80.0f64..80.0, -170.0f64..170.0), 1..60),
            q in (-80.0f64..80.0, -170.0f64..170.0),
        ) {
            let coords: Vec<(NodeId, f64, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, &(la, lo))| (i as NodeId, la, lo))
                .collect();
            let g = graph_with(&coords);
            let got = nearest_node(q.0, q.1, &g).unwrap();
            let best = coords
                .iter()
                .map(|&(id, la, lo)| (haversine(q.0, q.1, la, lo), id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap()
                .1;
            prop_assert_eq!(got, best);
        }
    }
}
