//! CSV ingest and export for the road graph.
//!
//! Nodes: `id,lat,lon`. Edges: `from,to,key,road_type,length,lanes,maxspeed,
//! geometry` with empty fields for absent values and geometry encoded as
//! `lat lon;lat lon;...`. Maxspeed is expected in mph; ingest files must
//! pre-normalize units.

use std::path::Path;

use super::{EdgeId, EdgeRecord, GraphError, NodeRecord, RoadGraph, RoadType};
use crate::demand::haversine;

const NODE_HEADER: [&str; 3] = ["id", "lat", "lon"];
const EDGE_HEADER: [&str; 8] = [
    "from", "to", "key", "road_type", "length", "lanes", "maxspeed", "geometry",
];

/// Maximum relative disagreement between a supplied polyline's great-circle
/// length and the declared edge length.
const GEOMETRY_LENGTH_TOLERANCE: f64 = 0.01;

pub fn load_graph(nodes_file: &Path, edges_file: &Path) -> Result<RoadGraph, GraphError> {
    let mut g = RoadGraph::new();
    for node in read_nodes_csv(nodes_file)? {
        g.add_node(node)?;
    }
    let mut reader = open_checked(edges_file, &EDGE_HEADER)?;
    let path = edges_file.display().to_string();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let err = |reason: String| GraphError::MalformedRow {
            path: path.clone(),
            line,
            reason,
        };
        if rec.len() != EDGE_HEADER.len() {
            return Err(err(format!("expected {} fields", EDGE_HEADER.len())));
        }
        let edge = parse_edge_row(&rec).map_err(err)?;
        g.add_edge(edge)?;
    }
    Ok(g)
}

pub fn read_nodes_csv(path: &Path) -> Result<Vec<NodeRecord>, GraphError> {
    let mut reader = open_checked(path, &NODE_HEADER)?;
    let display = path.display().to_string();
    let mut nodes = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let err = |reason: String| GraphError::MalformedRow {
            path: display.clone(),
            line,
            reason,
        };
        if rec.len() != NODE_HEADER.len() {
            return Err(err(format!("expected {} fields", NODE_HEADER.len())));
        }
        let id = parse_field(&rec[0], "id").map_err(&err)?;
        let lat = parse_field(&rec[1], "lat").map_err(&err)?;
        let lon = parse_field(&rec[2], "lon").map_err(&err)?;
        check_coords(lat, lon).map_err(&err)?;
        nodes.push(NodeRecord { id, lat, lon });
    }
    Ok(nodes)
}

fn open_checked(
    path: &Path,
    header: &[&str],
) -> Result<csv::Reader<std::fs::File>, GraphError> {
    let mut reader = csv::Reader::from_path(path)?;
    let got = reader.headers()?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(GraphError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected header `{}`", header.join(",")),
        });
    }
    Ok(reader)
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("invalid {name}: `{s}`"))
}

fn check_coords(lat: f64, lon: f64) -> Result<(), String> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("lat {lat} out of [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("lon {lon} out of [-180, 180]"));
    }
    Ok(())
}

fn parse_edge_row(rec: &csv::StringRecord) -> Result<EdgeRecord, String> {
    let from = parse_field(&rec[0], "from")?;
    let to = parse_field(&rec[1], "to")?;
    let key = parse_field(&rec[2], "key")?;
    let road_type = RoadType::parse(rec[3].trim());
    let length_m: f64 = parse_field(&rec[4], "length")?;
    if !(length_m > 0.0) || !length_m.is_finite() {
        return Err(format!("length must be > 0, got {length_m}"));
    }
    let lanes = match rec[5].trim() {
        "" => None,
        s => {
            let n: u32 = parse_field(s, "lanes")?;
            if n == 0 {
                return Err("lanes must be >= 1".into());
            }
            Some(n)
        }
    };
    let maxspeed_mph = match rec[6].trim() {
        "" => None,
        s => {
            let v: f64 = parse_field(s, "maxspeed")?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("maxspeed must be > 0, got {v}"));
            }
            Some(v)
        }
    };
    let geometry = match rec[7].trim() {
        "" => None,
        s => {
            let pts = parse_geometry(s)?;
            let poly = polyline_length_m(&pts);
            if (poly - length_m).abs() > GEOMETRY_LENGTH_TOLERANCE * length_m {
                return Err(format!(
                    "geometry length {poly:.1} m disagrees with declared length {length_m:.1} m"
                ));
            }
            Some(pts)
        }
    };
    Ok(EdgeRecord {
        id: EdgeId { from, to, key },
        road_type,
        length_m,
        lanes,
        lanes_imputed: false,
        maxspeed_mph,
        geometry,
    })
}

fn parse_geometry(s: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut pts = Vec::new();
    for part in s.split(';') {
        let mut it = part.split_whitespace();
        let (Some(lat), Some(lon), None) = (it.next(), it.next(), it.next()) else {
            return Err(format!("invalid geometry point `{part}`"));
        };
        let lat: f64 = parse_field(lat, "geometry lat")?;
        let lon: f64 = parse_field(lon, "geometry lon")?;
        check_coords(lat, lon)?;
        pts.push((lat, lon));
    }
    if pts.len() < 2 {
        return Err("geometry needs at least two points".into());
    }
    Ok(pts)
}

pub(crate) fn polyline_length_m(pts: &[(f64, f64)]) -> f64 {
    pts.windows(2)
        .map(|w| haversine(w[0].0, w[0].1, w[1].0, w[1].1))
        .sum()
}

pub(crate) fn format_geometry(pts: &[(f64, f64)]) -> String {
    let parts: Vec<String> = pts.iter().map(|(la, lo)| format!("{la} {lo}")).collect();
    parts.join(";")
}

pub fn write_nodes_csv(path: &Path, g: &RoadGraph) -> Result<(), GraphError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(NODE_HEADER)?;
    for n in g.nodes() {
        w.write_record([n.id.to_string(), n.lat.to_string(), n.lon.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edges_csv(path: &Path, g: &RoadGraph) -> Result<(), GraphError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EDGE_HEADER)?;
    for e in g.edges() {
        w.write_record(base_edge_fields(e))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn base_edge_fields(e: &EdgeRecord) -> [String; 8] {
    [
        e.id.from.to_string(),
        e.id.to.to_string(),
        e.id.key.to_string(),
        e.road_type.as_str().to_string(),
        e.length_m.to_string(),
        e.lanes.map(|l| l.to_string()).unwrap_or_default(),
        e.maxspeed_mph.map(|v| v.to_string()).unwrap_or_default(),
        e.geometry
            .as_deref()
            .map(format_geometry)
            .unwrap_or_default(),
    ]
}
