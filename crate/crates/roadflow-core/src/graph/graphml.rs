//! GraphML export. Attribute names mirror the CSV schemas so downstream
//! tools see the same vocabulary in both formats.

use std::io::{BufWriter, Write};
use std::path::Path;

use super::load::format_geometry;
use super::{GraphError, RoadGraph};

pub fn write_graphml(path: &Path, g: &RoadGraph) -> Result<(), GraphError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        w,
        r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#
    )?;
    for (id, target, name, ty) in [
        ("lat", "node", "lat", "double"),
        ("lon", "node", "lon", "double"),
        ("key", "edge", "key", "long"),
        ("road_type", "edge", "road_type", "string"),
        ("length", "edge", "length", "double"),
        ("lanes", "edge", "lanes", "long"),
        ("maxspeed", "edge", "maxspeed", "double"),
        ("geometry", "edge", "geometry", "string"),
    ] {
        writeln!(
            w,
            r#"  <key id="{id}" for="{target}" attr.name="{name}" attr.type="{ty}"/>"#
        )?;
    }
    writeln!(w, r#"  <graph edgedefault="directed">"#)?;
    for n in g.nodes() {
        writeln!(
            w,
            r#"    <node id="{}"><data key="lat">{}</data><data key="lon">{}</data></node>"#,
            n.id, n.lat, n.lon
        )?;
    }
    for e in g.edges() {
        write!(
            w,
            r#"    <edge source="{}" target="{}"><data key="key">{}</data><data key="road_type">{}</data><data key="length">{}</data>"#,
            e.id.from,
            e.id.to,
            e.id.key,
            e.road_type.as_str(),
            e.length_m
        )?;
        if let Some(l) = e.lanes {
            write!(w, r#"<data key="lanes">{l}</data>"#)?;
        }
        if let Some(v) = e.maxspeed_mph {
            write!(w, r#"<data key="maxspeed">{v}</data>"#)?;
        }
        if let Some(pts) = &e.geometry {
            write!(w, r#"<data key="geometry">{}</data>"#, format_geometry(pts))?;
        }
        writeln!(w, "</edge>")?;
    }
    writeln!(w, "  </graph>")?;
    writeln!(w, "</graphml>")?;
    w.flush()?;
    Ok(())
}
