//! Command implementations behind the CLI binary. Every command validates
//! all of its inputs before any output file is touched; failures split into
//! validation errors (bad inputs or arguments, exit code 1) and runtime
//! errors (execution or write failures, exit code 2). Each stage emits one
//! JSON timing line on stderr.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Deserialize;
use thiserror::Error;

use crate::assign::{
    frank_wolfe, od_pairs_from_node_demand, summary_json as assign_summary_json, write_flows_csv,
    AssignError, AssignmentNetwork, FwConfig, OdPair,
};
use crate::attrs::{
    compute_bpr_coefficients, impute_lanes, read_enriched_csv, write_enriched_csv, EnrichedGraph,
    DEFAULT_ALPHA, DEFAULT_BETA,
};
use crate::demand::{
    link_demand, read_node_demand_csv, read_trips_csv, read_zones_csv, write_node_demand_csv,
    NodeDemand,
};
use crate::graph::{
    filter_by_road_type, largest_scc, load_graph, simplify_topology, write_graphml,
    write_nodes_csv, RoadType,
};
use crate::microsim::{
    build_fleet, read_controls_csv, read_departures_csv, read_vehicle_csv, run_iterations,
    summary_json as sim_summary_json, write_edge_series_csv, write_vehicle_csv, Controls,
    SimConfig, SimError, SimNetwork,
};
use crate::report::{vehicle_histograms, write_histogram_csv};
use crate::units::SECS_PER_HOUR;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Rejected input: arguments, configuration, or input files.
    #[error("{0}")]
    Validation(String),
    /// Failure while executing or writing results.
    #[error("{0}")]
    Runtime(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Runtime(_) => 2,
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> PipelineError {
    PipelineError::Validation(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> PipelineError {
    PipelineError::Runtime(e.to_string())
}

/// Simulation failures before the run starts are input problems; failures
/// mid-run are runtime.
fn sim_error(e: SimError) -> PipelineError {
    match e {
        SimError::AtlasOverflow(_) | SimError::Io(_) | SimError::Csv(_) => runtime(e),
        _ => validation(e),
    }
}

fn assign_error(e: AssignError) -> PipelineError {
    match e {
        AssignError::Io(_) | AssignError::Csv(_) => runtime(e),
        _ => validation(e),
    }
}

fn log_stage(stage: &str, t0: Instant, mut extra: serde_json::Value) {
    let obj = extra.as_object_mut().expect("stage extras are an object");
    obj.insert("stage".into(), stage.into());
    obj.insert(
        "wall_ms".into(),
        (t0.elapsed().as_millis() as u64).into(),
    );
    eprintln!("{extra}");
}

/// Model parameters loadable from a TOML file. Command-line flags override
/// file values; file values override built-in defaults.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub max_iterations: Option<usize>,
    pub gap_tolerance: Option<f64>,
    pub dt_s: Option<f64>,
    pub horizon_s: Option<f64>,
    pub n_iterations: Option<usize>,
    pub truck_share: Option<f64>,
    pub lane_change_scale_m: Option<f64>,
    pub phase_duration_s: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig, PipelineError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn resolve_bpr(alpha: Option<f64>, beta: Option<f64>, file: &FileConfig) -> (f64, f64) {
    (
        alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
        beta.or(file.beta).unwrap_or(DEFAULT_BETA),
    )
}

fn load_enriched(
    nodes: &Path,
    edges: &Path,
    alpha: f64,
    beta: f64,
) -> Result<EnrichedGraph, PipelineError> {
    let t0 = Instant::now();
    let g = read_enriched_csv(nodes, edges, alpha, beta).map_err(validation)?;
    log_stage(
        "load_network",
        t0,
        serde_json::json!({"nodes": g.graph().node_count(), "edges": g.edge_count()}),
    );
    Ok(g)
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    /// Raw node table: id,lat,lon.
    #[arg(long)]
    pub nodes: PathBuf,
    /// Raw edge table: from,to,key,road_type,length,lanes,maxspeed,geometry.
    #[arg(long)]
    pub edges: PathBuf,
    /// Output node table for the prepared network.
    #[arg(long)]
    pub out_nodes: PathBuf,
    /// Output edge table with inferred speeds, capacities, and delay
    /// coefficients.
    #[arg(long)]
    pub out_edges: PathBuf,
    /// Optional GraphML dump of the prepared network.
    #[arg(long)]
    pub graphml: Option<PathBuf>,
    /// Delay coefficient (defaults to 0.15).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Delay exponent (defaults to 4).
    #[arg(long)]
    pub beta: Option<f64>,
}

/// Prepares a routable network: keep drivable road classes, reduce to the
/// largest strongly connected component, contract pass-through chains,
/// impute missing lane counts, and attach speed, capacity, and delay
/// attributes.
pub fn cmd_network(a: &NetworkArgs, file: &FileConfig) -> Result<(), PipelineError> {
    let (alpha, beta) = resolve_bpr(a.alpha, a.beta, file);

    let t0 = Instant::now();
    let raw = load_graph(&a.nodes, &a.edges).map_err(validation)?;
    log_stage(
        "load",
        t0,
        serde_json::json!({"nodes": raw.node_count(), "edges": raw.edge_count()}),
    );

    let t0 = Instant::now();
    let keep: BTreeSet<RoadType> = RoadType::RETAINED.into_iter().collect();
    let filtered = filter_by_road_type(&raw, &keep);
    log_stage(
        "filter",
        t0,
        serde_json::json!({"nodes": filtered.node_count(), "edges": filtered.edge_count()}),
    );

    let t0 = Instant::now();
    let connected = largest_scc(&filtered).map_err(validation)?;
    log_stage(
        "largest_component",
        t0,
        serde_json::json!({"nodes": connected.node_count(), "edges": connected.edge_count()}),
    );

    let t0 = Instant::now();
    let simplified = simplify_topology(&connected);
    log_stage(
        "simplify",
        t0,
        serde_json::json!({"nodes": simplified.node_count(), "edges": simplified.edge_count()}),
    );

    let t0 = Instant::now();
    let imputed = impute_lanes(&simplified);
    let enriched = compute_bpr_coefficients(&imputed, alpha, beta).map_err(validation)?;
    log_stage(
        "attributes",
        t0,
        serde_json::json!({"edges": enriched.edge_count(), "alpha": alpha, "beta": beta}),
    );

    let t0 = Instant::now();
    write_nodes_csv(&a.out_nodes, enriched.graph()).map_err(runtime)?;
    write_enriched_csv(&a.out_edges, &enriched).map_err(runtime)?;
    if let Some(p) = &a.graphml {
        write_graphml(p, enriched.graph()).map_err(runtime)?;
    }
    log_stage("write", t0, serde_json::json!({}));
    Ok(())
}

#[derive(Debug, Args)]
pub struct LinkDemandArgs {
    /// Prepared node table.
    #[arg(long)]
    pub nodes: PathBuf,
    /// Prepared edge table.
    #[arg(long)]
    pub edges: PathBuf,
    /// Zone table: zone_id,centroid_lat,centroid_lon.
    #[arg(long)]
    pub zones: PathBuf,
    /// Zone-to-zone demand: origin_zone,dest_zone,trips[,departure_bucket].
    #[arg(long)]
    pub trips: PathBuf,
    /// Output node-to-node demand table.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

/// Converts zone-to-zone demand into node-to-node demand by matching each
/// zone centroid to its nearest network node.
pub fn cmd_link_demand(a: &LinkDemandArgs, file: &FileConfig) -> Result<(), PipelineError> {
    let (alpha, beta) = resolve_bpr(a.alpha, a.beta, file);
    let g = load_enriched(&a.nodes, &a.edges, alpha, beta)?;
    let zones = read_zones_csv(&a.zones).map_err(validation)?;
    let trips = read_trips_csv(&a.trips).map_err(validation)?;

    let t0 = Instant::now();
    let linked = link_demand(&trips, &zones, g.graph()).map_err(validation)?;
    log_stage(
        "link",
        t0,
        serde_json::json!({
            "records": linked.records.len(),
            "dropped_records": linked.dropped_records,
            "dropped_trips": linked.dropped_trips,
        }),
    );

    write_node_demand_csv(&a.out, &linked.records).map_err(runtime)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub nodes: PathBuf,
    #[arg(long)]
    pub edges: PathBuf,
    /// Zone table; requires --trips and replaces --node-demand.
    #[arg(long, requires = "trips", conflicts_with = "node_demand")]
    pub zones: Option<PathBuf>,
    /// Zone-to-zone demand rates.
    #[arg(long, requires = "zones")]
    pub trips: Option<PathBuf>,
    /// Node-to-node demand rates, bypassing zone matching.
    #[arg(long)]
    pub node_demand: Option<PathBuf>,
    /// Demand is in vehicles per hour instead of vehicles per second.
    #[arg(long)]
    pub demand_per_hour: bool,
    /// Output edge flow table.
    #[arg(long)]
    pub out_flows: PathBuf,
    /// Where to write the run summary JSON (default: stdout).
    #[arg(long)]
    pub out_summary: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub gap_tolerance: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

/// Static user-equilibrium assignment over the prepared network. Demand
/// comes either from zone tables (linked on the fly) or directly from a
/// node-to-node table.
pub fn cmd_assign(a: &AssignArgs, file: &FileConfig) -> Result<(), PipelineError> {
    let (alpha, beta) = resolve_bpr(a.alpha, a.beta, file);
    let scale = if a.demand_per_hour {
        1.0 / SECS_PER_HOUR
    } else {
        1.0
    };
    let g = load_enriched(&a.nodes, &a.edges, alpha, beta)?;

    let records: Vec<NodeDemand> = match (&a.zones, &a.trips, &a.node_demand) {
        (Some(zones), Some(trips), None) => {
            let zones = read_zones_csv(zones).map_err(validation)?;
            let trips = read_trips_csv(trips).map_err(validation)?;
            let t0 = Instant::now();
            let linked = link_demand(&trips, &zones, g.graph()).map_err(validation)?;
            log_stage(
                "link",
                t0,
                serde_json::json!({
                    "records": linked.records.len(),
                    "dropped_records": linked.dropped_records,
                }),
            );
            linked.records
        }
        (None, None, Some(nd)) => read_node_demand_csv(nd).map_err(validation)?,
        _ => {
            return Err(PipelineError::Validation(
                "provide either --zones with --trips, or --node-demand".into(),
            ))
        }
    };
    let demand: Vec<OdPair> = od_pairs_from_node_demand(&records, scale);

    let mut fw = FwConfig::default();
    if let Some(x) = a.max_iterations.or(file.max_iterations) {
        fw.max_iterations = x;
    }
    if let Some(x) = a.gap_tolerance.or(file.gap_tolerance) {
        fw.gap_tolerance = x;
    }

    let net = AssignmentNetwork::new(&g);
    let t0 = Instant::now();
    let state = frank_wolfe(&net, &demand, &fw).map_err(assign_error)?;
    let wall_ms = t0.elapsed().as_millis();
    log_stage(
        "assign",
        t0,
        serde_json::json!({
            "iterations": state.iteration,
            "relative_gap": state.relative_gap,
            "od_pairs": demand.len(),
        }),
    );

    write_flows_csv(&a.out_flows, &net, &state).map_err(runtime)?;
    let summary = assign_summary_json(&state, wall_ms);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    match &a.out_summary {
        Some(p) => std::fs::write(p, text + "\n").map_err(runtime)?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct MicrosimArgs {
    #[arg(long)]
    pub nodes: PathBuf,
    #[arg(long)]
    pub edges: PathBuf,
    /// Node-to-node trip counts (integral trips).
    #[arg(long)]
    pub node_demand: PathBuf,
    /// Departure-time histogram: bucket_start_s,bucket_end_s,frequency.
    /// All departures are drawn from it.
    #[arg(long)]
    pub departures: PathBuf,
    /// Intersection control table: node_id,control (stop|signal).
    #[arg(long)]
    pub controls: Option<PathBuf>,
    /// Output per-vehicle results.
    #[arg(long)]
    pub out_vehicles: PathBuf,
    /// Output per-edge interval series.
    #[arg(long)]
    pub out_series: PathBuf,
    /// Where to write the run summary JSON (default: stdout).
    #[arg(long)]
    pub out_summary: Option<PathBuf>,
    #[arg(long)]
    pub dt_s: Option<f64>,
    #[arg(long)]
    pub horizon_s: Option<f64>,
    #[arg(long)]
    pub n_iterations: Option<usize>,
    #[arg(long)]
    pub truck_share: Option<f64>,
    #[arg(long)]
    pub lane_change_scale_m: Option<f64>,
    #[arg(long)]
    pub phase_duration_s: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

/// Per-vehicle simulation with iterated rerouting on measured edge times.
pub fn cmd_microsim(
    a: &MicrosimArgs,
    file: &FileConfig,
    seed: Option<u64>,
) -> Result<(), PipelineError> {
    let seed = seed.ok_or_else(|| {
        PipelineError::Validation("microsim requires --seed (or `seed` in the config file)".into())
    })?;
    let (alpha, beta) = resolve_bpr(a.alpha, a.beta, file);

    let mut cfg = SimConfig::default();
    cfg.seed = seed;
    if let Some(x) = a.dt_s.or(file.dt_s) {
        cfg.dt_s = x;
    }
    if let Some(x) = a.horizon_s.or(file.horizon_s) {
        cfg.horizon_s = x;
    }
    if let Some(x) = a.n_iterations.or(file.n_iterations) {
        cfg.n_iterations = x;
    }
    if let Some(x) = a.truck_share.or(file.truck_share) {
        cfg.truck_share = x;
    }
    if let Some(x) = a.lane_change_scale_m.or(file.lane_change_scale_m) {
        cfg.lane_change_scale_m = x;
    }
    if let Some(x) = a.phase_duration_s.or(file.phase_duration_s) {
        cfg.phase_duration_s = x;
    }
    cfg.validate().map_err(validation)?;

    let g = load_enriched(&a.nodes, &a.edges, alpha, beta)?;
    let net = SimNetwork::new(&g);
    let demand = read_node_demand_csv(&a.node_demand).map_err(validation)?;
    let hist = read_departures_csv(&a.departures).map_err(validation)?;
    let controls = match &a.controls {
        Some(p) => {
            let spec = read_controls_csv(p).map_err(validation)?;
            Controls::new(&net, &spec, cfg.phase_duration_s).map_err(validation)?
        }
        None => Controls::none(&net),
    };

    let t0 = Instant::now();
    let (mut fleet, dropped) = build_fleet(&demand, &hist, &cfg, &net).map_err(validation)?;
    log_stage(
        "fleet",
        t0,
        serde_json::json!({"vehicles": fleet.len(), "dropped_zero_leg_trips": dropped}),
    );

    let t0 = Instant::now();
    let report = run_iterations(&net, &mut fleet, &controls, &cfg).map_err(sim_error)?;
    log_stage(
        "simulate",
        t0,
        serde_json::json!({
            "iterations": report.iterations.len(),
            "departed": report.departed,
            "arrived": report.arrived,
        }),
    );

    write_vehicle_csv(&a.out_vehicles, &report.vehicles).map_err(runtime)?;
    write_edge_series_csv(&a.out_series, &report.edge_series).map_err(runtime)?;
    let text = sim_summary_json(&report);
    match &a.out_summary {
        Some(p) => std::fs::write(p, text + "\n").map_err(runtime)?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Per-vehicle results produced by `microsim`.
    #[arg(long)]
    pub vehicles: PathBuf,
    /// Directory for the histogram tables (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Builds the four histogram families from per-vehicle results: departures,
/// edges per path, distance, and fuel.
pub fn cmd_report(a: &ReportArgs) -> Result<(), PipelineError> {
    let rows = read_vehicle_csv(&a.vehicles).map_err(validation)?;
    let families = vehicle_histograms(&rows).map_err(validation)?;

    let t0 = Instant::now();
    std::fs::create_dir_all(&a.out_dir).map_err(runtime)?;
    for (name, hist) in &families {
        let path = a.out_dir.join(format!("{name}_hist.csv"));
        write_histogram_csv(&path, hist).map_err(runtime)?;
    }
    log_stage(
        "report",
        t0,
        serde_json::json!({"vehicles": rows.len(), "families": families.len()}),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(path: &Path, text: &str) {
        fs::write(path, text).unwrap();
    }

    #[test]
    fn config_file_parses_and_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        write(&p, "alpha = 0.2\nn_iterations = 2\nseed = 7\n");
        let cfg = load_config(Some(&p)).unwrap();
        assert_eq!(cfg.alpha, Some(0.2));
        assert_eq!(cfg.n_iterations, Some(2));
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(load_config(None).unwrap(), FileConfig::default());

        write(&p, "alpha = 0.2\nbogus_knob = 1\n");
        assert!(matches!(
            load_config(Some(&p)),
            Err(PipelineError::Validation(_))
        ));
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(PipelineError::Validation("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::Runtime("x".into()).exit_code(), 2);
    }

    fn raw_network(dir: &Path) -> (PathBuf, PathBuf) {
        let nodes = dir.join("nodes.csv");
        let edges = dir.join("edges.csv");
        write(
            &nodes,
            "id,lat,lon\n1,0.0,0.0\n2,0.001,0.0\n3,0.002,0.0\n4,0.0025,0.0\n5,0.001,0.001\n",
        );
        // 1 <-> 2 <-> 3 with a spur 2 <-> 5 (so node 2 is a junction and
        // survives simplification), a service stub (filtered), and node 4
        // outside the strongly connected core.
        write(
            &edges,
            "from,to,key,road_type,length,lanes,maxspeed,geometry\n\
             1,2,0,primary,111.2,2,30,\n\
             2,1,0,primary,111.2,2,30,\n\
             2,3,0,secondary,111.2,,25,\n\
             3,2,0,secondary,111.2,2,,\n\
             2,5,0,primary,111.2,1,30,\n\
             5,2,0,primary,111.2,1,30,\n\
             3,4,0,service,55.6,1,,\n",
        );
        (nodes, edges)
    }

    #[test]
    fn network_command_prepares_an_enriched_graph() {
        let dir = tempfile::tempdir().unwrap();
        let (nodes, edges) = raw_network(dir.path());
        let out_nodes = dir.path().join("out_nodes.csv");
        let out_edges = dir.path().join("out_edges.csv");
        let a = NetworkArgs {
            nodes,
            edges,
            out_nodes: out_nodes.clone(),
            out_edges: out_edges.clone(),
            graphml: Some(dir.path().join("net.graphml")),
            alpha: None,
            beta: None,
        };
        cmd_network(&a, &FileConfig::default()).unwrap();
        let g = read_enriched_csv(&out_nodes, &out_edges, 0.15, 4.0).unwrap();
        // Service edge and node 4 are gone; the connected core survives.
        assert_eq!(g.graph().node_count(), 4);
        assert_eq!(g.edge_count(), 6);
        assert!(dir.path().join("net.graphml").exists());
        // The untagged lane count was imputed from same-class edges.
        let e32 = g
            .iter()
            .find(|(e, _)| e.id.from == 2 && e.id.to == 3)
            .unwrap();
        assert_eq!(e32.1.lanes, 2);
        assert!(e32.1.lanes_imputed);
    }

    fn enriched_network(dir: &Path) -> (PathBuf, PathBuf) {
        let (nodes, edges) = raw_network(dir);
        let out_nodes = dir.join("net_nodes.csv");
        let out_edges = dir.join("net_edges.csv");
        let a = NetworkArgs {
            nodes,
            edges,
            out_nodes: out_nodes.clone(),
            out_edges: out_edges.clone(),
            graphml: None,
            alpha: None,
            beta: None,
        };
        cmd_network(&a, &FileConfig::default()).unwrap();
        (out_nodes, out_edges)
    }

    #[test]
    fn assign_command_writes_flows_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let (nodes, edges) = enriched_network(dir.path());
        let nd = dir.path().join("demand.csv");
        write(
            &nd,
            "origin_node,dest_node,trips,departure_bucket\n1,3,360,\n",
        );
        let flows = dir.path().join("flows.csv");
        let summary = dir.path().join("summary.json");
        let a = AssignArgs {
            nodes,
            edges,
            zones: None,
            trips: None,
            node_demand: Some(nd),
            demand_per_hour: true,
            out_flows: flows.clone(),
            out_summary: Some(summary.clone()),
            max_iterations: None,
            gap_tolerance: None,
            alpha: None,
            beta: None,
        };
        cmd_assign(&a, &FileConfig::default()).unwrap();
        let mut rdr = csv::Reader::from_path(&flows).unwrap();
        assert!(rdr
            .headers()
            .unwrap()
            .iter()
            .eq(["from", "to", "key", "volume_vps", "congested_time_s"]));
        assert_eq!(rdr.records().count(), 6);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
        assert!(v["relative_gap"].as_f64().unwrap() < 1e-4);
        assert!(v["iterations"].as_u64().unwrap() >= 1);
    }

    #[test]
    fn assign_requires_exactly_one_demand_source() {
        let dir = tempfile::tempdir().unwrap();
        let (nodes, edges) = enriched_network(dir.path());
        let a = AssignArgs {
            nodes,
            edges,
            zones: None,
            trips: None,
            node_demand: None,
            demand_per_hour: false,
            out_flows: dir.path().join("flows.csv"),
            out_summary: None,
            max_iterations: None,
            gap_tolerance: None,
            alpha: None,
            beta: None,
        };
        match cmd_assign(&a, &FileConfig::default()) {
            Err(PipelineError::Validation(msg)) => assert!(msg.contains("demand")),
            other => panic!("expected validation error, got {other:?}"),
        }
        assert!(!dir.path().join("flows.csv").exists());
    }

    #[test]
    fn link_demand_command_matches_zones_to_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let (nodes, edges) = enriched_network(dir.path());
        let zones = dir.path().join("zones.csv");
        let trips = dir.path().join("trips.csv");
        write(
            &zones,
            "zone_id,centroid_lat,centroid_lon\n10,0.0001,0.0\n30,0.0021,0.0\n",
        );
        write(&trips, "origin_zone,dest_zone,trips\n10,30,12\n");
        let out = dir.path().join("node_demand.csv");
        let a = LinkDemandArgs {
            nodes,
            edges,
            zones,
            trips,
            out: out.clone(),
            alpha: None,
            beta: None,
        };
        cmd_link_demand(&a, &FileConfig::default()).unwrap();
        let rows = read_node_demand_csv(&out).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].origin_node, rows[0].dest_node), (1, 3));
        assert_eq!(rows[0].trips, 12.0);
    }

    #[test]
    fn microsim_command_requires_a_seed_and_runs() {
        let dir = tempfile::tempdir().unwrap();
        let (nodes, edges) = enriched_network(dir.path());
        let nd = dir.path().join("demand.csv");
        let dep = dir.path().join("departures.csv");
        write(&nd, "origin_node,dest_node,trips,departure_bucket\n1,3,8,\n");
        write(&dep, "bucket_start_s,bucket_end_s,frequency\n0,120,1\n");
        let a = MicrosimArgs {
            nodes,
            edges,
            node_demand: nd,
            departures: dep,
            controls: None,
            out_vehicles: dir.path().join("veh.csv"),
            out_series: dir.path().join("series.csv"),
            out_summary: Some(dir.path().join("sim.json")),
            dt_s: None,
            horizon_s: Some(1800.0),
            n_iterations: Some(2),
            truck_share: None,
            lane_change_scale_m: None,
            phase_duration_s: None,
            alpha: None,
            beta: None,
        };
        match cmd_microsim(&a, &FileConfig::default(), None) {
            Err(PipelineError::Validation(msg)) => assert!(msg.contains("seed")),
            other => panic!("expected validation error, got {other:?}"),
        }
        cmd_microsim(&a, &FileConfig::default(), Some(11)).unwrap();
        let rows = read_vehicle_csv(&dir.path().join("veh.csv")).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.travel_time_s > 0.0));
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("sim.json")).unwrap())
                .unwrap();
        assert_eq!(v["departed"], 8);
        assert_eq!(v["arrived"], 8);
    }

    #[test]
    fn report_command_emits_four_histograms() {
        let dir = tempfile::tempdir().unwrap();
        let veh = dir.path().join("veh.csv");
        write(
            &veh,
            "id,class,departure_s,travel_time_s,distance_m,fuel_mL,co_g,n_edges\n\
             0,car,10,60,800,12,1.5,2\n\
             1,truck,400,90,1900,55,3.0,4\n",
        );
        let out = dir.path().join("hists");
        let a = ReportArgs {
            vehicles: veh,
            out_dir: out.clone(),
        };
        cmd_report(&a).unwrap();
        for name in ["departures", "edges_per_path", "distance", "fuel"] {
            let p = out.join(format!("{name}_hist.csv"));
            let mut rdr = csv::Reader::from_path(&p).unwrap();
            assert!(rdr
                .headers()
                .unwrap()
                .iter()
                .eq(["bin_start", "bin_end", "count"]));
            let total: u64 = rdr
                .records()
                .map(|r| r.unwrap()[2].parse::<u64>().unwrap())
                .sum();
            assert_eq!(total, 2, "{name}");
        }
    }
}
