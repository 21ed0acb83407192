//! Day-to-day rerouting loop: simulate, measure edge traversal times, feed
//! them back as routing weights, and reroute a shrinking share of vehicles
//! each iteration. Reported outputs come from the final iteration's run.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::control::Controls;
use super::fleet::Vehicle;
use super::net::{init_edge_weights, plan_routes, SimNetwork, WeightSource, REROUTE_FRACTIONS};
use super::world::{ConservationRow, World};
use super::{SimConfig, SimError, VehicleClass};
use crate::graph::EdgeId;

/// Salt for the per-iteration route-selection stream, distinct from the
/// per-vehicle stream salt.
const PLAN_SALT: u64 = 0xA24B_AED4_963E_E407;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub reroute_fraction: f64,
    pub rerouted: usize,
    /// Mean relative deviation of measured edge times from the weights this
    /// iteration was routed with, over edges that saw traffic.
    pub convergence_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRow {
    pub id: u32,
    pub class: VehicleClass,
    pub departure_s: f64,
    pub travel_time_s: f64,
    pub distance_m: f64,
    pub fuel_ml: f64,
    pub co_g: f64,
    pub n_edges: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSeriesRow {
    pub edge: EdgeId,
    pub interval_start_s: f64,
    pub utilization: f64,
    pub mean_speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub vehicles: Vec<VehicleRow>,
    pub edge_series: Vec<EdgeSeriesRow>,
    pub iterations: Vec<IterationStats>,
    pub conservation: Vec<ConservationRow>,
    pub departed: u64,
    pub arrived: u64,
    pub active_at_end: u64,
}

/// Runs the configured number of routing iterations and reports the last.
/// Routes in `fleet` are updated in place, so the caller sees the final
/// route choices.
pub fn run_iterations(
    net: &SimNetwork,
    fleet: &mut [Vehicle],
    controls: &Controls,
    cfg: &SimConfig,
) -> Result<SimulationReport, SimError> {
    cfg.validate()?;
    let mut weights = init_edge_weights(net);
    let mut iterations = Vec::with_capacity(cfg.n_iterations);
    let mut report = None;
    for it in 1..=cfg.n_iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (it as u64).wrapping_mul(PLAN_SALT));
        let rerouted = plan_routes(net, fleet, &weights, it, &mut rng)?;
        let mut world = World::new(net, fleet, controls, cfg, it as u64);
        world.run()?;

        let means = world.measured_edge_means();
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for (e, m) in means.iter().enumerate() {
            if let Some(m) = m {
                acc += (m - weights.seconds[e]).abs() / weights.seconds[e];
                cnt += 1;
            }
        }
        iterations.push(IterationStats {
            iteration: it,
            reroute_fraction: REROUTE_FRACTIONS[(it - 1).min(REROUTE_FRACTIONS.len() - 1)],
            rerouted,
            convergence_metric: if cnt > 0 { acc / cnt as f64 } else { 0.0 },
        });
        for (e, m) in means.iter().enumerate() {
            if let Some(m) = m {
                weights.seconds[e] = *m;
                weights.source[e] = WeightSource::Measured;
            }
        }

        if it == cfg.n_iterations {
            let vehicles = fleet
                .iter()
                .map(|v| {
                    let s = &world.st[v.id as usize];
                    VehicleRow {
                        id: v.id,
                        class: v.class,
                        departure_s: v.departure_s,
                        travel_time_s: s.travel_time_s,
                        distance_m: s.distance_m,
                        fuel_ml: s.fuel_ml,
                        co_g: s.co_g,
                        n_edges: s.entered_edges,
                    }
                })
                .collect();
            let edge_series = world
                .series
                .iter()
                .map(|r| EdgeSeriesRow {
                    edge: net.edge_ids[r.edge as usize],
                    interval_start_s: r.interval_start_s,
                    utilization: r.utilization,
                    mean_speed_mps: r.mean_speed_mps,
                })
                .collect();
            report = Some(SimulationReport {
                vehicles,
                edge_series,
                iterations: Vec::new(),
                conservation: world.minutes.clone(),
                departed: world.activated,
                arrived: world.arrived,
                active_at_end: world.activated - world.arrived,
            });
        }
    }
    let mut report = report.expect("n_iterations >= 1 was validated");
    report.iterations = iterations;
    Ok(report)
}

/// Writes one row per vehicle: id, class, departure, travel time, distance,
/// fuel, CO, and edges entered.
pub fn write_vehicle_csv(path: &Path, rows: &[VehicleRow]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "id",
        "class",
        "departure_s",
        "travel_time_s",
        "distance_m",
        "fuel_mL",
        "co_g",
        "n_edges",
    ])?;
    for r in rows {
        w.write_record([
            r.id.to_string(),
            r.class.as_str().to_string(),
            r.departure_s.to_string(),
            r.travel_time_s.to_string(),
            r.distance_m.to_string(),
            r.fuel_ml.to_string(),
            r.co_g.to_string(),
            r.n_edges.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_vehicle_csv`].
pub fn read_vehicle_csv(path: &Path) -> Result<Vec<VehicleRow>, SimError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let err = |line: u64, reason: String| SimError::MalformedRow {
        path: path.display().to_string(),
        line,
        reason,
    };
    let header = [
        "id",
        "class",
        "departure_s",
        "travel_time_s",
        "distance_m",
        "fuel_mL",
        "co_g",
        "n_edges",
    ];
    if !rdr.headers()?.iter().eq(header) {
        return Err(err(1, format!("expected header `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(err(line, format!("expected {} fields", header.len())));
        }
        let num = |idx: usize| -> Result<f64, SimError> {
            rec[idx]
                .trim()
                .parse()
                .map_err(|e| err(line, format!("bad {}: {e}", header[idx])))
        };
        out.push(VehicleRow {
            id: rec[0]
                .trim()
                .parse()
                .map_err(|e| err(line, format!("bad id: {e}")))?,
            class: VehicleClass::parse(rec[1].trim())
                .ok_or_else(|| err(line, format!("unknown class `{}`", &rec[1])))?,
            departure_s: num(2)?,
            travel_time_s: num(3)?,
            distance_m: num(4)?,
            fuel_ml: num(5)?,
            co_g: num(6)?,
            n_edges: rec[7]
                .trim()
                .parse()
                .map_err(|e| err(line, format!("bad n_edges: {e}")))?,
        });
    }
    Ok(out)
}

/// Writes the per-edge interval series; edges are keyed `from:to:key`.
pub fn write_edge_series_csv(path: &Path, rows: &[EdgeSeriesRow]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["edge", "interval_start_s", "utilization", "mean_speed_mps"])?;
    for r in rows {
        w.write_record([
            r.edge.to_string(),
            r.interval_start_s.to_string(),
            r.utilization.to_string(),
            r.mean_speed_mps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run summary as JSON: totals, iteration stats, and the per-minute
/// conservation series.
pub fn summary_json(report: &SimulationReport) -> String {
    #[derive(Serialize)]
    struct Minute {
        t_s: f64,
        departed: u64,
        arrived: u64,
        active: u64,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        departed: u64,
        arrived: u64,
        active_at_end: u64,
        iterations: &'a [IterationStats],
        conservation: Vec<Minute>,
    }
    serde_json::to_string_pretty(&Summary {
        departed: report.departed,
        arrived: report.arrived,
        active_at_end: report.active_at_end,
        iterations: &report.iterations,
        conservation: report
            .conservation
            .iter()
            .map(|r| Minute {
                t_s: r.t_s,
                departed: r.departed,
                arrived: r.arrived,
                active: r.active,
            })
            .collect(),
    })
    .expect("summary serializes")
}
