//! Discrete-time per-vehicle traffic simulation.
//!
//! Vehicles follow planned routes over the enriched graph with IDM
//! car-following, rule-based lane changes, stop/signal intersection
//! control, and per-vehicle fuel and CO accounting. Occupancy lives in a
//! cell-based traffic atlas; each step reads the previous atlas snapshot
//! and writes a fresh one, so per-vehicle updates parallelize while the
//! outcome stays independent of the worker count.

mod atlas;
mod control;
mod departures;
mod emissions;
mod engine;
mod fleet;
mod idm;
mod net;
mod world;

pub use atlas::TrafficAtlas;
pub use control::{read_controls_csv, ControlKind, Controls};
pub use departures::{read_departures_csv, sample_departures, DepartureHistogram};
pub use emissions::{co_emission_rate, fuel_rate};
pub use engine::{
    read_vehicle_csv, run_iterations, summary_json, write_edge_series_csv, write_vehicle_csv,
    EdgeSeriesRow, IterationStats, SimulationReport, VehicleRow,
};
pub use fleet::{build_fleet, Vehicle};
pub use idm::idm_acceleration;
pub use net::{init_edge_weights, plan_routes, EdgeWeights, SimNetwork, WeightSource};
pub use world::{ConservationRow, VehicleSnapshot, World};

use thiserror::Error;

use crate::graph::{EdgeId, NodeId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("edge {0} received more vehicles than it has cells")]
    AtlasOverflow(EdgeId),
    #[error("no route from {0} to {1}")]
    UnreachableDestination(NodeId, NodeId),
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("invalid departure histogram: {0}")]
    InvalidHistogram(String),
    #[error("demand row {origin}->{dest}: trips must be a non-negative integer, got {trips}")]
    NonIntegerTrips {
        origin: NodeId,
        dest: NodeId,
        trips: f64,
    },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VehicleClass {
    Car,
    Truck,
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::Truck => "truck",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "car" => Some(VehicleClass::Car),
            "truck" => Some(VehicleClass::Truck),
            _ => None,
        }
    }
}

/// Car-following parameters for one vehicle class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Maximum acceleration, m/s^2.
    pub a_max: f64,
    /// Comfortable braking deceleration, m/s^2 (positive).
    pub b_comf: f64,
    /// Desired time headway, s.
    pub headway_s: f64,
    /// Minimum standstill gap, m.
    pub min_gap_m: f64,
    /// Body length, m.
    pub length_m: f64,
    /// Desired speed as a fraction of the edge free-flow speed.
    pub speed_factor: f64,
}

impl VehicleParams {
    pub fn car() -> Self {
        Self {
            a_max: 1.5,
            b_comf: 2.0,
            headway_s: 1.6,
            min_gap_m: 2.0,
            length_m: 5.0,
            speed_factor: 1.0,
        }
    }

    pub fn truck() -> Self {
        Self {
            a_max: 0.8,
            b_comf: 1.5,
            headway_s: 1.8,
            min_gap_m: 3.0,
            length_m: 12.0,
            speed_factor: 0.9,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = self.a_max > 0.0
            && self.b_comf > 0.0
            && self.headway_s > 0.0
            && self.min_gap_m > 0.0
            && self.length_m > 0.0
            && self.speed_factor > 0.0
            && self.speed_factor <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(
                "vehicle parameters must be positive (speed factor in (0,1])".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt_s: f64,
    /// Simulated wall-clock limit per iteration, s.
    pub horizon_s: f64,
    /// Routing iterations (plan, simulate, re-measure).
    pub n_iterations: usize,
    /// Scale of the mandatory lane-change onset ramp, m.
    pub lane_change_scale_m: f64,
    /// Signal phase duration, s.
    pub phase_duration_s: f64,
    /// Probability that a vehicle is a truck.
    pub truck_share: f64,
    pub car: VehicleParams,
    pub truck: VehicleParams,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.5,
            horizon_s: 7_200.0,
            n_iterations: 4,
            lane_change_scale_m: 300.0,
            phase_duration_s: 10.0,
            truck_share: 0.0,
            car: VehicleParams::car(),
            truck: VehicleParams::truck(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt_s > 0.0) || !(self.horizon_s > 0.0) {
            return Err(SimError::InvalidConfig(
                "dt and horizon must be positive".into(),
            ));
        }
        let per_sample = SAMPLE_PERIOD_S / self.dt_s;
        if per_sample < 1.0 || (per_sample.round() * self.dt_s - SAMPLE_PERIOD_S).abs() > 1e-9 {
            return Err(SimError::InvalidConfig(
                "dt must divide the 60 s sampling period".into(),
            ));
        }
        if self.n_iterations == 0 {
            return Err(SimError::InvalidConfig(
                "at least one iteration required".into(),
            ));
        }
        if !(self.lane_change_scale_m > 0.0) || !(self.phase_duration_s > 0.0) {
            return Err(SimError::InvalidConfig(
                "lane-change scale and phase duration must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.truck_share) {
            return Err(SimError::InvalidConfig(
                "truck share must lie in [0,1]".into(),
            ));
        }
        self.car.validate()?;
        self.truck.validate()?;
        if self.truck.length_m <= self.car.length_m {
            return Err(SimError::InvalidConfig(
                "trucks must be longer than cars".into(),
            ));
        }
        if self.truck.a_max >= self.car.a_max {
            return Err(SimError::InvalidConfig(
                "trucks must accelerate more slowly than cars".into(),
            ));
        }
        Ok(())
    }

    pub fn params(&self, class: VehicleClass) -> &VehicleParams {
        match class {
            VehicleClass::Car => &self.car,
            VehicleClass::Truck => &self.truck,
        }
    }
}

/// Utilization denominator: average body length plus standstill gap.
pub(crate) const AVG_VEHICLE_LENGTH_M: f64 = 5.0;

/// Sampling cadence for edge metrics.
pub(crate) const SAMPLE_PERIOD_S: f64 = 60.0;
/// Samples per reported interval (6 minutes).
pub(crate) const SAMPLES_PER_GROUP: usize = 6;
