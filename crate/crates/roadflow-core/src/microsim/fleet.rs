//! Expands node-to-node trip counts into individual vehicles with a class,
//! a departure time, and a private random seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::departures::DepartureHistogram;
use super::net::SimNetwork;
use super::{SimConfig, SimError, VehicleClass};
use crate::demand::NodeDemand;
use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u32,
    pub class: VehicleClass,
    pub origin: NodeId,
    pub dest: NodeId,
    pub departure_s: f64,
    /// Private seed; each iteration derives its own stream from it.
    pub seed: u64,
    /// Edge indices from origin to destination; filled in by route planning.
    pub route: Vec<u32>,
}

/// Derives the per-iteration random stream of one vehicle. Streams differ
/// across vehicles (distinct seeds) and across iterations (salted xor), and
/// never depend on worker count because every draw happens in serial phases.
pub(crate) fn vehicle_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Builds the vehicle list from integral trip counts, drawing class,
/// departure time, and seed per vehicle from one master generator seeded by
/// the run seed. Rows are expanded in input order, which pins the random
/// stream; zero-leg rows (origin == destination) are dropped without
/// consuming randomness. Returns the fleet and the dropped trip count.
pub fn build_fleet(
    demand: &[NodeDemand],
    hist: &DepartureHistogram,
    cfg: &SimConfig,
    net: &SimNetwork,
) -> Result<(Vec<Vehicle>, usize), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut fleet = Vec::new();
    let mut dropped = 0usize;
    for row in demand {
        if !(row.trips >= 0.0 && row.trips.fract() == 0.0 && row.trips <= u32::MAX as f64) {
            return Err(SimError::NonIntegerTrips {
                origin: row.origin_node,
                dest: row.dest_node,
                trips: row.trips,
            });
        }
        net.node_index(row.origin_node)?;
        net.node_index(row.dest_node)?;
        let count = row.trips as u32;
        if row.origin_node == row.dest_node {
            dropped += count as usize;
            continue;
        }
        for _ in 0..count {
            let class = if rng.random::<f64>() < cfg.truck_share {
                VehicleClass::Truck
            } else {
                VehicleClass::Car
            };
            let departure_s = hist.sample(&mut rng);
            let seed = rng.random::<u64>();
            fleet.push(Vehicle {
                id: fleet.len() as u32,
                class,
                origin: row.origin_node,
                dest: row.dest_node,
                departure_s,
                seed,
                route: Vec::new(),
            });
        }
    }
    Ok((fleet, dropped))
}
