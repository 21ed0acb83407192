//! Physical constants and unit conversions shared across the crate.

/// Metres per second in one mile per hour. Fixed exactly; every speed
/// conversion in the crate goes through this constant.
pub const MPH_TO_MPS: f64 = 0.44704;

/// Mean Earth radius in metres for great-circle distances.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub const SECS_PER_HOUR: f64 = 3_600.0;

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPH_TO_MPS
}

pub fn mps_to_mph(mps: f64) -> f64 {
    mps / MPH_TO_MPS
}
