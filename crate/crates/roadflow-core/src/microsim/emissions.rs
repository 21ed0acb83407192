//! Instantaneous CO emission and fuel consumption rates.

/// CO emission rate in g/s at speed `v_mph`.
///
/// P = -0.064 + 0.0056 v + 0.00026 (v - 50)^2, with v in mph.
pub fn co_emission_rate(v_mph: f64) -> f64 {
    debug_assert!(v_mph >= 0.0);
    -0.064 + 0.0056 * v_mph + 0.00026 * (v_mph - 50.0) * (v_mph - 50.0)
}

/// Fuel consumption rate in mL/s at speed `v_mps` and acceleration
/// `a_mps2`.
///
/// f = 0.666 + 0.072 (0.269 v + 0.0171 v^2 + 0.000672 v^3
///                    + 1.680 a v + 0.79296 a^2 v),
/// where the two acceleration terms apply only while accelerating (a > 0);
/// the result never drops below the 0.666 mL/s idle rate.
pub fn fuel_rate(v_mps: f64, a_mps2: f64) -> f64 {
    debug_assert!(v_mps >= 0.0);
    let v = v_mps;
    let mut inner = 0.269 * v + 0.0171 * v * v + 0.000672 * v * v * v;
    if a_mps2 > 0.0 {
        inner += 1.680 * a_mps2 * v + 0.79296 * a_mps2 * a_mps2 * v;
    }
    (0.666 + 0.072 * inner).max(0.666)
}
