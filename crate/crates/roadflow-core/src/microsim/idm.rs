//! Intelligent Driver Model acceleration.

use super::VehicleParams;

/// IDM acceleration for a vehicle at speed `v` with desired speed `v0`,
/// bumper-to-bumper gap `s` to the leader (`f64::INFINITY` when the lane is
/// clear ahead), and approach rate `dv = v - v_leader` (positive when
/// closing).
///
/// a = a_max * (1 - (v/v0)^4 - (s*/s)^2) with
/// s* = s0 + T v + v dv / (2 sqrt(a_max b)).
pub fn idm_acceleration(v: f64, v0: f64, s: f64, dv: f64, p: &VehicleParams) -> f64 {
    debug_assert!(s > 0.0, "gap must be positive (use infinity for none)");
    debug_assert!(v >= 0.0 && v0 > 0.0);
    let free = (v / v0).powi(4);
    let interaction = if s.is_infinite() {
        0.0
    } else {
        let s_star =
            p.min_gap_m + p.headway_s * v + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt());
        (s_star / s).powi(2)
    };
    p.a_max * (1.0 - free - interaction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_flow_equilibrium_at_desired_speed() {
        let p = VehicleParams::car();
        let a = idm_acceleration(20.0, 20.0, f64::INFINITY, 0.0, &p);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn standstill_equilibrium_at_minimum_gap() {
        let p = VehicleParams::car();
        // Stopped behind a stopped leader exactly s0 away: s* = s0, so the
        // interaction term is 1 and the free term is 0.
        let a = idm_acceleration(0.0, 20.0, p.min_gap_m, 0.0, &p);
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn half_speed_free_road() {
        let p = VehicleParams {
            a_max: 1.0,
            ..VehicleParams::car()
        };
        let a = idm_acceleration(10.0, 20.0, f64::INFINITY, 0.0, &p);
        assert!((a - 0.9375).abs() < 1e-12);
    }

    #[test]
    fn closing_fast_brakes_harder_than_steady() {
        let p = VehicleParams::car();
        let steady = idm_acceleration(15.0, 30.0, 20.0, 0.0, &p);
        let closing = idm_acceleration(15.0, 30.0, 20.0, 5.0, &p);
        assert!(closing < steady);
    }

    #[test]
    fn acceleration_bounded_above_by_a_max() {
        let p = VehicleParams::car();
        for v in [0.0, 5.0, 10.0, 25.0] {
            for s in [3.0, 10.0, 100.0, f64::INFINITY] {
                let a = idm_acceleration(v, 25.0, s, 0.0, &p);
                assert!(a <= p.a_max);
            }
        }
    }
}
