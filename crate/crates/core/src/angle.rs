//! Angle helpers. Radians internally, degrees at user-facing boundaries.

use std::f64::consts::PI;

/// Wraps an angle in radians into (-pi, pi].
pub fn wrap_rad(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_deg(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(360.0);
    if t > 180.0 {
        t -= 360.0;
    }
    t
}

/// Absolute circular distance between two angles in radians, in [0, pi].
pub fn circ_dist_rad(a: f64, b: f64) -> f64 {
    wrap_rad(a - b).abs()
}

/// Absolute circular distance between two angles in degrees, in [0, 180].
pub fn circ_dist_deg(a: f64, b: f64) -> f64 {
    wrap_deg(a - b).abs()
}
