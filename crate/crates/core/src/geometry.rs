//! Planar array geometries in normalized wavelength units.
//!
//! A sensor is stored in polar form: its distance from the reference point in
//! wavelengths and its azimuth. The response of sensor `m` to a far-field
//! source at azimuth `theta` is
//!
//! ```text
//! a_m(theta) = exp(-j 2 pi r_m cos(theta - phi_m))
//! ```

use crate::angle::wrap_rad;
use crate::error::{DoaError, Result};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Position of one sensor relative to the array reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPosition {
    /// Distance from the reference, in wavelengths.
    radius: f64,
    /// Azimuth in radians, in (-pi, pi].
    azimuth: f64,
}

impl SensorPosition {
    pub fn new(radius: f64, azimuth: f64) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(DoaError::InvalidArgument(format!(
                "sensor radius must be finite and nonnegative, got {radius}"
            )));
        }
        if !azimuth.is_finite() {
            return Err(DoaError::InvalidArgument(
                "sensor azimuth must be finite".into(),
            ));
        }
        Ok(Self {
            radius,
            azimuth: wrap_rad(azimuth),
        })
    }

    /// Builds a sensor from cartesian coordinates in wavelengths.
    pub fn from_xy(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(DoaError::InvalidArgument(
                "sensor coordinates must be finite".into(),
            ));
        }
        let radius = x.hypot(y);
        let azimuth = if radius == 0.0 { 0.0 } else { y.atan2(x) };
        Self::new(radius, azimuth)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn xy(&self) -> (f64, f64) {
        (
            self.radius * self.azimuth.cos(),
            self.radius * self.azimuth.sin(),
        )
    }

    /// Phase response `a(theta)` of this sensor.
    pub fn response(&self, theta: f64) -> Complex64 {
        let phase = -2.0 * PI * self.radius * (theta - self.azimuth).cos();
        Complex64::from_polar(1.0, phase)
    }
}

/// An ordered set of sensors. The order fixes the row order of every
/// steering vector and matrix built from the geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    sensors: Vec<SensorPosition>,
}

impl ArrayGeometry {
    pub fn new(sensors: Vec<SensorPosition>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(DoaError::InvalidArgument(
                "array needs at least one sensor".into(),
            ));
        }
        Ok(Self { sensors })
    }

    pub fn from_xy(points: &[(f64, f64)]) -> Result<Self> {
        let sensors = points
            .iter()
            .map(|&(x, y)| SensorPosition::from_xy(x, y))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sensors)
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn sensors(&self) -> &[SensorPosition] {
        &self.sensors
    }

    /// Distance of the farthest sensor from the reference, in wavelengths.
    pub fn max_radius(&self) -> f64 {
        self.sensors.iter().map(|s| s.radius).fold(0.0, f64::max)
    }

    /// Copy of the geometry with every sensor azimuth rotated by `phi`.
    pub fn rotated(&self, phi: f64) -> Self {
        let sensors = self
            .sensors
            .iter()
            .map(|s| SensorPosition {
                radius: s.radius,
                azimuth: wrap_rad(s.azimuth + phi),
            })
            .collect();
        Self { sensors }
    }

    /// Steering vector `a(theta)` (length M).
    pub fn steering_response(&self, theta: f64) -> DVector<Complex64> {
        DVector::from_iterator(self.len(), self.sensors.iter().map(|s| s.response(theta)))
    }

    /// Steering matrix with one column per angle.
    pub fn steering_matrix(&self, thetas: &[f64]) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_fn(self.len(), thetas.len(), |m, k| {
            self.sensors[m].response(thetas[k])
        })
    }
}

/// Uniform circular array with sensor 0 at azimuth 0 and the reference at the center.
pub fn make_uca(m: usize, radius: f64) -> Result<ArrayGeometry> {
    if m == 0 {
        return Err(DoaError::InvalidArgument(
            "UCA needs at least one sensor".into(),
        ));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(DoaError::InvalidArgument(format!(
            "UCA radius must be positive, got {radius}"
        )));
    }
    let sensors = (0..m)
        .map(|i| SensorPosition::new(radius, 2.0 * PI * i as f64 / m as f64))
        .collect::<Result<Vec<_>>>()?;
    ArrayGeometry::new(sensors)
}

/// Uniform linear array along the x axis, reference at the first sensor.
pub fn make_ula(m: usize, spacing: f64) -> Result<ArrayGeometry> {
    if m == 0 {
        return Err(DoaError::InvalidArgument(
            "ULA needs at least one sensor".into(),
        ));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(DoaError::InvalidArgument(format!(
            "ULA spacing must be positive, got {spacing}"
        )));
    }
    let sensors = (0..m)
        .map(|i| SensorPosition::new(i as f64 * spacing, 0.0))
        .collect::<Result<Vec<_>>>()?;
    ArrayGeometry::new(sensors)
}

const RPA_ATTEMPTS_PER_SENSOR: usize = 20_000;

/// Random planar array: sensors drawn uniformly in the disk of `max_radius`,
/// rejecting draws closer than `min_spacing` to an already placed sensor.
pub fn make_rpa(m: usize, min_spacing: f64, max_radius: f64, seed: u64) -> Result<ArrayGeometry> {
    if m == 0 {
        return Err(DoaError::InvalidArgument(
            "RPA needs at least one sensor".into(),
        ));
    }
    if !(max_radius.is_finite() && max_radius > 0.0)
        || !(min_spacing.is_finite() && min_spacing >= 0.0)
    {
        return Err(DoaError::InvalidArgument(format!(
            "RPA needs max_radius > 0 and min_spacing >= 0, got {max_radius}, {min_spacing}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(m);
    let mut attempts = 0usize;
    let budget = RPA_ATTEMPTS_PER_SENSOR * m;
    while points.len() < m {
        if attempts >= budget {
            return Err(DoaError::PackingInfeasible {
                placed: points.len(),
                requested: m,
                attempts,
            });
        }
        attempts += 1;
        let r = max_radius * rng.random::<f64>().sqrt();
        let a = 2.0 * PI * rng.random::<f64>();
        let (x, y) = (r * a.cos(), r * a.sin());
        let clear = points
            .iter()
            .all(|&(px, py)| (px - x).hypot(py - y) >= min_spacing);
        if clear {
            points.push((x, y));
        }
    }
    ArrayGeometry::from_xy(&points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn origin_sensor_has_unit_response() {
        let s = SensorPosition::new(0.0, 1.3).unwrap();
        let a = s.response(0.77);
        assert_abs_diff_eq!(a.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn half_wavelength_sensor_examples() {
        let s = SensorPosition::new(0.5, 0.0).unwrap();
        let a = s.response(PI / 2.0);
        assert_abs_diff_eq!(a.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        let a = s.response(0.0);
        assert_abs_diff_eq!(a.re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uca_layout() {
        let g = make_uca(40, 2.0).unwrap();
        assert_eq!(g.len(), 40);
        assert!(g.sensors().iter().all(|s| s.radius() == 2.0));
        // arc length between neighbours: r * 2pi/M = pi/10 wavelengths
        let arc = 2.0 * (g.sensors()[1].azimuth() - g.sensors()[0].azimuth());
        assert_abs_diff_eq!(arc, PI / 10.0, epsilon = 1e-12);

        let g = make_uca(4, 1.0).unwrap();
        for w in g.sensors().windows(2) {
            assert_abs_diff_eq!(
                crate::angle::circ_dist_rad(w[1].azimuth(), w[0].azimuth()),
                PI / 2.0,
                epsilon = 1e-12
            );
        }
        let g = make_uca(1, 1.0).unwrap();
        assert_eq!(g.sensors()[0].azimuth(), 0.0);
        assert!(make_uca(0, 1.0).is_err());
        assert!(make_uca(3, 0.0).is_err());
    }

    #[test]
    fn ula_layout() {
        let g = make_ula(2, 0.5).unwrap();
        assert_eq!(g.sensors()[0].radius(), 0.0);
        assert_eq!(g.sensors()[1].radius(), 0.5);
        let g = make_ula(8, 0.5).unwrap();
        for (i, s) in g.sensors().iter().enumerate() {
            assert_abs_diff_eq!(s.radius(), 0.5 * i as f64, epsilon = 1e-15);
            assert_eq!(s.azimuth(), 0.0);
        }
        assert_eq!(make_ula(1, 0.5).unwrap().max_radius(), 0.0);
        assert!(make_ula(3, -1.0).is_err());
    }

    #[test]
    fn rpa_constraints_and_failure() {
        let g = make_rpa(30, 0.25, 2.0, 7).unwrap();
        assert_eq!(g.len(), 30);
        let pts: Vec<_> = g.sensors().iter().map(|s| s.xy()).collect();
        for i in 0..pts.len() {
            assert!(g.sensors()[i].radius() <= 2.0 + 1e-12);
            for j in 0..i {
                let d = (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
                assert!(d >= 0.25 - 1e-12);
            }
        }
        assert_eq!(g, make_rpa(30, 0.25, 2.0, 7).unwrap());
        assert_eq!(make_rpa(1, 0.25, 2.0, 3).unwrap().len(), 1);
        assert!(matches!(
            make_rpa(2, 5.0, 1.0, 1),
            Err(DoaError::PackingInfeasible { placed: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn response_is_unit_modulus_and_periodic(r in 0.0f64..6.0, phi in -3.2f64..3.2, theta in -10.0f64..10.0) {
            let s = SensorPosition::new(r, phi).unwrap();
            let a = s.response(theta);
            prop_assert!((a.norm() - 1.0).abs() < 1e-14);
            let b = s.response(theta + 2.0 * PI);
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn rotation_equivariance(seed in 0u64..200, phi in -3.0f64..3.0, theta in -3.2f64..3.2) {
            let g = make_rpa(6, 0.2, 1.5, seed).unwrap();
            let lhs = g.rotated(phi).steering_response(theta);
            let rhs = g.steering_response(theta - phi);
            prop_assert!((lhs - rhs).camax() < 1e-12);
        }
    }
}
