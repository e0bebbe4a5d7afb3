//! Truncated Fourier-series model of the array manifold.
//!
//! Each conjugated sensor response `a*_m(theta)` is 2pi-periodic and
//! effectively band-limited, so the dual function `S(theta)^H c` is a
//! trigonometric polynomial `sum_k h_k e^{jk theta}` with `h = G^H c`.
//! The matrix `G^H` (P x M, rows k = -N..N) holds the per-sensor Fourier
//! coefficients estimated with a P-point DFT.

use crate::error::{DoaError, Result};
use crate::geometry::{ArrayGeometry, SensorPosition};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Threshold for which the linear bandwidth law was fitted.
pub const DEFAULT_GAMMA_DB: f64 = -160.0;
/// Long DFT length used when the bandwidth has to be scanned.
pub const DEFAULT_OVERSAMPLE: usize = 8192;
/// Slope and intercept of the fitted law `P = slope * r + intercept` at -160 dB.
pub const BANDWIDTH_SLOPE: f64 = 15.9;
pub const BANDWIDTH_INTERCEPT: f64 = 27.03;
/// Smallest radius for which the fitted law is used.
pub const BANDWIDTH_LAW_MIN_RADIUS: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ManifoldModel {
    /// `G^H`, P x M; entry (k + N, m) is the k-th Fourier coefficient of `a*_m`.
    g_hermitian: DMatrix<Complex64>,
    p: usize,
    gamma_db: f64,
}

impl ManifoldModel {
    pub fn g_hermitian(&self) -> &DMatrix<Complex64> {
        &self.g_hermitian
    }

    /// DFT length, odd.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Bandwidth index, `P = 2N + 1`.
    pub fn n(&self) -> usize {
        self.p / 2
    }

    pub fn gamma_db(&self) -> f64 {
        self.gamma_db
    }

    pub fn num_sensors(&self) -> usize {
        self.g_hermitian.ncols()
    }

    /// Dual polynomial coefficients `h = G^H c`.
    pub fn dual_coefficients(&self, c: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if c.len() != self.num_sensors() {
            return Err(DoaError::DimensionMismatch(format!(
                "dual vector has length {}, manifold has {} sensors",
                c.len(),
                self.num_sensors()
            )));
        }
        Ok(&self.g_hermitian * c)
    }
}

/// Evaluates `sum_{k=-N}^{N} h_{k+N} e^{jk theta}`.
pub fn eval_trig_poly(h: &DVector<Complex64>, theta: f64) -> Complex64 {
    let n = (h.len() / 2) as i64;
    let step = Complex64::from_polar(1.0, theta);
    let mut zk = Complex64::from_polar(1.0, -(n as f64) * theta);
    let mut acc = Complex64::new(0.0, 0.0);
    for &hk in h.iter() {
        acc += hk * zk;
        zk *= step;
    }
    acc
}

/// Direct evaluation of the dual function `S(theta)^H c = sum_m conj(a_m(theta)) c_m`.
pub fn dual_function(geometry: &ArrayGeometry, c: &DVector<Complex64>, theta: f64) -> Complex64 {
    geometry
        .sensors()
        .iter()
        .zip(c.iter())
        .map(|(s, &cm)| s.response(theta).conj() * cm)
        .sum()
}

fn check_odd(p: usize) -> Result<()> {
    if p == 0 || p % 2 == 0 {
        return Err(DoaError::InvalidArgument(format!(
            "DFT length must be odd and positive, got {p}"
        )));
    }
    Ok(())
}

/// P-point DFT estimate of the Fourier coefficients of `a*(theta)` for one
/// sensor, indexed k = -N..N. Samples are taken at `l * 2pi/P`, l = -N..N.
pub fn fs_coefficients(sensor: &SensorPosition, p: usize) -> Result<DVector<Complex64>> {
    check_odd(p)?;
    let n = (p / 2) as i64;
    let dtheta = 2.0 * PI / p as f64;
    let samples: Vec<Complex64> = (-n..=n)
        .map(|l| sensor.response(l as f64 * dtheta).conj())
        .collect();
    let coeffs = (-n..=n).map(|k| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, &a) in samples.iter().enumerate() {
            let l = idx as i64 - n;
            // reduce lk mod P before forming the twiddle to keep the argument small
            let lk = (l * k).rem_euclid(p as i64) as f64;
            acc += a * Complex64::from_polar(1.0, -2.0 * PI * lk / p as f64);
        }
        acc / p as f64
    });
    Ok(DVector::from_iterator(p, coeffs))
}

/// Squared-magnitude spectrum (dB relative to its peak) of `a*(theta)` from an
/// `oversample`-point DFT, returned for k = -(L-1)/2 ..= (L-1)/2.
pub fn sensor_spectrum_db(sensor: &SensorPosition, oversample: usize) -> Result<Vec<f64>> {
    if oversample < 3 {
        return Err(DoaError::InvalidArgument(
            "oversample length must be at least 3".into(),
        ));
    }
    let len = oversample;
    let mut buf: Vec<Complex64> = (0..len)
        .map(|l| sensor.response(2.0 * PI * l as f64 / len as f64).conj())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(len);
    fft.process(&mut buf);
    let power: Vec<f64> = buf.iter().map(|v| (v / len as f64).norm_sqr()).collect();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    let half = ((len - 1) / 2) as i64;
    Ok((-half..=half)
        .map(|k| {
            let v = power[k.rem_euclid(len as i64) as usize];
            10.0 * (v / peak).log10()
        })
        .collect())
}

/// Bandwidth index N of one sensor: the largest |k| whose squared Fourier
/// magnitude is within `|gamma_db|` of the peak, measured with a long DFT.
pub fn scan_bandwidth(sensor: &SensorPosition, gamma_db: f64, oversample: usize) -> Result<usize> {
    let spectrum = sensor_spectrum_db(sensor, oversample)?;
    let threshold = -gamma_db.abs();
    let half = (spectrum.len() - 1) / 2;
    let edge = spectrum[0].max(spectrum[spectrum.len() - 1]);
    if edge >= threshold {
        return Err(DoaError::SpectrumNotDecayed {
            oversample,
            edge_db: edge,
            threshold_db: threshold,
        });
    }
    let n = spectrum
        .iter()
        .enumerate()
        .filter(|(_, &db)| db >= threshold)
        .map(|(i, _)| (i as i64 - half as i64).unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    Ok(n)
}

/// Minimum odd DFT length for an array whose farthest sensor is at `max_radius`.
///
/// Uses the fitted linear law at -160 dB for radii of at least two
/// wavelengths; any other threshold or a smaller radius is scanned directly.
pub fn min_dft_length(max_radius: f64, gamma_db: f64) -> Result<usize> {
    if !(max_radius.is_finite() && max_radius >= 0.0) {
        return Err(DoaError::InvalidArgument(format!(
            "radius must be nonnegative, got {max_radius}"
        )));
    }
    if max_radius == 0.0 {
        return Ok(1);
    }
    if (gamma_db - DEFAULT_GAMMA_DB).abs() < 1e-9 && max_radius >= BANDWIDTH_LAW_MIN_RADIUS {
        let est = BANDWIDTH_SLOPE * max_radius + BANDWIDTH_INTERCEPT;
        let p = est.ceil() as usize;
        return Ok(if p % 2 == 0 { p + 1 } else { p });
    }
    let sensor = SensorPosition::new(max_radius, 0.0)?;
    Ok(2 * scan_bandwidth(&sensor, gamma_db, DEFAULT_OVERSAMPLE)? + 1)
}

/// Builds `G^H` with P chosen from the farthest sensor.
pub fn build_manifold(geometry: &ArrayGeometry, gamma_db: f64) -> Result<ManifoldModel> {
    let p = min_dft_length(geometry.max_radius(), gamma_db)?;
    build_manifold_with_p(geometry, gamma_db, p)
}

/// Builds `G^H` with an explicit DFT length.
pub fn build_manifold_with_p(
    geometry: &ArrayGeometry,
    gamma_db: f64,
    p: usize,
) -> Result<ManifoldModel> {
    check_odd(p)?;
    let mut g_hermitian = DMatrix::zeros(p, geometry.len());
    for (m, sensor) in geometry.sensors().iter().enumerate() {
        g_hermitian.set_column(m, &fs_coefficients(sensor, p)?);
    }
    Ok(ManifoldModel {
        g_hermitian,
        p,
        gamma_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_uca;

    #[test]
    fn origin_sensor_is_impulse() {
        let s = SensorPosition::new(0.0, 0.0).unwrap();
        let c = fs_coefficients(&s, 5).unwrap();
        for (i, v) in c.iter().enumerate() {
            let expect = if i == 2 { 1.0 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-15);
        }
        assert_eq!(scan_bandwidth(&s, -160.0, 1025).unwrap(), 0);
    }

    #[test]
    fn even_length_rejected() {
        let s = SensorPosition::new(1.0, 0.0).unwrap();
        assert!(fs_coefficients(&s, 4).is_err());
        assert!(build_manifold_with_p(&make_uca(3, 1.0).unwrap(), -160.0, 10).is_err());
    }

    #[test]
    fn shift_theorem_on_azimuth() {
        // holds up to aliasing, so P must cover the bandwidth
        let p = min_dft_length(1.3, DEFAULT_GAMMA_DB).unwrap();
        let base = fs_coefficients(&SensorPosition::new(1.3, 0.0).unwrap(), p).unwrap();
        let phi = 0.7;
        let rot = fs_coefficients(&SensorPosition::new(1.3, phi).unwrap(), p).unwrap();
        let n = (p / 2) as i64;
        for (i, (&b, &r)) in base.iter().zip(rot.iter()).enumerate() {
            let k = i as i64 - n;
            let expect = b * Complex64::from_polar(1.0, -(k as f64) * phi);
            assert!((expect - r).norm() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn law_examples() {
        assert_eq!(min_dft_length(2.0, -160.0).unwrap(), 59);
        assert!(min_dft_length(2.0, -160.0).unwrap() <= 63);
        assert_eq!(min_dft_length(0.0, -160.0).unwrap(), 1);
        // below the fitted range the scan takes over and still yields an odd length
        let p = min_dft_length(0.5, -160.0).unwrap();
        assert!(p % 2 == 1 && p > 1 && p < 59);
    }

    #[test]
    fn single_origin_sensor_manifold() {
        let g = ArrayGeometry::new(vec![SensorPosition::new(0.0, 0.0).unwrap()]).unwrap();
        let m = build_manifold(&g, -160.0).unwrap();
        assert_eq!(m.p(), 1);
        assert!((m.g_hermitian()[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn short_oversample_is_reported() {
        let s = SensorPosition::new(20.0, 0.0).unwrap();
        assert!(matches!(
            scan_bandwidth(&s, -160.0, 101),
            Err(DoaError::SpectrumNotDecayed { .. })
        ));
    }

    #[test]
    fn trig_poly_eval_matches_definition() {
        let h = DVector::from_vec(vec![
            Complex64::new(0.5, 0.1),
            Complex64::new(-0.2, 0.3),
            Complex64::new(0.7, -0.4),
        ]);
        let t = 0.37f64;
        let direct =
            h[0] * Complex64::from_polar(1.0, -t) + h[1] + h[2] * Complex64::from_polar(1.0, t);
        assert!((eval_trig_poly(&h, t) - direct).norm() < 1e-15);
    }
}
