//! Single-snapshot measurements `y = sum_l s_l a(theta_l) + n`.

use crate::angle::wrap_deg;
use crate::error::{DoaError, Result};
use crate::geometry::{make_rpa, make_uca, make_ula, ArrayGeometry};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// How an array geometry is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometrySpec {
    Uca {
        m: usize,
        radius: f64,
    },
    Ula {
        m: usize,
        spacing: f64,
    },
    Rpa {
        m: usize,
        min_spacing: f64,
        max_radius: f64,
        seed: u64,
    },
    /// Cartesian positions in wavelengths.
    Points {
        xy: Vec<[f64; 2]>,
    },
    /// CSV file of `x,y` rows in wavelengths.
    Csv {
        path: PathBuf,
    },
}

impl GeometrySpec {
    pub fn build(&self) -> Result<ArrayGeometry> {
        match self {
            GeometrySpec::Uca { m, radius } => make_uca(*m, *radius),
            GeometrySpec::Ula { m, spacing } => make_ula(*m, *spacing),
            GeometrySpec::Rpa {
                m,
                min_spacing,
                max_radius,
                seed,
            } => make_rpa(*m, *min_spacing, *max_radius, *seed),
            GeometrySpec::Points { xy } => {
                ArrayGeometry::from_xy(&xy.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>())
            }
            GeometrySpec::Csv { path } => crate::io::read_geometry_csv(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub doa_deg: f64,
    #[serde(default = "unit")]
    pub magnitude: f64,
    #[serde(default)]
    pub phase_deg: f64,
}

fn unit() -> f64 {
    1.0
}

impl Source {
    pub fn new(doa_deg: f64, magnitude: f64, phase_deg: f64) -> Self {
        Self {
            doa_deg,
            magnitude,
            phase_deg,
        }
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase_deg.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    White,
    /// Power decaying as `1/f` over the spatial DFT of the sensor index.
    OneOverF,
}

/// Noise level is given either directly or as a per-sensor SNR.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

impl NoiseSpec {
    pub fn white_snr(snr_db: f64) -> Self {
        Self {
            kind: NoiseKind::White,
            sigma_n: None,
            snr_db: Some(snr_db),
        }
    }

    pub fn colored_snr(snr_db: f64) -> Self {
        Self {
            kind: NoiseKind::OneOverF,
            sigma_n: None,
            snr_db: Some(snr_db),
        }
    }

    /// Resolves the per-sensor noise standard deviation for `sources`.
    pub fn sigma(&self, sources: &[Source]) -> Result<f64> {
        match (self.sigma_n, self.snr_db) {
            (Some(_), Some(_)) => Err(DoaError::InvalidArgument(
                "give either sigma_n or snr_db, not both".into(),
            )),
            (Some(s), None) if s >= 0.0 && s.is_finite() => Ok(s),
            (Some(s), None) => Err(DoaError::InvalidArgument(format!(
                "sigma_n must be nonnegative, got {s}"
            ))),
            (None, Some(snr)) => {
                if sources.is_empty() {
                    return Err(DoaError::InvalidArgument(
                        "SNR is undefined without sources".into(),
                    ));
                }
                Ok(sigma_from_snr(mean_source_power(sources), snr))
            }
            (None, None) => Ok(0.0),
        }
    }
}

/// Mean of `|s_l|^2`, the signal power used by the SNR definition.
pub fn mean_source_power(sources: &[Source]) -> f64 {
    sources
        .iter()
        .map(|s| s.magnitude * s.magnitude)
        .sum::<f64>()
        / sources.len() as f64
}

/// `sigma_n` with `10 log10(|s|^2 / sigma_n^2) = snr_db`.
pub fn sigma_from_snr(signal_power: f64, snr_db: f64) -> f64 {
    (signal_power / 10f64.powf(snr_db / 10.0)).sqrt()
}

pub fn snr_db(signal_power: f64, sigma_n: f64) -> f64 {
    10.0 * (signal_power / (sigma_n * sigma_n)).log10()
}

/// A complete, reproducible measurement description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: GeometrySpec,
    pub sources: Vec<Source>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        for s in &self.sources {
            if !(s.magnitude > 0.0) || !s.doa_deg.is_finite() || !s.phase_deg.is_finite() {
                return Err(DoaError::InvalidArgument(format!("invalid source {s:?}")));
            }
        }
        self.noise.sigma(&self.sources)?;
        Ok(())
    }

    /// True DOAs in degrees, wrapped to (-180, 180].
    pub fn doas_deg(&self) -> Vec<f64> {
        self.sources.iter().map(|s| wrap_deg(s.doa_deg)).collect()
    }
}

/// A synthesized snapshot and the noise level that produced it.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub geometry: ArrayGeometry,
    pub y: DVector<Complex64>,
    pub sigma_n: f64,
}

/// Builds the geometry and draws the snapshot described by `scenario`.
pub fn synth_snapshot(scenario: &Scenario) -> Result<Snapshot> {
    scenario.validate()?;
    let geometry = scenario.geometry.build()?;
    let sigma_n = scenario.noise.sigma(&scenario.sources)?;
    let y = synth_on(
        &geometry,
        &scenario.sources,
        scenario.noise.kind,
        sigma_n,
        scenario.seed,
    );
    Ok(Snapshot {
        geometry,
        y,
        sigma_n,
    })
}

/// Noiseless part plus noise of the given kind and level.
pub fn synth_on(
    geometry: &ArrayGeometry,
    sources: &[Source],
    kind: NoiseKind,
    sigma_n: f64,
    seed: u64,
) -> DVector<Complex64> {
    let mut y = noiseless_snapshot(geometry, sources);
    let m = geometry.len();
    y += match kind {
        NoiseKind::White => white_noise(m, sigma_n, seed),
        NoiseKind::OneOverF => colored_noise(m, sigma_n, seed),
    };
    y
}

pub fn noiseless_snapshot(geometry: &ArrayGeometry, sources: &[Source]) -> DVector<Complex64> {
    let mut y = DVector::zeros(geometry.len());
    for s in sources {
        y += geometry.steering_response(s.doa_deg.to_radians()) * s.amplitude();
    }
    y
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Circular complex Gaussian noise with per-sensor variance `sigma_n^2`.
pub fn white_noise(m: usize, sigma_n: f64, seed: u64) -> DVector<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(m, |_, _| complex_gaussian(&mut rng) * sigma_n)
}

/// Expected power profile of [`colored_noise`] over the sensor-index DFT.
pub fn colored_noise_profile(m: usize) -> Vec<f64> {
    (0..m).map(|k| 1.0 / (k + 1) as f64).collect()
}

/// Noise whose power in spatial DFT bin `k` is proportional to `1/(k+1)`,
/// scaled so that `E ||n||^2 = M sigma_n^2`.
pub fn colored_noise(m: usize, sigma_n: f64, seed: u64) -> DVector<Complex64> {
    if m == 0 {
        return DVector::zeros(0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile = colored_noise_profile(m);
    let total: f64 = profile.iter().sum();
    let scale = sigma_n * (m as f64 / total).sqrt();
    let mut spectrum: Vec<Complex64> = profile
        .iter()
        .map(|w| complex_gaussian(&mut rng) * (w.sqrt() * scale))
        .collect();
    // unitary inverse DFT keeps the expected norm
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_inverse(m).process(&mut spectrum);
    let norm = 1.0 / (m as f64).sqrt();
    DVector::from_iterator(m, spectrum.into_iter().map(|v| v * norm))
}

/// A random DOA pair `(theta, theta + separation)` in degrees, together with
/// random source phases.
pub fn random_pair(separation_deg: f64, rng: &mut impl Rng) -> [Source; 2] {
    let t1 = wrap_deg(180.0 - 360.0 * rng.random::<f64>());
    let t2 = wrap_deg(t1 + separation_deg);
    let p1 = 360.0 * rng.random::<f64>();
    let p2 = 360.0 * rng.random::<f64>();
    [Source::new(t1, 1.0, p1), Source::new(t2, 1.0, p2)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uca_scenario(sources: Vec<Source>, noise: NoiseSpec, seed: u64) -> Scenario {
        Scenario {
            geometry: GeometrySpec::Uca { m: 16, radius: 1.0 },
            sources,
            noise,
            seed,
        }
    }

    #[test]
    fn noiseless_single_source_is_exact() {
        let sc = uca_scenario(vec![Source::new(30.0, 2.0, 45.0)], NoiseSpec::default(), 1);
        let snap = synth_snapshot(&sc).unwrap();
        let expect = snap.geometry.steering_response(30f64.to_radians())
            * Complex64::from_polar(2.0, 45f64.to_radians());
        assert_eq!(snap.sigma_n, 0.0);
        assert!((snap.y - expect).norm() < 1e-15);
    }

    #[test]
    fn snr_round_trip() {
        let sources = [Source::new(0.0, 1.0, 0.0)];
        let s = NoiseSpec::white_snr(20.0).sigma(&sources).unwrap();
        assert!((s - 0.1).abs() < 1e-15);
        assert!((snr_db(1.0, s) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn conflicting_noise_levels_rejected() {
        let n = NoiseSpec {
            kind: NoiseKind::White,
            sigma_n: Some(0.1),
            snr_db: Some(3.0),
        };
        assert!(n.sigma(&[Source::new(0.0, 1.0, 0.0)]).is_err());
        assert!(NoiseSpec::white_snr(3.0).sigma(&[]).is_err());
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let sc = uca_scenario(
            vec![Source::new(10.0, 1.0, 0.0)],
            NoiseSpec::colored_snr(5.0),
            99,
        );
        let a = synth_snapshot(&sc).unwrap().y;
        let b = synth_snapshot(&sc).unwrap().y;
        assert_eq!(a, b);
        let white = uca_scenario(
            vec![Source::new(10.0, 1.0, 0.0)],
            NoiseSpec::white_snr(5.0),
            99,
        );
        assert_ne!(synth_snapshot(&white).unwrap().y, a);
    }

    #[test]
    fn white_noise_norm_matches_expected() {
        let (m, sigma) = (40, 0.3);
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|t| white_noise(m, sigma, t).norm())
            .sum::<f64>()
            / trials as f64;
        let target = sigma * (m as f64).sqrt();
        assert!((mean / target - 1.0).abs() < 0.01, "{mean} vs {target}");
    }

    #[test]
    fn colored_noise_power_and_slope() {
        let (m, sigma) = (40, 0.5);
        let trials = 10_000;
        let mut power = 0.0;
        let mut bins = vec![0.0; m];
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        for t in 0..trials {
            let n = colored_noise(m, sigma, t);
            power += n.norm_squared() / m as f64;
            let mut buf: Vec<Complex64> = n.iter().copied().collect();
            fft.process(&mut buf);
            for (acc, v) in bins.iter_mut().zip(&buf) {
                *acc += v.norm_sqr() / m as f64;
            }
        }
        power /= trials as f64;
        assert!(
            (power / (sigma * sigma) - 1.0).abs() < 0.02,
            "power {power}"
        );
        // least-squares slope of log power against log(k + 1)
        let pts: Vec<(f64, f64)> = bins
            .iter()
            .enumerate()
            .map(|(k, p)| (((k + 1) as f64).ln(), (p / trials as f64).ln()))
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.05, "slope {slope}");
        assert_eq!(colored_noise(m, 0.0, 3), DVector::zeros(m));
    }

    #[test]
    fn superposition_of_sources() {
        let g = make_uca(12, 1.5).unwrap();
        let a = [Source::new(10.0, 1.0, 20.0)];
        let b = [Source::new(-70.0, 0.5, 200.0), Source::new(150.0, 1.2, 0.0)];
        let both: Vec<Source> = a.iter().chain(b.iter()).copied().collect();
        let lhs = noiseless_snapshot(&g, &both);
        let rhs = noiseless_snapshot(&g, &a) + noiseless_snapshot(&g, &b);
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn random_pair_has_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let [a, b] = random_pair(30.0, &mut rng);
            assert!((crate::angle::circ_dist_deg(a.doa_deg, b.doa_deg) - 30.0).abs() < 1e-9);
            assert!(a.doa_deg > -180.0 && a.doa_deg <= 180.0);
        }
    }

    #[test]
    fn scenario_toml_round_trip() {
        let text = r#"
            seed = 7
            [geometry]
            kind = "uca"
            m = 40
            radius = 2.0
            [[sources]]
            doa_deg = 40.0
            [[sources]]
            doa_deg = 50.0
            phase_deg = 30.0
            [noise]
            kind = "one_over_f"
            snr_db = 20.0
        "#;
        let sc: Scenario = toml::from_str(text).unwrap();
        assert_eq!(sc.sources[0].magnitude, 1.0);
        assert_eq!(sc.noise.kind, NoiseKind::OneOverF);
        let back: Scenario = toml::from_str(&toml::to_string(&sc).unwrap()).unwrap();
        assert_eq!(sc, back);
    }
}
