//! End-to-end estimator: manifold, dual SDP, rooting, pruning, amplitudes.

use crate::angle::{circ_dist_rad, wrap_deg};
use crate::conic::{self, DualProblem, SolverStatus};
use crate::error::{DoaError, Result};
use crate::geometry::ArrayGeometry;
use crate::manifold::{build_manifold_with_p, min_dft_length, ManifoldModel, DEFAULT_GAMMA_DB};
use crate::poly::{
    build_p, cluster_angles, find_unit_circle_angles, RootSet, DEFAULT_CIRCLE_TOL,
    DEFAULT_CLUSTER_TOL_DEG,
};
use crate::prune::{
    build_dictionary, lasso_prune, LassoForm, DEFAULT_FILL_EXCLUSION_DEG, DEFAULT_N_FILL,
    DEFAULT_SUPPORT_THRESH,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Grid used to check the sign of `1 - |b|^2`.
const P_CHECK_GRID: usize = 8192;
/// Reciprocal condition number below which least squares is refused.
const RANK_RCOND: f64 = 1e-8;

/// The noise bound `delta` of the dual problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DeltaSpec {
    /// Used as given.
    Fixed { value: f64 },
    /// `multiplier * sigma_n * sqrt(M)` with a known noise level.
    NoiseScaled { multiplier: f64, sigma_n: f64 },
}

impl DeltaSpec {
    pub fn resolve(&self, m: usize) -> Result<f64> {
        let delta = match *self {
            DeltaSpec::Fixed { value } => value,
            DeltaSpec::NoiseScaled {
                multiplier,
                sigma_n,
            } => multiplier * expected_noise_norm(sigma_n, m),
        };
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(DoaError::InvalidArgument(format!(
                "delta must be finite and nonnegative, got {delta}"
            )));
        }
        Ok(delta)
    }

    /// Noise level implied by the bound, `delta / sqrt(M)` for a fixed delta.
    pub fn sigma_hat(&self, m: usize) -> Result<f64> {
        match *self {
            DeltaSpec::Fixed { .. } => Ok(self.resolve(m)? / (m as f64).sqrt()),
            DeltaSpec::NoiseScaled { sigma_n, .. } => Ok(sigma_n),
        }
    }
}

/// `e_n = sigma_n sqrt(M)`.
pub fn expected_noise_norm(sigma_n: f64, m: usize) -> f64 {
    sigma_n * (m as f64).sqrt()
}

/// Penalty weight of the pruning LASSO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BetaSpec {
    Fixed {
        value: f64,
    },
    /// `multiplier * sqrt(ln D) / 2` for the square-root form and
    /// `multiplier * sqrt(ln D) * sigma_hat * sqrt(M)` for the squared form,
    /// with `D` the dictionary size.
    Auto {
        multiplier: f64,
    },
}

pub const DEFAULT_BETA_MULT: f64 = 0.7;

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::Auto {
            multiplier: DEFAULT_BETA_MULT,
        }
    }
}

impl BetaSpec {
    pub fn resolve(
        &self,
        form: LassoForm,
        dict_size: usize,
        m: usize,
        sigma_hat: f64,
    ) -> Result<f64> {
        let beta = match *self {
            BetaSpec::Fixed { value } => value,
            BetaSpec::Auto { multiplier } => {
                let scale = (dict_size.max(2) as f64).ln().sqrt();
                match form {
                    LassoForm::SquareRoot => multiplier * scale / 2.0,
                    LassoForm::Squared => multiplier * scale * expected_noise_norm(sigma_hat, m),
                }
            }
        };
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(DoaError::InvalidArgument(format!(
                "beta must be positive, got {beta}"
            )));
        }
        Ok(beta)
    }
}

/// Every tunable of the estimator. The number of sources is not one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub gamma_db: f64,
    /// Overrides the DFT length derived from the array radius.
    pub p_override: Option<usize>,
    pub delta: DeltaSpec,
    pub circle_tol: f64,
    pub cluster_tol_deg: f64,
    /// Skip the LASSO and report every unit-circle root.
    pub prune: bool,
    pub beta: BetaSpec,
    pub lasso_form: LassoForm,
    pub n_fill: usize,
    /// Fill angles closer than this to a candidate are redrawn, degrees.
    pub fill_exclusion_deg: f64,
    pub support_thresh: f64,
    pub fill_seed: u64,
    pub solver_tol: f64,
}

impl Default for EstimatorConfig {
    /// Defaults with `delta = 0`, to be replaced for noisy data.
    fn default() -> Self {
        Self::with_delta(DeltaSpec::Fixed { value: 0.0 })
    }
}

impl EstimatorConfig {
    /// Defaults with `delta = e_n` for a known noise level.
    pub fn with_noise(sigma_n: f64) -> Self {
        Self::with_delta(DeltaSpec::NoiseScaled {
            multiplier: 1.0,
            sigma_n,
        })
    }

    pub fn with_delta(delta: DeltaSpec) -> Self {
        Self {
            gamma_db: DEFAULT_GAMMA_DB,
            p_override: None,
            delta,
            circle_tol: DEFAULT_CIRCLE_TOL,
            cluster_tol_deg: DEFAULT_CLUSTER_TOL_DEG,
            prune: true,
            beta: BetaSpec::default(),
            lasso_form: LassoForm::SquareRoot,
            n_fill: DEFAULT_N_FILL,
            fill_exclusion_deg: DEFAULT_FILL_EXCLUSION_DEG,
            support_thresh: DEFAULT_SUPPORT_THRESH,
            fill_seed: 0,
            solver_tol: conic::DEFAULT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("circle_tol", self.circle_tol),
            ("cluster_tol_deg", self.cluster_tol_deg),
            ("solver_tol", self.solver_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DoaError::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.fill_exclusion_deg >= 0.0) || !self.fill_exclusion_deg.is_finite() {
            return Err(DoaError::InvalidArgument(
                "fill_exclusion_deg must be finite and nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.support_thresh) {
            return Err(DoaError::InvalidArgument(
                "support_thresh must lie in [0, 1)".into(),
            ));
        }
        if !self.gamma_db.is_finite() || self.gamma_db == 0.0 {
            return Err(DoaError::InvalidArgument(
                "gamma_db must be a finite nonzero level".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpDiagnostics {
    pub status: SolverStatus,
    pub iterations: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoDiagnostics {
    pub status: SolverStatus,
    pub iterations: usize,
    pub objective: f64,
    pub dictionary_size: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub manifold_s: f64,
    pub sdp_s: f64,
    pub roots_s: f64,
    pub prune_s: f64,
    pub amplitudes_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub p: usize,
    pub n: usize,
    pub gamma_db: f64,
    pub delta: f64,
    pub beta: Option<f64>,
    /// Candidate DOAs from the unit-circle roots, degrees.
    pub candidates_deg: Vec<f64>,
    pub near_circle_roots: usize,
    pub pre_prune_count: usize,
    pub post_prune_count: usize,
    pub degenerate_polynomial: bool,
    /// Minimum of `1 - |b|^2` on a uniform grid.
    pub p_grid_min: f64,
    pub sdp: SdpDiagnostics,
    pub lasso: Option<LassoDiagnostics>,
    pub timings: Timings,
}

/// Intermediate results kept for plotting.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub h_star: DVector<Complex64>,
    pub roots: RootSet,
    /// `(angle_rad, |x|)` over the pruning dictionary.
    pub prune_profile: Vec<(f64, f64)>,
    pub num_candidates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceEstimate {
    /// Ascending, in (-180, 180].
    pub doas_deg: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub artifacts: Artifacts,
}

/// Runs the full estimator on one snapshot.
pub fn estimate(
    y: &DVector<Complex64>,
    geometry: &ArrayGeometry,
    cfg: &EstimatorConfig,
) -> Result<SourceEstimate> {
    let start = Instant::now();
    cfg.validate()?;
    if y.len() != geometry.len() {
        return Err(DoaError::DimensionMismatch(format!(
            "snapshot has {} entries for {} sensors",
            y.len(),
            geometry.len()
        )));
    }
    let manifold = manifold_for(geometry, cfg).map_err(|e| e.in_stage("manifold"))?;
    let manifold_s = start.elapsed().as_secs_f64();
    let mut est = estimate_with_manifold(y, geometry, &manifold, cfg)?;
    est.diagnostics.timings.manifold_s = manifold_s;
    est.diagnostics.timings.total_s = start.elapsed().as_secs_f64();
    Ok(est)
}

/// Truncated manifold with the configured or derived DFT length.
pub fn manifold_for(geometry: &ArrayGeometry, cfg: &EstimatorConfig) -> Result<ManifoldModel> {
    let p = match cfg.p_override {
        Some(p) => p,
        None => min_dft_length(geometry.max_radius(), cfg.gamma_db)?,
    };
    build_manifold_with_p(geometry, cfg.gamma_db, p)
}

/// [`estimate`] with a prebuilt manifold, for repeated use on one array.
pub fn estimate_with_manifold(
    y: &DVector<Complex64>,
    geometry: &ArrayGeometry,
    manifold: &ManifoldModel,
    cfg: &EstimatorConfig,
) -> Result<SourceEstimate> {
    let start = Instant::now();
    cfg.validate()?;
    let m = geometry.len();
    if y.len() != m || manifold.num_sensors() != m {
        return Err(DoaError::DimensionMismatch(format!(
            "snapshot has {} entries, array {} sensors, manifold {} sensors",
            y.len(),
            m,
            manifold.num_sensors()
        )));
    }
    let mut timings = Timings::default();

    let delta = cfg.delta.resolve(m).map_err(|e| e.in_stage("sdp"))?;
    let t = Instant::now();
    let problem = DualProblem::new(y, manifold, delta).map_err(|e| e.in_stage("sdp"))?;
    let dual = conic::solve(&problem, cfg.solver_tol).map_err(|e| e.in_stage("sdp"))?;
    timings.sdp_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let poly = build_p(dual.h_star.as_slice());
    let p_grid_min = if poly.is_degenerate() {
        0.0
    } else {
        poly.grid_minimum(P_CHECK_GRID)
    };
    let roots = find_unit_circle_angles(&poly, cfg.circle_tol, cfg.cluster_tol_deg)
        .map_err(|e| e.in_stage("roots"))?;
    timings.roots_s = t.elapsed().as_secs_f64();
    let candidates = roots.unit_circle_angles.clone();

    let t = Instant::now();
    let mut beta = None;
    let mut lasso = None;
    let mut prune_profile = Vec::new();
    let selected = if cfg.prune && !candidates.is_empty() {
        let sigma_hat = cfg.delta.sigma_hat(m).map_err(|e| e.in_stage("prune"))?;
        let dict = build_dictionary(
            geometry,
            &candidates,
            cfg.n_fill,
            cfg.fill_exclusion_deg.to_radians(),
            cfg.fill_seed,
        )
        .map_err(|e| e.in_stage("prune"))?;
        let b = cfg
            .beta
            .resolve(cfg.lasso_form, dict.len(), m, sigma_hat)
            .map_err(|e| e.in_stage("prune"))?;
        beta = Some(b);
        let res = lasso_prune(y, &dict, b, cfg.lasso_form, cfg.support_thresh)
            .map_err(|e| e.in_stage("prune"))?;
        prune_profile = res.profile(&dict);
        lasso = Some(LassoDiagnostics {
            status: res.status,
            iterations: res.iterations,
            objective: res.objective,
            dictionary_size: dict.len(),
        });
        // fill atoms absorb energy but are never reported
        res.support
            .iter()
            .filter(|&&i| i < dict.num_candidates())
            .map(|&i| dict.angles()[i])
            .collect()
    } else {
        candidates.clone()
    };
    let merged = cluster_angles(&selected, cfg.cluster_tol_deg.to_radians());
    timings.prune_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let amplitudes =
        recover_amplitudes(y, geometry, &merged).map_err(|e| e.in_stage("amplitudes"))?;
    timings.amplitudes_s = t.elapsed().as_secs_f64();
    timings.total_s = start.elapsed().as_secs_f64();

    let mut pairs: Vec<(f64, Complex64)> = merged
        .iter()
        .map(|a| wrap_deg(a.to_degrees()))
        .zip(amplitudes)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let diagnostics = Diagnostics {
        p: manifold.p(),
        n: manifold.n(),
        gamma_db: manifold.gamma_db(),
        delta,
        beta,
        candidates_deg: candidates
            .iter()
            .map(|a| wrap_deg(a.to_degrees()))
            .collect(),
        near_circle_roots: roots.near_circle_roots,
        pre_prune_count: candidates.len(),
        post_prune_count: pairs.len(),
        degenerate_polynomial: roots.degenerate,
        p_grid_min,
        sdp: SdpDiagnostics {
            status: dual.status,
            iterations: dual.iterations,
            objective: dual.objective,
            primal_residual: dual.primal_residual,
            dual_residual: dual.dual_residual,
            gap: dual.gap,
        },
        lasso,
        timings,
    };
    Ok(SourceEstimate {
        doas_deg: pairs.iter().map(|p| p.0).collect(),
        amplitudes: pairs.iter().map(|p| p.1).collect(),
        diagnostics,
        artifacts: Artifacts {
            h_star: dual.h_star,
            roots,
            prune_profile,
            num_candidates: candidates.len(),
        },
    })
}

/// Least-squares amplitudes `A(doas)^+ y`, refusing ill-conditioned steering matrices.
pub fn recover_amplitudes(
    y: &DVector<Complex64>,
    geometry: &ArrayGeometry,
    doas_rad: &[f64],
) -> Result<Vec<Complex64>> {
    if y.len() != geometry.len() {
        return Err(DoaError::DimensionMismatch(format!(
            "snapshot has {} entries for {} sensors",
            y.len(),
            geometry.len()
        )));
    }
    if doas_rad.is_empty() {
        return Ok(Vec::new());
    }
    if doas_rad.len() > geometry.len() {
        return Err(DoaError::InvalidArgument(format!(
            "{} DOAs exceed the {} sensors",
            doas_rad.len(),
            geometry.len()
        )));
    }
    let a = geometry.steering_matrix(doas_rad);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= RANK_RCOND * smax {
        let (i, j) = most_coherent_pair(&a);
        return Err(DoaError::RankDeficient(
            wrap_deg(doas_rad[i].to_degrees()),
            wrap_deg(doas_rad[j].to_degrees()),
        ));
    }
    let s = svd
        .solve(y, RANK_RCOND * smax)
        .map_err(|e| DoaError::Solver(e.to_string()))?;
    Ok(s.iter().copied().collect())
}

fn most_coherent_pair(a: &DMatrix<Complex64>) -> (usize, usize) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for i in 0..a.ncols() {
        for j in i + 1..a.ncols() {
            let c =
                a.column(i).dotc(&a.column(j)).norm() / (a.column(i).norm() * a.column(j).norm());
            if c > best.2 {
                best = (i, j, c);
            }
        }
    }
    (best.0, best.1)
}

/// Delay-and-sum spectrum `|a(theta)^H y| / M` on `grid_rad`.
pub fn cbf_spectrum(
    y: &DVector<Complex64>,
    geometry: &ArrayGeometry,
    grid_rad: &[f64],
) -> Vec<f64> {
    let m = geometry.len() as f64;
    grid_rad
        .iter()
        .map(|&t| geometry.steering_response(t).dotc(y).norm() / m)
        .collect()
}

/// Indices of strict-or-plateau local maxima of a circular sequence.
pub fn circular_local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let prev = values[(i + n - 1) % n];
            let next = values[(i + 1) % n];
            values[i] > prev && values[i] >= next
        })
        .collect()
}

/// Local maxima of a sequence on an open interval grid (ends excluded).
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect()
}

/// Angular distance in degrees between two DOAs.
pub fn doa_error_deg(a_deg: f64, b_deg: f64) -> f64 {
    circ_dist_rad(a_deg.to_radians(), b_deg.to_radians()).to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_rpa, make_uca, make_ula};

    fn grid(step_deg: f64) -> Vec<f64> {
        let n = (360.0 / step_deg).round() as usize;
        (0..n)
            .map(|i| (-180.0 + step_deg * (i + 1) as f64).to_radians())
            .collect()
    }

    #[test]
    fn amplitudes_exact_for_noiseless_data() {
        let g = make_rpa(12, 0.25, 1.5, 3).unwrap();
        let doas = [0.4, -1.1, 2.5];
        let s = [
            Complex64::new(1.0, -0.5),
            Complex64::new(0.2, 0.9),
            Complex64::new(-2.0, 0.0),
        ];
        let y = g.steering_matrix(&doas) * DVector::from_column_slice(&s);
        let est = recover_amplitudes(&y, &g, &doas).unwrap();
        for (a, b) in est.iter().zip(&s) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(recover_amplitudes(&y, &g, &[]).unwrap().is_empty());
    }

    #[test]
    fn duplicate_doas_name_the_pair() {
        let g = make_uca(10, 1.0).unwrap();
        let y = g.steering_response(0.3);
        let err = recover_amplitudes(&y, &g, &[1.0, 0.3, 0.3]).unwrap_err();
        match err {
            DoaError::RankDeficient(a, b) => {
                assert!(
                    (a - 0.3f64.to_degrees()).abs() < 1e-9
                        && (b - 0.3f64.to_degrees()).abs() < 1e-9
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cbf_peaks_at_single_source_and_ignores_phase() {
        let g = make_uca(16, 1.0).unwrap();
        let truth = 37.0f64;
        let y = g.steering_response(truth.to_radians());
        let gr = grid(0.1);
        let spec = cbf_spectrum(&y, &g, &gr);
        let imax = (0..spec.len())
            .max_by(|&a, &b| spec[a].total_cmp(&spec[b]))
            .unwrap();
        assert!(doa_error_deg(gr[imax].to_degrees(), truth) <= 0.1 + 1e-9);
        assert!((spec[imax] - 1.0).abs() < 1e-6);
        let rotated = cbf_spectrum(&(&y * Complex64::from_polar(1.0, 2.0)), &g, &gr);
        for (a, b) in spec.iter().zip(&rotated) {
            assert!((a - b).abs() < 1e-12 && *a >= 0.0);
        }
    }

    #[test]
    fn noiseless_single_source_end_to_end() {
        let g = make_uca(12, 1.0).unwrap();
        let truth = -63.0f64;
        let amp = Complex64::from_polar(1.3, 0.4);
        let y = g.steering_response(truth.to_radians()) * amp;
        let cfg = EstimatorConfig::with_delta(DeltaSpec::Fixed { value: 1e-6 });
        let est = estimate(&y, &g, &cfg).unwrap();
        assert_eq!(est.doas_deg.len(), 1, "{:?}", est.doas_deg);
        assert!(doa_error_deg(est.doas_deg[0], truth) < 0.05);
        assert!((est.amplitudes[0] - amp).norm() / amp.norm() < 1e-3);
        assert!(est.diagnostics.lasso.is_some());
    }

    #[test]
    fn zero_snapshot_finds_nothing() {
        let g = make_ula(6, 0.5).unwrap();
        let cfg = EstimatorConfig::with_delta(DeltaSpec::Fixed { value: 0.1 });
        let est = estimate(&DVector::zeros(6), &g, &cfg).unwrap();
        assert!(est.doas_deg.is_empty());
    }

    #[test]
    fn stage_is_reported() {
        let g = make_uca(6, 1.0).unwrap();
        let mut cfg = EstimatorConfig::with_delta(DeltaSpec::Fixed { value: 0.1 });
        cfg.p_override = Some(4);
        let err = estimate(&g.steering_response(0.0), &g, &cfg).unwrap_err();
        assert!(
            matches!(
                err,
                DoaError::Stage {
                    stage: "manifold",
                    ..
                }
            ),
            "{err}"
        );
        cfg.p_override = None;
        cfg.delta = DeltaSpec::Fixed { value: -1.0 };
        let err = estimate(&g.steering_response(0.0), &g, &cfg).unwrap_err();
        assert!(matches!(err, DoaError::Stage { stage: "sdp", .. }), "{err}");
    }

    #[test]
    fn auto_beta_scales() {
        let b = BetaSpec::default();
        let sr = b.resolve(LassoForm::SquareRoot, 190, 40, 0.3).unwrap();
        assert!((sr - 0.7 * 190f64.ln().sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(sr, b.resolve(LassoForm::SquareRoot, 190, 40, 3.0).unwrap());
        let sq = b.resolve(LassoForm::Squared, 190, 40, 0.3).unwrap();
        assert!((sq - 0.7 * 190f64.ln().sqrt() * 0.3 * 40f64.sqrt()).abs() < 1e-12);
        assert!(BetaSpec::Fixed { value: 0.0 }
            .resolve(LassoForm::SquareRoot, 10, 4, 1.0)
            .is_err());
        assert!(b.resolve(LassoForm::Squared, 10, 4, 0.0).is_err());
    }

    #[test]
    fn maxima_helpers() {
        assert_eq!(local_maxima(&[0.0, 1.0, 0.5, 2.0, 1.0]), vec![1, 3]);
        assert_eq!(circular_local_maxima(&[3.0, 1.0, 2.0, 1.0]), vec![0, 2]);
    }
}
