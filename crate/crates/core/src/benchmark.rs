//! Monte Carlo RMSE study over SNR and noise-bound multipliers.

use crate::angle::circ_dist_deg;
use crate::error::{DoaError, Result};
use crate::io::SCHEMA_VERSION;
use crate::pipeline::{estimate_with_manifold, manifold_for, DeltaSpec, EstimatorConfig};
use crate::simulate::{random_pair, sigma_from_snr, synth_on, GeometrySpec, NoiseKind, Source};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const DEFAULT_TRIALS: usize = 50;

/// Error charged to a true DOA when nothing was estimated.
pub const MISS_PENALTY_DEG: f64 = 180.0;

pub const MATCHING_RULE: &str = "minimum-cost assignment on circular distance; \
unassigned true DOAs score the distance to the nearest estimate, or 180 deg without estimates; \
failed trials are excluded from RMSE and counted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub geometry: GeometrySpec,
    pub snr_grid: Vec<f64>,
    /// Multiples of `e_n = sigma_n sqrt(M)` used as `delta`.
    pub delta_multipliers: Vec<f64>,
    pub separation_deg: f64,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseKind,
    /// `delta` and `fill_seed` are set per trial.
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(DoaError::InvalidArgument(
                "n_trials must be at least 1".into(),
            ));
        }
        if self.snr_grid.is_empty() || self.delta_multipliers.is_empty() {
            return Err(DoaError::InvalidArgument(
                "snr_grid and delta_multipliers must be nonempty".into(),
            ));
        }
        if self.snr_grid.iter().any(|s| !s.is_finite()) {
            return Err(DoaError::InvalidArgument(
                "snr_grid entries must be finite".into(),
            ));
        }
        if self
            .delta_multipliers
            .iter()
            .any(|d| !(*d >= 0.0) || !d.is_finite())
        {
            return Err(DoaError::InvalidArgument(
                "delta multipliers must be finite and nonnegative".into(),
            ));
        }
        if !self.separation_deg.is_finite() {
            return Err(DoaError::InvalidArgument(
                "separation_deg must be finite".into(),
            ));
        }
        self.estimator.validate()
    }
}

/// Seed of trial `index`, independent of scheduling.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub delta_multiplier: f64,
    pub trial: usize,
    pub seed: u64,
    pub true_doas_deg: Vec<f64>,
    pub est_doas_deg: Vec<f64>,
    /// Matched error per true DOA.
    pub errors_deg: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub snr_db: f64,
    pub delta_multiplier: f64,
    pub rmse_deg: f64,
    pub trials: usize,
    pub failed: usize,
    pub mean_detected: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trend {
    pub delta_multiplier: f64,
    /// Rank correlation of RMSE with SNR.
    pub spearman_rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub schema_version: u32,
    pub matching_rule: String,
    pub spec: BenchmarkSpec,
    pub cells: Vec<CellSummary>,
    pub trends: Vec<Trend>,
    pub trials: Vec<TrialRecord>,
    pub elapsed_s: f64,
}

impl BenchmarkResult {
    pub fn cell(&self, snr_db: f64, delta_multiplier: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.snr_db == snr_db && c.delta_multiplier == delta_multiplier)
    }
}

/// Draws the source pair and noise seed of one trial.
pub fn trial_sources(separation_deg: f64, seed: u64) -> ([Source; 2], u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = random_pair(separation_deg, &mut rng);
    (pair, rng.random())
}

/// Runs every (SNR, multiplier, trial) cell on at most `jobs` threads.
/// All cells share the same source pairs and noise realizations.
pub fn run_benchmark(spec: &BenchmarkSpec, jobs: usize) -> Result<BenchmarkResult> {
    let start = Instant::now();
    spec.validate()?;
    let geometry = spec.geometry.build()?;
    let manifold = manifold_for(&geometry, &spec.estimator)?;

    let mut work = Vec::new();
    for (si, &snr) in spec.snr_grid.iter().enumerate() {
        for (di, &dm) in spec.delta_multipliers.iter().enumerate() {
            for t in 0..spec.n_trials {
                work.push((si, di, snr, dm, t));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| DoaError::Solver(e.to_string()))?;
    let mut records: Vec<(usize, usize, TrialRecord)> = pool.install(|| {
        work.par_iter()
            .map(|&(si, di, snr, dm, t)| {
                let seed = trial_seed(spec.seed, t);
                let (pair, noise_seed) = trial_sources(spec.separation_deg, seed);
                let sigma = sigma_from_snr(1.0, snr);
                let y = synth_on(&geometry, &pair, spec.noise, sigma, noise_seed);
                let truth: Vec<f64> = pair.iter().map(|s| s.doa_deg).collect();
                let mut cfg = spec.estimator.clone();
                cfg.delta = DeltaSpec::NoiseScaled {
                    multiplier: dm,
                    sigma_n: sigma,
                };
                cfg.fill_seed = seed;
                let (est, failure) = match estimate_with_manifold(&y, &geometry, &manifold, &cfg) {
                    Ok(e) => (e.doas_deg, None),
                    Err(e) => (Vec::new(), Some(e.to_string())),
                };
                let errors = if failure.is_none() {
                    matched_errors_deg(&est, &truth)
                } else {
                    Vec::new()
                };
                let rec = TrialRecord {
                    snr_db: snr,
                    delta_multiplier: dm,
                    trial: t,
                    seed,
                    true_doas_deg: truth,
                    est_doas_deg: est,
                    errors_deg: errors,
                    failure,
                };
                (si, di, rec)
            })
            .collect()
    });
    records.sort_by_key(|(si, di, r)| (*si, *di, r.trial));

    let mut cells = Vec::new();
    for (si, &snr) in spec.snr_grid.iter().enumerate() {
        for (di, &dm) in spec.delta_multipliers.iter().enumerate() {
            let recs: Vec<&TrialRecord> = records
                .iter()
                .filter(|(a, b, _)| *a == si && *b == di)
                .map(|(_, _, r)| r)
                .collect();
            let ok: Vec<&&TrialRecord> = recs.iter().filter(|r| r.failure.is_none()).collect();
            let errs: Vec<f64> = ok
                .iter()
                .flat_map(|r| r.errors_deg.iter().copied())
                .collect();
            cells.push(CellSummary {
                snr_db: snr,
                delta_multiplier: dm,
                rmse_deg: rms(&errs),
                trials: recs.len(),
                failed: recs.len() - ok.len(),
                mean_detected: ok.iter().map(|r| r.est_doas_deg.len() as f64).sum::<f64>()
                    / ok.len().max(1) as f64,
            });
        }
    }
    let trends = spec
        .delta_multipliers
        .iter()
        .map(|&dm| {
            let (x, y): (Vec<f64>, Vec<f64>) = cells
                .iter()
                .filter(|c| c.delta_multiplier == dm)
                .map(|c| (c.snr_db, c.rmse_deg))
                .unzip();
            Trend {
                delta_multiplier: dm,
                spearman_rho: spearman(&x, &y),
            }
        })
        .collect();
    Ok(BenchmarkResult {
        schema_version: SCHEMA_VERSION,
        matching_rule: MATCHING_RULE.into(),
        spec: spec.clone(),
        cells,
        trends,
        trials: records.into_iter().map(|(_, _, r)| r).collect(),
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Root mean square; NaN for an empty slice.
pub fn rms(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Error of each true DOA under the optimal assignment to estimates.
pub fn matched_errors_deg(est: &[f64], truth: &[f64]) -> Vec<f64> {
    if est.is_empty() {
        return vec![MISS_PENALTY_DEG; truth.len()];
    }
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| est.iter().map(|e| circ_dist_deg(*e, *t)).collect())
        .collect();
    let mut out = vec![f64::NAN; truth.len()];
    if truth.len() <= est.len() {
        for (i, j) in assign(&cost).into_iter().enumerate() {
            out[i] = cost[i][j];
        }
    } else {
        let transposed: Vec<Vec<f64>> = (0..est.len())
            .map(|j| cost.iter().map(|row| row[j]).collect())
            .collect();
        for (j, i) in assign(&transposed).into_iter().enumerate() {
            out[i] = cost[i][j];
        }
        for (i, row) in cost.iter().enumerate() {
            if out[i].is_nan() {
                out[i] = row.iter().copied().fold(f64::INFINITY, f64::min);
            }
        }
    }
    out
}

/// Hungarian method for an `n x m` cost matrix with `n <= m`; returns the
/// column assigned to each row.
pub fn assign(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Ranks with ties averaged, starting at 1.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
