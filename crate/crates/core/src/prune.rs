//! Sparse selection among candidate directions.
//!
//! Candidate angles are joined by random fill angles, and the complex
//! LASSO
//!
//! ```text
//! minimize  1/2 ||y - A x||_2 + beta sum_i |x_i|
//! ```
//!
//! is solved over the resulting steering dictionary. The residual enters
//! through its norm; [`LassoForm::Squared`] uses `1/2 ||y - A x||_2^2`
//! instead. Angles whose coefficient survives the relative magnitude
//! threshold form the support.

use crate::angle::{circ_dist_rad, wrap_rad};
use crate::conic::ipm::{
    ConeProgram, ConicSolver, InteriorPoint, SocBlock, SolverOptions, SolverStatus,
};
use crate::error::{DoaError, Result};
use crate::geometry::ArrayGeometry;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_N_FILL: usize = 180;
pub const DEFAULT_SUPPORT_THRESH: f64 = 0.3;
/// Minimum distance from a fill angle to any candidate, degrees.
pub const DEFAULT_FILL_EXCLUSION_DEG: f64 = 2.0;
const MAX_RESAMPLE: usize = 10_000;

/// Candidate angles followed by fill angles, with their steering vectors.
#[derive(Debug, Clone)]
pub struct AugmentedDictionary {
    angles: Vec<f64>,
    num_candidates: usize,
    atoms: DMatrix<Complex64>,
}

impl AugmentedDictionary {
    /// Angles in radians; the first [`Self::num_candidates`] are candidates.
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn num_candidates(&self) -> usize {
        self.num_candidates
    }

    /// Steering matrix, one column per angle.
    pub fn atoms(&self) -> &DMatrix<Complex64> {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Appends `n_fill` uniform angles in (-pi, pi] to `candidates`; a fill that
/// lands within `exclusion_rad` of a candidate is redrawn.
pub fn build_dictionary(
    geometry: &ArrayGeometry,
    candidates: &[f64],
    n_fill: usize,
    exclusion_rad: f64,
    seed: u64,
) -> Result<AugmentedDictionary> {
    if !(exclusion_rad >= 0.0) {
        return Err(DoaError::InvalidArgument(
            "fill exclusion radius must be nonnegative".into(),
        ));
    }
    let mut angles: Vec<f64> = candidates.iter().map(|&a| wrap_rad(a)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_fill {
        let mut attempts = 0;
        let fill = loop {
            let a = wrap_rad(PI - 2.0 * PI * rng.random::<f64>());
            if candidates
                .iter()
                .all(|&c| circ_dist_rad(a, c) > exclusion_rad)
            {
                break a;
            }
            attempts += 1;
            if attempts >= MAX_RESAMPLE {
                return Err(DoaError::InvalidArgument(
                    "exclusion zones around candidates cover the whole circle".into(),
                ));
            }
        };
        angles.push(fill);
    }
    let atoms = geometry.steering_matrix(&angles);
    Ok(AugmentedDictionary {
        angles,
        num_candidates: candidates.len(),
        atoms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LassoForm {
    /// `1/2 ||y - A x|| + beta ||x||_1`
    #[default]
    SquareRoot,
    /// `1/2 ||y - A x||^2 + beta ||x||_1`
    Squared,
}

#[derive(Debug, Clone)]
pub struct PruneResult {
    pub x: DVector<Complex64>,
    /// Dictionary indices with `|x_i| > support_thresh * max |x|`, ascending.
    pub support: Vec<usize>,
    /// Angles (radians) of the support.
    pub angles: Vec<f64>,
    pub objective: f64,
    pub status: SolverStatus,
    pub iterations: usize,
}

impl PruneResult {
    /// `(angle_rad, |x_i|)` for every dictionary entry.
    pub fn profile(&self, dict: &AugmentedDictionary) -> Vec<(f64, f64)> {
        dict.angles()
            .iter()
            .zip(self.x.iter())
            .map(|(&a, v)| (a, v.norm()))
            .collect()
    }
}

/// Objective value of the selected LASSO form.
pub fn lasso_objective(
    y: &DVector<Complex64>,
    a: &DMatrix<Complex64>,
    x: &DVector<Complex64>,
    beta: f64,
    form: LassoForm,
) -> f64 {
    let r = (y - a * x).norm();
    let l1: f64 = x.iter().map(|v| v.norm()).sum();
    match form {
        LassoForm::SquareRoot => 0.5 * r + beta * l1,
        LassoForm::Squared => 0.5 * r * r + beta * l1,
    }
}

/// Solves the LASSO over `dict` and thresholds the coefficients.
pub fn lasso_prune(
    y: &DVector<Complex64>,
    dict: &AugmentedDictionary,
    beta: f64,
    form: LassoForm,
    support_thresh: f64,
) -> Result<PruneResult> {
    lasso_prune_with(
        y,
        dict,
        beta,
        form,
        support_thresh,
        &InteriorPoint::new(SolverOptions::default()),
    )
}

pub fn lasso_prune_with(
    y: &DVector<Complex64>,
    dict: &AugmentedDictionary,
    beta: f64,
    form: LassoForm,
    support_thresh: f64,
    solver: &dyn ConicSolver,
) -> Result<PruneResult> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(DoaError::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if !(0.0..1.0).contains(&support_thresh) {
        return Err(DoaError::InvalidArgument(
            "support threshold must lie in [0, 1)".into(),
        ));
    }
    let a = dict.atoms();
    if a.ncols() > 0 && a.nrows() != y.len() {
        return Err(DoaError::DimensionMismatch(format!(
            "snapshot has {} entries, dictionary atoms have {}",
            y.len(),
            a.nrows()
        )));
    }
    let d = dict.len();
    let y_norm = y.norm();
    if d == 0 || y_norm == 0.0 {
        return Ok(PruneResult {
            x: DVector::zeros(d),
            support: Vec::new(),
            angles: Vec::new(),
            objective: lasso_objective(y, a, &DVector::zeros(d), beta, form),
            status: SolverStatus::Optimal,
            iterations: 0,
        });
    }
    // Work with a unit-norm snapshot; the square-root form is homogeneous
    // and the squared form needs beta rescaled.
    let y_unit = y / Complex64::new(y_norm, 0.0);
    let beta_unit = match form {
        LassoForm::SquareRoot => beta,
        LassoForm::Squared => beta / y_norm,
    };
    let program = lasso_program(&y_unit, a, beta_unit, form);
    let sol = solver.solve(&program)?;
    if sol.status == SolverStatus::Failed {
        return Err(DoaError::Solver(format!(
            "LASSO did not converge: {}",
            sol.message
        )));
    }
    let x = DVector::from_fn(d, |i, _| Complex64::new(sol.x[i], sol.x[d + i]) * y_norm);
    let max = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let support: Vec<usize> = if max > 0.0 {
        (0..d)
            .filter(|&i| x[i].norm() > support_thresh * max)
            .collect()
    } else {
        Vec::new()
    };
    let angles = support.iter().map(|&i| dict.angles()[i]).collect();
    Ok(PruneResult {
        objective: lasso_objective(y, a, &x, beta, form),
        x,
        support,
        angles,
        status: sol.status,
        iterations: sol.iterations,
    })
}

/// Variables: `Re x` (D), `Im x` (D), moduli `u` (D), residual bound `t`.
fn lasso_program(
    y: &DVector<Complex64>,
    a: &DMatrix<Complex64>,
    beta: f64,
    form: LassoForm,
) -> ConeProgram {
    let (m, d) = a.shape();
    let nv = 3 * d + 1;
    let t = 3 * d;
    let mut c = DVector::zeros(nv);
    for i in 0..d {
        c[2 * d + i] = beta;
    }
    let mut vars: Vec<usize> = (0..2 * d).collect();
    vars.push(t);
    let (dim, row0) = match form {
        LassoForm::SquareRoot => (1 + 2 * m, 1),
        LassoForm::Squared => (2 + 2 * m, 1),
    };
    let mut h = DVector::zeros(dim);
    let mut g = DMatrix::zeros(dim, 2 * d + 1);
    match form {
        LassoForm::SquareRoot => {
            c[t] = 0.5;
            g[(0, 2 * d)] = -1.0;
        }
        LassoForm::Squared => {
            // ||r||^2 <= 2t  <=>  (t + 1/2, r, t - 1/2) in the cone
            c[t] = 1.0;
            h[0] = 0.5;
            g[(0, 2 * d)] = -1.0;
            h[dim - 1] = -0.5;
            g[(dim - 1, 2 * d)] = -1.0;
        }
    }
    for r in 0..m {
        h[row0 + r] = y[r].re;
        h[row0 + m + r] = y[r].im;
        for j in 0..d {
            let v = a[(r, j)];
            g[(row0 + r, j)] = v.re;
            g[(row0 + r, d + j)] = -v.im;
            g[(row0 + m + r, j)] = v.im;
            g[(row0 + m + r, d + j)] = v.re;
        }
    }
    let mut soc = vec![SocBlock { dim, h, vars, g }];
    for i in 0..d {
        let mut gi = DMatrix::zeros(3, 3);
        gi[(0, 0)] = -1.0;
        gi[(1, 1)] = -1.0;
        gi[(2, 2)] = -1.0;
        soc.push(SocBlock {
            dim: 3,
            h: DVector::zeros(3),
            vars: vec![2 * d + i, i, d + i],
            g: gi,
        });
    }
    ConeProgram {
        num_vars: nv,
        c,
        hermitian: Vec::new(),
        soc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_uca;

    fn deg(v: &[f64]) -> Vec<f64> {
        v.iter().map(|a| a.to_degrees()).collect()
    }

    #[test]
    fn dictionary_sizes() {
        let g = make_uca(8, 1.0).unwrap();
        let cands = [40f64.to_radians(), 50f64.to_radians()];
        let d = build_dictionary(&g, &cands, 0, 0.01, 1).unwrap();
        assert_eq!(d.len(), 2);
        let d = build_dictionary(&g, &[], 100, 0.01, 1).unwrap();
        assert_eq!(d.len(), 100);
        assert!(d.angles().iter().all(|&a| a > -PI && a <= PI));
        let d = build_dictionary(&g, &cands, 180, 0.5f64.to_radians(), 3).unwrap();
        assert_eq!(d.len(), 182);
        assert_eq!(d.num_candidates(), 2);
        for &f in &d.angles()[2..] {
            assert!(cands
                .iter()
                .all(|&c| circ_dist_rad(f, c) > 0.5f64.to_radians()));
        }
        let again = build_dictionary(&g, &cands, 180, 0.5f64.to_radians(), 3).unwrap();
        assert_eq!(d.angles(), again.angles());
    }

    #[test]
    fn impossible_exclusion_is_an_error() {
        let g = make_uca(4, 1.0).unwrap();
        assert!(build_dictionary(&g, &[0.0], 1, 4.0, 1).is_err());
    }

    #[test]
    fn zero_snapshot_gives_empty_support() {
        let g = make_uca(10, 1.0).unwrap();
        let d = build_dictionary(&g, &[0.3], 20, 0.01, 2).unwrap();
        let r = lasso_prune(
            &DVector::zeros(10),
            &d,
            0.1,
            LassoForm::SquareRoot,
            DEFAULT_SUPPORT_THRESH,
        )
        .unwrap();
        assert!(r.support.is_empty());
        assert!(r.x.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn noiseless_on_dictionary_support() {
        let g = make_uca(20, 2.0).unwrap();
        let cands = [40f64.to_radians(), 100f64.to_radians()];
        let d = build_dictionary(&g, &cands, 60, 0.5f64.to_radians(), 9).unwrap();
        let y = g.steering_response(cands[0])
            + g.steering_response(cands[1]) * Complex64::from_polar(0.8, 1.0);
        for form in [LassoForm::SquareRoot, LassoForm::Squared] {
            let r = lasso_prune(&y, &d, 0.05, form, DEFAULT_SUPPORT_THRESH).unwrap();
            assert_eq!(
                r.support,
                vec![0, 1],
                "{form:?} picked {:?}",
                deg(&r.angles)
            );
        }
    }

    #[test]
    fn matches_objective_of_least_squares_start() {
        let g = make_uca(12, 1.5).unwrap();
        let d = build_dictionary(&g, &[0.2, 1.9], 30, 0.01, 4).unwrap();
        let y = g.steering_response(0.2) * Complex64::new(0.0, 2.0) + g.steering_response(-2.4);
        let r = lasso_prune(&y, &d, 0.3, LassoForm::SquareRoot, DEFAULT_SUPPORT_THRESH).unwrap();
        // no feasible point in a neighbourhood of x_star does better
        let base = r.objective;
        for i in 0..d.len() {
            for step in [Complex64::new(1e-3, 0.0), Complex64::new(0.0, 1e-3)] {
                let mut x = r.x.clone();
                x[i] += step;
                assert!(
                    lasso_objective(&y, d.atoms(), &x, 0.3, LassoForm::SquareRoot) >= base - 1e-8
                );
            }
        }
    }

    #[test]
    fn support_shrinks_with_beta() {
        let g = make_uca(16, 2.0).unwrap();
        let cands: Vec<f64> = [-120.0, -30.0, 10.0, 75.0f64]
            .iter()
            .map(|a: &f64| a.to_radians())
            .collect();
        let d = build_dictionary(&g, &cands, 40, 0.01, 5).unwrap();
        let mut y = g.steering_response(cands[0])
            + g.steering_response(cands[1]) * Complex64::new(0.6, 0.0)
            + g.steering_response(cands[2]) * Complex64::new(0.3, 0.0);
        y[3] += Complex64::new(0.4, -0.2);
        let mut last = usize::MAX;
        for beta in [0.02, 0.1, 0.3, 0.6, 1.0, 2.0] {
            let n = lasso_prune(&y, &d, beta, LassoForm::SquareRoot, 0.0)
                .unwrap()
                .x
                .iter()
                .filter(|v| v.norm() > 1e-4)
                .count();
            assert!(n <= last, "beta {beta}: {n} > {last}");
            last = n;
        }
    }

    #[test]
    fn rejects_bad_beta() {
        let g = make_uca(4, 1.0).unwrap();
        let d = build_dictionary(&g, &[0.0], 0, 0.0, 1).unwrap();
        assert!(lasso_prune(&DVector::zeros(4), &d, 0.0, LassoForm::SquareRoot, 0.05).is_err());
    }
}
