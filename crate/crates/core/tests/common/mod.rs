//! Checks shared by the invariant and acceptance suites.

#![allow(dead_code)]

use gridless_doa::conic::{
    bordered, embed_real, solve, trace_residual, DualProblem, DualSolution, DEFAULT_TOL,
};
use gridless_doa::geometry::{make_ula, ArrayGeometry};
use gridless_doa::manifold::{build_manifold, eval_trig_poly};
use gridless_doa::poly::{autocorrelation, build_p, candidate_angles};
use gridless_doa::simulate::{sigma_from_snr, synth_on, NoiseKind, Source};
use gridless_doa::Complex64;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::PI;

pub const GRID: usize = 4096;

pub fn grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| -PI + 2.0 * PI * i as f64 / n as f64)
}

/// White-noise snapshot of unit-magnitude sources and its noise level.
pub fn noisy(g: &ArrayGeometry, doas: &[f64], snr_db: f64, seed: u64) -> (DVector<Complex64>, f64) {
    let sources: Vec<Source> = doas
        .iter()
        .map(|&d| Source::new(d, 1.0, 17.0 * d))
        .collect();
    let sigma = sigma_from_snr(1.0, snr_db);
    (synth_on(g, &sources, NoiseKind::White, sigma, seed), sigma)
}

/// Dual solution with `delta = e_n` and the derived DFT length.
pub fn solve_noisy(g: &ArrayGeometry, doas: &[f64], snr_db: f64, seed: u64) -> DualSolution {
    let man = build_manifold(g, -160.0).unwrap();
    let (y, sigma) = noisy(g, doas, snr_db, seed);
    let delta = sigma * (g.len() as f64).sqrt();
    solve(&DualProblem::new(&y, &man, delta).unwrap(), DEFAULT_TOL).unwrap()
}

/// `max |b|` over a dense grid; must not exceed `1 + 1e-4`.
pub fn check_bounded(sol: &DualSolution) -> Result<f64, String> {
    let worst = grid(GRID)
        .map(|t| sol.dual_polynomial(t).norm())
        .fold(0.0, f64::max);
    if worst <= 1.0 + 1e-4 {
        Ok(worst)
    } else {
        Err(format!("max |b| = {worst}"))
    }
}

/// Bordered matrix PSD and trace constraints satisfied.
pub fn check_certificates(sol: &DualSolution) -> Result<(), String> {
    let b = bordered(&sol.h_matrix, &sol.h_star);
    let hermitian_gap = (&b - b.adjoint()).norm();
    if hermitian_gap > 1e-9 {
        return Err(format!(
            "bordered matrix not Hermitian ({hermitian_gap:.2e})"
        ));
    }
    let eig = SymmetricEigen::new(embed_real(&b)).eigenvalues;
    let scale = eig.amax().max(1.0);
    if eig.min() < -1e-6 * scale {
        return Err(format!("min eigenvalue {:.3e}", eig.min()));
    }
    let tr = trace_residual(&sol.h_matrix);
    if tr > 1e-6 {
        return Err(format!("trace residual {tr:.3e}"));
    }
    Ok(())
}

/// Coefficient route against `1 - |b|^2` evaluated on a grid.
pub fn check_grid_oracle(h: &DVector<Complex64>, points: usize) -> Result<f64, String> {
    let p = build_p(h.as_slice());
    let mut worst: f64 = 0.0;
    for t in grid(points) {
        let oracle = 1.0 - eval_trig_poly(h, t).norm_sqr();
        let v = p.eval_on_circle(t);
        worst = worst.max((v.re - oracle).abs()).max(v.im.abs());
    }
    if worst < 1e-10 {
        Ok(worst)
    } else {
        Err(format!("grid oracle mismatch {worst:.3e}"))
    }
}

/// Coefficients of `p` satisfy `c_{-k} = conj(c_k)`.
pub fn check_hermitian(h: &[Complex64]) -> Result<(), String> {
    let c = build_p(h).coeffs().to_vec();
    let n = c.len();
    for k in 0..n {
        let d = (c[k] - c[n - 1 - k].conj()).norm();
        if d > 1e-12 {
            return Err(format!("coefficient {k} breaks symmetry by {d:.3e}"));
        }
    }
    if autocorrelation(h).len() != 2 * h.len() - 1 {
        return Err("autocorrelation length".into());
    }
    Ok(())
}

/// Direct route for a half-wavelength ULA with an odd number of sensors:
/// the dual function is a trigonometric polynomial in `omega = pi cos(theta)`
/// with coefficient matrix `I`. Returns DOAs in [0, 180] degrees.
pub fn direct_ula_doas(y: &DVector<Complex64>, delta: f64) -> Vec<f64> {
    let m = y.len();
    let identity = DMatrix::<Complex64>::identity(m, m);
    let sol = solve(
        &DualProblem::with_coefficients(y, &identity, delta).unwrap(),
        DEFAULT_TOL,
    )
    .unwrap();
    let roots = candidate_angles(&sol.h_star, 0.02, 0.5).unwrap();
    roots
        .unit_circle_angles
        .iter()
        .map(|w| (w / PI).clamp(-1.0, 1.0).acos().to_degrees())
        .collect()
}

/// Fourier-series route and direct route agree on a noiseless 11-sensor ULA.
pub fn check_ula_cross(doas: &[f64], seed: u64) -> Result<f64, String> {
    let g = make_ula(11, 0.5).unwrap();
    let man = build_manifold(&g, -160.0).unwrap();
    let sources: Vec<Source> = doas
        .iter()
        .enumerate()
        .map(|(i, &d)| Source::new(d, 1.0 + 0.3 * i as f64, 40.0 * i as f64))
        .collect();
    let y = synth_on(&g, &sources, NoiseKind::White, 0.0, seed);
    let delta = 1e-6;
    let direct = direct_ula_doas(&y, delta);
    let sol = solve(&DualProblem::new(&y, &man, delta).unwrap(), DEFAULT_TOL).unwrap();
    let fd = candidate_angles(&sol.h_star, 0.02, 0.5).unwrap();
    // a line array cannot tell theta from -theta
    let mut folded: Vec<f64> = fd
        .unit_circle_angles
        .iter()
        .map(|a| a.to_degrees().abs())
        .collect();
    folded.sort_by(f64::total_cmp);
    folded.dedup_by(|a, b| (*a - *b).abs() < 0.05);
    if folded.len() != direct.len() {
        return Err(format!("FD {folded:?} vs direct {direct:?}"));
    }
    let mut worst: f64 = 0.0;
    for d in &direct {
        let best = folded
            .iter()
            .map(|f| (f - d).abs())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
    }
    for &truth in doas {
        if !direct.iter().any(|d| (d - truth).abs() < 0.05) {
            return Err(format!(
                "truth {truth} missing from direct route {direct:?}"
            ));
        }
    }
    if worst < 0.05 {
        Ok(worst)
    } else {
        Err(format!("routes differ by {worst:.4} deg"))
    }
}
