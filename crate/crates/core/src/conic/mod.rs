//! The finite semidefinite program for the dual polynomial.
//!
//! Decision variables are the dual vector `c` and a Hermitian `H` (P x P):
//!
//! ```text
//! maximize    Re{c^H y} - delta ||c||_2
//! subject to  [[H, G^H c], [c^H G, 1]] >= 0
//!             sum_i H[i, i+j] = 1 if j == 0, else 0     (j = 0..P-1)
//! ```
//!
//! The program is handed to the interior-point engine as the conic dual of
//! a Toeplitz-parameterized problem, so the Newton systems have about `4P`
//! unknowns instead of the `P^2` entries of `H`. The bordered matrix is the
//! dual variable of one Hermitian PSD block; `(t, c)` with `t >= ||c||` is
//! the dual variable of one second-order cone.

pub mod ipm;

use crate::error::{DoaError, Result};
use crate::manifold::{eval_trig_poly, ManifoldModel};
pub use ipm::SolverStatus;
use ipm::{
    ConeProgram, ConicSolver, HermitianBlock, InteriorPoint, SocBlock, SolverOptions,
    SparseHermitian,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::time::Instant;

/// Default relative KKT tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Snapshot, dual-polynomial map `G^H` and noise bound.
#[derive(Debug, Clone, Copy)]
pub struct DualProblem<'a> {
    y: &'a DVector<Complex64>,
    g_hermitian: &'a DMatrix<Complex64>,
    delta: f64,
}

impl<'a> DualProblem<'a> {
    pub fn new(y: &'a DVector<Complex64>, manifold: &'a ManifoldModel, delta: f64) -> Result<Self> {
        Self::with_coefficients(y, manifold.g_hermitian(), delta)
    }

    /// Uses an arbitrary P x M coefficient map in place of a manifold model.
    pub fn with_coefficients(
        y: &'a DVector<Complex64>,
        g_hermitian: &'a DMatrix<Complex64>,
        delta: f64,
    ) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(DoaError::InvalidArgument(format!(
                "delta must be finite and nonnegative, got {delta}"
            )));
        }
        if y.len() != g_hermitian.ncols() {
            return Err(DoaError::DimensionMismatch(format!(
                "snapshot has {} entries, model has {} sensors",
                y.len(),
                g_hermitian.ncols()
            )));
        }
        if g_hermitian.nrows() % 2 == 0 {
            return Err(DoaError::InvalidArgument(
                "coefficient map must have an odd number of rows".into(),
            ));
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(DoaError::InvalidArgument(
                "snapshot contains non-finite values".into(),
            ));
        }
        Ok(Self {
            y,
            g_hermitian,
            delta,
        })
    }

    pub fn p(&self) -> usize {
        self.g_hermitian.nrows()
    }

    pub fn m(&self) -> usize {
        self.g_hermitian.ncols()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Variable layout of the assembled cone program.
#[derive(Debug, Clone)]
pub struct AssembledProgram {
    pub program: ConeProgram,
    p: usize,
    m: usize,
}

impl AssembledProgram {
    /// Dimension of the bordered PSD constraint once the Hermitian block is
    /// written as a real symmetric matrix `[[Re, -Im], [Im, Re]]`.
    pub fn real_psd_dim(&self) -> usize {
        2 * (self.p + 1)
    }

    pub fn hermitian_dim(&self) -> usize {
        self.p + 1
    }

    /// Dimension of the `(t, Re c, Im c)` second-order cone.
    pub fn soc_dim(&self) -> usize {
        1 + 2 * self.m
    }

    /// One trace constraint per diagonal offset j = 0..P-1.
    pub fn trace_constraint_count(&self) -> usize {
        self.p
    }

    /// Real degrees of freedom of the SDP itself: Hermitian `H` plus complex `c`.
    pub fn sdp_real_variables(&self) -> usize {
        self.p * self.p + 2 * self.m
    }

    fn split(&self, z_soc: &DVector<f64>) -> DVector<Complex64> {
        DVector::from_fn(self.m, |i, _| {
            Complex64::new(z_soc[1 + i], z_soc[1 + self.m + i])
        })
    }
}

const J0: usize = 0;

fn var_diag_re(j: usize) -> usize {
    2 * j - 1
}

fn var_diag_im(j: usize) -> usize {
    2 * j
}

fn var_corner(p: usize) -> usize {
    2 * p - 1
}

fn var_border_re(p: usize, k: usize) -> usize {
    2 * p + 2 * k
}

fn var_border_im(p: usize, k: usize) -> usize {
    2 * p + 2 * k + 1
}

/// Builds the cone program whose dual is the SDP above.
pub fn assemble(problem: &DualProblem<'_>) -> AssembledProgram {
    let p = problem.p();
    let m = problem.m();
    let n = p + 1;
    let num_vars = 4 * p;
    let half = Complex64::new(0.5, 0.0);
    let ihalf = Complex64::new(0.0, 0.5);

    let mut columns = Vec::with_capacity(num_vars);
    let mut c = DVector::zeros(num_vars);

    let mut trace = SparseHermitian::new(n);
    for i in 0..p {
        trace.push(i, i, Complex64::new(1.0, 0.0));
    }
    columns.push((J0, trace));
    c[J0] = -1.0;
    for j in 1..p {
        let mut re = SparseHermitian::new(n);
        let mut im = SparseHermitian::new(n);
        for i in 0..p - j {
            re.push(i, i + j, half);
            im.push(i, i + j, ihalf);
        }
        columns.push((var_diag_re(j), re));
        columns.push((var_diag_im(j), im));
    }
    let mut corner = SparseHermitian::new(n);
    corner.push(p, p, Complex64::new(1.0, 0.0));
    columns.push((var_corner(p), corner));
    c[var_corner(p)] = -1.0;

    let soc_dim = 1 + 2 * m;
    let mut g = DMatrix::zeros(soc_dim, 2 * p);
    let mut soc_vars = Vec::with_capacity(2 * p);
    let gh = problem.g_hermitian;
    for k in 0..p {
        let mut re = SparseHermitian::new(n);
        re.push(k, p, half);
        let mut im = SparseHermitian::new(n);
        im.push(k, p, ihalf);
        columns.push((var_border_re(p, k), re));
        columns.push((var_border_im(p, k), im));
        soc_vars.push(var_border_re(p, k));
        soc_vars.push(var_border_im(p, k));
        // Re/Im of (G^H c)_k as linear forms in (Re c, Im c), negated
        for mm in 0..m {
            let a = gh[(k, mm)];
            g[(1 + mm, 2 * k)] = -a.re;
            g[(1 + m + mm, 2 * k)] = a.im;
            g[(1 + mm, 2 * k + 1)] = -a.im;
            g[(1 + m + mm, 2 * k + 1)] = -a.re;
        }
    }

    let mut h_soc = DVector::zeros(soc_dim);
    h_soc[0] = problem.delta;
    for i in 0..m {
        h_soc[1 + i] = -problem.y[i].re;
        h_soc[1 + m + i] = -problem.y[i].im;
    }

    let program = ConeProgram {
        num_vars,
        c,
        hermitian: vec![HermitianBlock {
            dim: n,
            h: DMatrix::zeros(n, n),
            columns,
        }],
        soc: vec![SocBlock {
            dim: soc_dim,
            h: h_soc,
            vars: soc_vars,
            g,
        }],
    };
    AssembledProgram { program, p, m }
}

/// Optimal dual vector and dual polynomial.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub c_star: DVector<Complex64>,
    /// `G^H c_star`, recomputed from `c_star`.
    pub h_star: DVector<Complex64>,
    /// Trace-parameterization matrix `H` from the PSD block.
    pub h_matrix: DMatrix<Complex64>,
    /// `Re{c^H y} - delta ||c||` at `c_star`.
    pub objective: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub solve_seconds: f64,
    pub message: String,
}

impl DualSolution {
    /// `b(e^{j theta}) = sum_k h_k e^{jk theta}`.
    pub fn dual_polynomial(&self, theta: f64) -> Complex64 {
        eval_trig_poly(&self.h_star, theta)
    }
}

/// Solves with the built-in interior-point method.
pub fn solve(problem: &DualProblem<'_>, tol: f64) -> Result<DualSolution> {
    let solver = InteriorPoint::new(SolverOptions {
        tol,
        ..SolverOptions::default()
    });
    solve_with(problem, &solver)
}

/// Solves with any cone-program back end.
pub fn solve_with(problem: &DualProblem<'_>, solver: &dyn ConicSolver) -> Result<DualSolution> {
    let y = problem.y;
    // Nothing to explain: c = 0 is optimal with objective 0.
    if y.iter().all(|v| v.norm() == 0.0) && problem.delta > 0.0 {
        let p = problem.p();
        let mut h_matrix = DMatrix::zeros(p, p);
        for i in 0..p {
            h_matrix[(i, i)] = Complex64::new(1.0 / p as f64, 0.0);
        }
        return Ok(DualSolution {
            c_star: DVector::zeros(problem.m()),
            h_star: DVector::zeros(p),
            h_matrix,
            objective: 0.0,
            status: SolverStatus::Optimal,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
            solve_seconds: 0.0,
            message: "zero snapshot".into(),
        });
    }

    let start = Instant::now();
    let assembled = assemble(problem);
    let sol = solver.solve(&assembled.program)?;
    let elapsed = start.elapsed().as_secs_f64();
    log::debug!(
        "dual SDP P={} M={}: {:?} after {} iterations in {:.3}s",
        problem.p(),
        problem.m(),
        sol.status,
        sol.iterations,
        elapsed
    );
    if sol.status == SolverStatus::Failed {
        return Err(DoaError::Solver(format!(
            "{} (iterations {}, primal residual {:.2e}, dual residual {:.2e}, gap {:.2e})",
            sol.message, sol.iterations, sol.primal_residual, sol.dual_residual, sol.gap
        )));
    }
    let c_star = assembled.split(&sol.z_soc[0]);
    let h_star = problem.g_hermitian * &c_star;
    let p = problem.p();
    let h_matrix = sol.z_hermitian[0].view((0, 0), (p, p)).into_owned();
    let objective = c_star.dotc(y).re - problem.delta * c_star.norm();
    Ok(DualSolution {
        c_star,
        h_star,
        h_matrix,
        objective,
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
        solve_seconds: elapsed,
        message: sol.message,
    })
}

/// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]` of a complex matrix.
pub fn embed_real(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// Largest deviation of `H` from the trace constraints.
pub fn trace_residual(h: &DMatrix<Complex64>) -> f64 {
    let p = h.nrows();
    (0..p)
        .map(|j| {
            let s: Complex64 = (0..p - j).map(|i| h[(i, i + j)]).sum();
            let target = if j == 0 { 1.0 } else { 0.0 };
            (s - Complex64::new(target, 0.0)).norm()
        })
        .fold(0.0, f64::max)
}

/// Bordered matrix `[[H, h], [h^H, 1]]`.
pub fn bordered(h_matrix: &DMatrix<Complex64>, h: &DVector<Complex64>) -> DMatrix<Complex64> {
    let p = h_matrix.nrows();
    let mut b = DMatrix::zeros(p + 1, p + 1);
    b.view_mut((0, 0), (p, p)).copy_from(h_matrix);
    for i in 0..p {
        b[(i, p)] = h[i];
        b[(p, i)] = h[i].conj();
    }
    b[(p, p)] = Complex64::new(1.0, 0.0);
    b
}
