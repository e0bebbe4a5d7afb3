//! Primal-dual interior-point method for linear cone programs over products
//! of Hermitian positive semidefinite cones and second-order cones.
//!
//! The program is held in inequality form
//!
//! ```text
//! minimize    c^T x
//! subject to  G x + s = h,   s in K
//! ```
//!
//! with dual
//!
//! ```text
//! maximize    -<h, z>
//! subject to  G^T z + c = 0,   z in K.
//! ```
//!
//! Iterates use Nesterov-Todd scaling with Mehrotra predictor-corrector
//! steps and an infeasible start. A real symmetric PSD block is a Hermitian
//! block with real data, so one cone type covers both.

use crate::error::{DoaError, Result};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Sparse Hermitian matrix given by its upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseHermitian {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Adds `value` at `(row, col)` and its conjugate at `(col, row)`.
    /// Diagonal entries keep only the real part.
    pub fn push(&mut self, row: usize, col: usize, value: Complex64) {
        assert!(row < self.dim && col < self.dim, "entry out of range");
        let (r, c, v) = if row <= col {
            (row, col, value)
        } else {
            (col, row, value.conj())
        };
        let v = if r == c { Complex64::new(v.re, 0.0) } else { v };
        self.entries.push((r, c, v));
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    /// `Re tr(A Z)` for Hermitian `Z`.
    pub fn inner(&self, z: &DMatrix<Complex64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, a)| {
                if i == j {
                    a.re * z[(i, i)].re
                } else {
                    2.0 * (a.conj() * z[(i, j)]).re
                }
            })
            .sum()
    }

    /// `out += alpha * A`.
    pub fn add_scaled_to(&self, alpha: f64, out: &mut DMatrix<Complex64>) {
        for &(i, j, a) in &self.entries {
            out[(i, j)] += a * alpha;
            if i != j {
                out[(j, i)] += a.conj() * alpha;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.add_scaled_to(1.0, &mut m);
        m
    }
}

/// Hermitian PSD block: `h - sum_k x_k A_k` must be PSD.
#[derive(Debug, Clone)]
pub struct HermitianBlock {
    pub dim: usize,
    pub h: DMatrix<Complex64>,
    /// `(variable index, A_k)` pairs.
    pub columns: Vec<(usize, SparseHermitian)>,
}

/// Second-order cone block: `h - g x[vars]` must lie in `{ u : u_0 >= ||u_1..|| }`.
#[derive(Debug, Clone)]
pub struct SocBlock {
    pub dim: usize,
    pub h: DVector<f64>,
    pub vars: Vec<usize>,
    pub g: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub num_vars: usize,
    pub c: DVector<f64>,
    pub hermitian: Vec<HermitianBlock>,
    pub soc: Vec<SocBlock>,
}

impl ConeProgram {
    pub fn validate(&self) -> Result<()> {
        if self.c.len() != self.num_vars {
            return Err(DoaError::DimensionMismatch(
                "objective length differs from variable count".into(),
            ));
        }
        for b in &self.hermitian {
            if b.h.nrows() != b.dim || b.h.ncols() != b.dim {
                return Err(DoaError::DimensionMismatch(
                    "PSD offset has wrong shape".into(),
                ));
            }
            for (v, a) in &b.columns {
                if *v >= self.num_vars || a.dim() != b.dim {
                    return Err(DoaError::DimensionMismatch(
                        "PSD column out of range".into(),
                    ));
                }
            }
        }
        for b in &self.soc {
            if b.dim == 0
                || b.h.len() != b.dim
                || b.g.nrows() != b.dim
                || b.g.ncols() != b.vars.len()
            {
                return Err(DoaError::DimensionMismatch(
                    "SOC block has inconsistent shape".into(),
                ));
            }
            if b.vars.iter().any(|&v| v >= self.num_vars) {
                return Err(DoaError::DimensionMismatch(
                    "SOC variable out of range".into(),
                ));
            }
        }
        Ok(())
    }

    /// Barrier degree of the cone.
    pub fn degree(&self) -> usize {
        self.hermitian.iter().map(|b| b.dim).sum::<usize>() + self.soc.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    NearOptimal,
    Failed,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative KKT tolerance: primal/dual residuals and relative gap.
    pub tol: f64,
    /// Residual level below which an unfinished solve is reported as near optimal.
    pub near_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tol: 1e-8,
            near_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: SolverStatus,
    pub x: DVector<f64>,
    pub s_hermitian: Vec<DMatrix<Complex64>>,
    pub z_hermitian: Vec<DMatrix<Complex64>>,
    pub s_soc: Vec<DVector<f64>>,
    pub z_soc: Vec<DVector<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub message: String,
}

/// Interchangeable back end for cone programs.
pub trait ConicSolver {
    fn solve(&self, program: &ConeProgram) -> Result<ConeSolution>;
}

/// The built-in primal-dual interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint {
    pub options: SolverOptions,
}

impl InteriorPoint {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }
}

impl ConicSolver for InteriorPoint {
    fn solve(&self, program: &ConeProgram) -> Result<ConeSolution> {
        program.validate()?;
        Engine::new(program, self.options).run()
    }
}

// ---------------------------------------------------------------------------
// Cone-wise vectors

#[derive(Debug, Clone)]
struct ConeVec {
    herm: Vec<DMatrix<Complex64>>,
    soc: Vec<DVector<f64>>,
}

impl ConeVec {
    fn zeros(p: &ConeProgram) -> Self {
        Self {
            herm: p
                .hermitian
                .iter()
                .map(|b| DMatrix::zeros(b.dim, b.dim))
                .collect(),
            soc: p.soc.iter().map(|b| DVector::zeros(b.dim)).collect(),
        }
    }

    fn identity(p: &ConeProgram) -> Self {
        Self {
            herm: p
                .hermitian
                .iter()
                .map(|b| DMatrix::identity(b.dim, b.dim))
                .collect(),
            soc: p
                .soc
                .iter()
                .map(|b| {
                    let mut e = DVector::zeros(b.dim);
                    e[0] = 1.0;
                    e
                })
                .collect(),
        }
    }

    fn offset(p: &ConeProgram) -> Self {
        Self {
            herm: p.hermitian.iter().map(|b| b.h.clone()).collect(),
            soc: p.soc.iter().map(|b| b.h.clone()).collect(),
        }
    }

    fn dot(&self, other: &ConeVec) -> f64 {
        let h: f64 = self
            .herm
            .iter()
            .zip(&other.herm)
            .map(|(a, b)| herm_inner(a, b))
            .sum();
        let q: f64 = self.soc.iter().zip(&other.soc).map(|(a, b)| a.dot(b)).sum();
        h + q
    }

    fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    fn axpy(&mut self, alpha: f64, other: &ConeVec) {
        for (a, b) in self.herm.iter_mut().zip(&other.herm) {
            *a += b * Complex64::new(alpha, 0.0);
        }
        for (a, b) in self.soc.iter_mut().zip(&other.soc) {
            a.axpy(alpha, b, 1.0);
        }
    }

    fn symmetrize(&mut self) {
        for a in self.herm.iter_mut() {
            hermitianize(a);
        }
    }
}

fn herm_inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn hermitianize(a: &mut DMatrix<Complex64>) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)].im = 0.0;
        for i in 0..j {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

fn min_eigenvalue(a: &DMatrix<Complex64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling

struct HermScaling {
    /// `W z = r^H z r`, `W^H u = r u r^H`.
    r: DMatrix<Complex64>,
    /// `r^{-1}`: `W^{-1} u = q^H u q`, `W^{-H} u = q u q^H`.
    q: DMatrix<Complex64>,
    /// `q^H q`.
    v: DMatrix<Complex64>,
    lambda: DVector<f64>,
}

impl HermScaling {
    fn compute(s: &DMatrix<Complex64>, z: &DMatrix<Complex64>) -> Option<Self> {
        let ls = Cholesky::new(s.clone())?.unpack();
        let lz = Cholesky::new(z.clone())?.unpack();
        let prod = lz.adjoint() * &ls;
        let svd = prod.svd(true, true);
        let u = svd.u?;
        let vt = svd.v_t?;
        let lambda = svd.singular_values;
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return None;
        }
        let n = s.nrows();
        let isq = DVector::from_iterator(n, lambda.iter().map(|l| 1.0 / l.sqrt()));
        let mut r = ls * vt.adjoint();
        for j in 0..n {
            r.column_mut(j).scale_mut(isq[j]);
        }
        let mut q = u.adjoint() * lz.adjoint();
        for i in 0..n {
            q.row_mut(i).scale_mut(isq[i]);
        }
        let v = q.adjoint() * &q;
        Some(Self { r, q, v, lambda })
    }

    fn identity(n: usize) -> Self {
        Self {
            r: DMatrix::identity(n, n),
            q: DMatrix::identity(n, n),
            v: DMatrix::identity(n, n),
            lambda: DVector::from_element(n, 1.0),
        }
    }

    /// `W^{-H} u`.
    fn scale_primal(&self, u: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        &self.q * u * self.q.adjoint()
    }

    /// `W^{-1} u = q^H u q`.
    fn unscale_dual(&self, u: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        self.q.adjoint() * u * &self.q
    }

    /// `W^H u = r u r^H`.
    fn unscale_primal(&self, u: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        &self.r * u * self.r.adjoint()
    }
}

struct SocScaling {
    beta: f64,
    /// Hyperbolic unit vector, `v^T J v = 1`.
    v: DVector<f64>,
    lambda: DVector<f64>,
}

fn jnorm(u: &DVector<f64>) -> Option<f64> {
    let rest = u.rows(1, u.len() - 1).norm();
    let d = (u[0] - rest) * (u[0] + rest);
    if u[0] > 0.0 && d > 0.0 {
        Some(d.sqrt())
    } else {
        None
    }
}

fn jflip(u: &DVector<f64>) -> DVector<f64> {
    let mut out = -u;
    out[0] = u[0];
    out
}

impl SocScaling {
    fn compute(s: &DVector<f64>, z: &DVector<f64>) -> Option<Self> {
        let a = jnorm(s)?;
        let b = jnorm(z)?;
        let sb = s / a;
        let zb = z / b;
        let gamma = ((1.0 + sb.dot(&zb)) / 2.0).sqrt();
        let mut w = (&sb + jflip(&zb)) / (2.0 * gamma);
        w[0] += 1.0;
        let v = &w / (2.0 * w[0]).sqrt();
        let mut sc = Self {
            beta: (a / b).sqrt(),
            v,
            lambda: DVector::zeros(s.len()),
        };
        sc.lambda = sc.apply(z);
        Some(sc)
    }

    fn identity(dim: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[0] = 1.0;
        let mut lambda = DVector::zeros(dim);
        lambda[0] = 1.0;
        Self {
            beta: 1.0,
            v,
            lambda,
        }
    }

    /// `W u = beta (2 v v^T - J) u`.
    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.v * (2.0 * self.v.dot(u)) - jflip(u);
        out *= self.beta;
        out
    }

    /// `W^{-1} u = (2 J v v^T J - J) u / beta`.
    fn apply_inv(&self, u: &DVector<f64>) -> DVector<f64> {
        let jv = jflip(&self.v);
        let mut out = &jv * (2.0 * jv.dot(u)) - jflip(u);
        out /= self.beta;
        out
    }
}

// Jordan algebra helpers in the scaled space.

fn soc_prod(u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = v * u[0] + u * v[0];
    out[0] = u.dot(v);
    out
}

/// Solves `lambda o u = r` for `u`.
fn soc_div(lambda: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    let n = lambda.len();
    let l0 = lambda[0];
    let l1 = lambda.rows(1, n - 1);
    let r1 = r.rows(1, n - 1);
    let det = l0 * l0 - l1.norm_squared();
    let u0 = (l0 * r[0] - l1.dot(&r1)) / det;
    let mut out = DVector::zeros(n);
    out[0] = u0;
    for i in 1..n {
        out[i] = (r[i] - u0 * lambda[i]) / l0;
    }
    out
}

fn herm_prod(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let ab = a * b;
    (&ab + ab.adjoint()) * Complex64::new(0.5, 0.0)
}

fn diag_prod(lambda: &DVector<f64>, u: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| {
        u[(i, j)] * (0.5 * (lambda[i] + lambda[j]))
    })
}

fn diag_div(lambda: &DVector<f64>, r: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| {
        r[(i, j)] * (2.0 / (lambda[i] + lambda[j]))
    })
}

/// Largest step `alpha` with `Lambda + alpha D` PSD (infinite if unbounded).
fn herm_max_step(lambda: &DVector<f64>, d: &DMatrix<Complex64>) -> f64 {
    let n = lambda.len();
    let m = DMatrix::from_fn(n, n, |i, j| d[(i, j)] / (lambda[i] * lambda[j]).sqrt());
    let rho = min_eigenvalue(&m);
    if rho >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / rho
    }
}

/// Largest step `alpha` with `lambda + alpha u` in the second-order cone.
fn soc_max_step(lambda: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let n = lambda.len();
    let (l1, u1) = (lambda.rows(1, n - 1), u.rows(1, n - 1));
    let a = u[0] * u[0] - u1.norm_squared();
    let b = 2.0 * (lambda[0] * u[0] - l1.dot(&u1));
    let c = lambda[0] * lambda[0] - l1.norm_squared();
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() <= 1e-14 * scale {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let qv = -0.5 * (b + b.signum() * disc.sqrt());
    let mut best = f64::INFINITY;
    for root in [qv / a, if qv != 0.0 { c / qv } else { f64::INFINITY }] {
        if root > 0.0 && root < best {
            best = root;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Engine

struct Scaling {
    herm: Vec<HermScaling>,
    soc: Vec<SocScaling>,
}

impl Scaling {
    fn lambda(&self) -> ConeVec {
        ConeVec {
            herm: self
                .herm
                .iter()
                .map(|h| DMatrix::from_diagonal(&h.lambda.map(|l| Complex64::new(l, 0.0))))
                .collect(),
            soc: self.soc.iter().map(|s| s.lambda.clone()).collect(),
        }
    }
}

struct Direction {
    dx: DVector<f64>,
    ds_scaled: ConeVec,
    dz_scaled: ConeVec,
}

struct Engine<'a> {
    p: &'a ConeProgram,
    opts: SolverOptions,
}

impl<'a> Engine<'a> {
    fn new(p: &'a ConeProgram, opts: SolverOptions) -> Self {
        Self { p, opts }
    }

    /// `G x` as a cone vector.
    fn apply_g(&self, x: &DVector<f64>) -> ConeVec {
        let mut out = ConeVec::zeros(self.p);
        for (b, o) in self.p.hermitian.iter().zip(out.herm.iter_mut()) {
            for (v, a) in &b.columns {
                if x[*v] != 0.0 {
                    a.add_scaled_to(x[*v], o);
                }
            }
        }
        for (b, o) in self.p.soc.iter().zip(out.soc.iter_mut()) {
            let xs = DVector::from_iterator(b.vars.len(), b.vars.iter().map(|&v| x[v]));
            *o = &b.g * xs;
        }
        out
    }

    /// `G^T z`.
    fn apply_gt(&self, z: &ConeVec) -> DVector<f64> {
        let mut out = DVector::zeros(self.p.num_vars);
        for (b, zb) in self.p.hermitian.iter().zip(&z.herm) {
            for (v, a) in &b.columns {
                out[*v] += a.inner(zb);
            }
        }
        for (b, zb) in self.p.soc.iter().zip(&z.soc) {
            let g = b.g.transpose() * zb;
            for (i, &v) in b.vars.iter().enumerate() {
                out[v] += g[i];
            }
        }
        out
    }

    /// `W^{-H} u` blockwise.
    fn scale_primal(&self, w: &Scaling, u: &ConeVec) -> ConeVec {
        ConeVec {
            herm: w
                .herm
                .iter()
                .zip(&u.herm)
                .map(|(s, m)| s.scale_primal(m))
                .collect(),
            soc: w
                .soc
                .iter()
                .zip(&u.soc)
                .map(|(s, v)| s.apply_inv(v))
                .collect(),
        }
    }

    /// Scaled constraint operator `Ghat x = W^{-H} G x`.
    fn apply_ghat(&self, w: &Scaling, x: &DVector<f64>) -> ConeVec {
        self.scale_primal(w, &self.apply_g(x))
    }

    /// `Ghat^T u = G^T W^{-1} u`.
    fn apply_ghat_t(&self, w: &Scaling, u: &ConeVec) -> DVector<f64> {
        let unscaled = ConeVec {
            herm: w
                .herm
                .iter()
                .zip(&u.herm)
                .map(|(s, m)| s.unscale_dual(m))
                .collect(),
            soc: w
                .soc
                .iter()
                .zip(&u.soc)
                .map(|(s, v)| s.apply_inv(v))
                .collect(),
        };
        self.apply_gt(&unscaled)
    }

    /// Schur complement `Ghat^T Ghat`.
    fn schur(&self, w: &Scaling) -> DMatrix<f64> {
        let nv = self.p.num_vars;
        let mut k = DMatrix::zeros(nv, nv);
        for (b, sc) in self.p.hermitian.iter().zip(&w.herm) {
            let n = b.dim;
            let v = &sc.v;
            let mut half = DMatrix::<Complex64>::zeros(n, n);
            for (ci, (vk, ak)) in b.columns.iter().enumerate() {
                // V A_k V = K + K^H with K = sum over upper entries
                half.fill(Complex64::new(0.0, 0.0));
                for &(i, j, a) in ak.entries() {
                    let coef = if i == j { a * 0.5 } else { a };
                    let vi = v.column(i);
                    for col in 0..n {
                        let wgt = coef * v[(j, col)];
                        if wgt == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut dst = half.column_mut(col);
                        for row in 0..n {
                            dst[row] += vi[row] * wgt;
                        }
                    }
                }
                let mk = &half + half.adjoint();
                for (vl, al) in &b.columns[ci..] {
                    let val = al.inner(&mk);
                    k[(*vk, *vl)] += val;
                    if vk != vl {
                        k[(*vl, *vk)] += val;
                    }
                }
            }
        }
        for (b, sc) in self.p.soc.iter().zip(&w.soc) {
            let mut gh = b.g.clone();
            for j in 0..gh.ncols() {
                let col = sc.apply_inv(&gh.column(j).into_owned());
                gh.set_column(j, &col);
            }
            let kk = gh.transpose() * &gh;
            for (i, &vi) in b.vars.iter().enumerate() {
                for (j, &vj) in b.vars.iter().enumerate() {
                    k[(vi, vj)] += kk[(i, j)];
                }
            }
        }
        k
    }

    fn initial_point(&self, chol: &SchurFactor) -> (DVector<f64>, ConeVec, ConeVec) {
        let h = ConeVec::offset(self.p);
        let x = chol.solve(&self.apply_gt(&h));
        let gx = self.apply_g(&x);
        let mut s = h.clone();
        s.axpy(-1.0, &gx);
        let w = chol.solve(&(-&self.p.c));
        let mut z = self.apply_g(&w);
        shift_into_cone(self.p, &mut s);
        shift_into_cone(self.p, &mut z);
        (x, s, z)
    }

    fn solve_newton(
        &self,
        w: &Scaling,
        chol: &SchurFactor,
        rp: &ConeVec,
        rd: &DVector<f64>,
        d: &ConeVec,
    ) -> Direction {
        // Ghat^T Ghat dx = -rd - Ghat^T (d + W^{-H} rp)
        let mut t = self.scale_primal(w, rp);
        t.axpy(1.0, d);
        let rhs = -rd - self.apply_ghat_t(w, &t);
        let dx = chol.solve(&rhs);
        let mut dz_scaled = self.apply_ghat(w, &dx);
        dz_scaled.axpy(1.0, &t);
        let mut ds_scaled = d.clone();
        ds_scaled.axpy(-1.0, &dz_scaled);
        Direction {
            dx,
            ds_scaled,
            dz_scaled,
        }
    }

    fn run(&self) -> Result<ConeSolution> {
        let p = self.p;
        let nu = p.degree() as f64;
        let h = ConeVec::offset(p);
        let hnorm = h.norm().max(1.0);
        let cnorm = p.c.norm().max(1.0);

        let ident = Scaling {
            herm: p
                .hermitian
                .iter()
                .map(|b| HermScaling::identity(b.dim))
                .collect(),
            soc: p.soc.iter().map(|b| SocScaling::identity(b.dim)).collect(),
        };
        let k0 = SchurFactor::new(self.schur(&ident))
            .ok_or_else(|| DoaError::Solver("constraint operator is rank deficient".into()))?;
        let (mut x, mut s, mut z) = self.initial_point(&k0);

        let mut iterations = 0;
        let mut message = String::from("iteration limit reached");
        let mut converged = false;
        let mut last = Residuals::default();

        for it in 0..=self.opts.max_iterations {
            iterations = it;
            let mut rp = self.apply_g(&x);
            rp.axpy(1.0, &s);
            rp.axpy(-1.0, &h);
            let rd = self.apply_gt(&z) + &p.c;
            let pcost = p.c.dot(&x);
            let dcost = -h.dot(&z);
            let gap = s.dot(&z);
            let relgap = if pcost < 0.0 {
                gap / -pcost
            } else if dcost > 0.0 {
                gap / dcost
            } else {
                f64::INFINITY
            };
            last = Residuals {
                pres: rp.norm() / hnorm,
                dres: rd.norm() / cnorm,
                gap,
                relgap,
                pcost,
                dcost,
            };
            log::debug!(
                "ipm {it:3}: pcost {pcost:+.9e} dcost {dcost:+.9e} gap {gap:.2e} pres {:.2e} dres {:.2e}",
                last.pres,
                last.dres
            );
            if last.pres <= self.opts.tol
                && last.dres <= self.opts.tol
                && (gap <= self.opts.tol * 1e-1 || relgap <= self.opts.tol)
            {
                converged = true;
                message = "converged".into();
                break;
            }
            if it == self.opts.max_iterations {
                break;
            }

            let w = match compute_scaling(p, &s, &z) {
                Some(w) => w,
                None => {
                    message = "lost cone interior while scaling".into();
                    break;
                }
            };
            let chol = match SchurFactor::new(self.schur(&w)) {
                Some(c) => c,
                None => {
                    message = "Schur complement factorization failed".into();
                    break;
                }
            };
            let lambda = w.lambda();
            let mu = gap / nu;

            // predictor
            let mut d_aff = lambda.clone();
            d_aff.axpy(-2.0, &lambda);
            let aff = self.solve_newton(&w, &chol, &rp, &rd, &d_aff);
            let a_aff = max_step(&w, &aff.ds_scaled)
                .min(max_step(&w, &aff.dz_scaled))
                .min(1.0);
            let mut ls = lambda.clone();
            ls.axpy(a_aff, &aff.ds_scaled);
            let mut lz = lambda.clone();
            lz.axpy(a_aff, &aff.dz_scaled);
            let sigma = (ls.dot(&lz).max(0.0) / gap).powi(3).clamp(0.0, 1.0);

            // corrector
            let d = combined_rhs(&w, &aff, sigma * mu);
            let dir = self.solve_newton(&w, &chol, &rp, &rd, &d);
            let a_max = max_step(&w, &dir.ds_scaled).min(max_step(&w, &dir.dz_scaled));
            let alpha = (0.99 * a_max).min(1.0);
            if !(alpha > 1e-12) {
                message = "step length collapsed".into();
                break;
            }

            x.axpy(alpha, &dir.dx, 1.0);
            let ds = ConeVec {
                herm: w
                    .herm
                    .iter()
                    .zip(&dir.ds_scaled.herm)
                    .map(|(sc, m)| sc.unscale_primal(m))
                    .collect(),
                soc: w
                    .soc
                    .iter()
                    .zip(&dir.ds_scaled.soc)
                    .map(|(sc, v)| sc.apply(v))
                    .collect(),
            };
            let dz = ConeVec {
                herm: w
                    .herm
                    .iter()
                    .zip(&dir.dz_scaled.herm)
                    .map(|(sc, m)| sc.unscale_dual(m))
                    .collect(),
                soc: w
                    .soc
                    .iter()
                    .zip(&dir.dz_scaled.soc)
                    .map(|(sc, v)| sc.apply_inv(v))
                    .collect(),
            };
            s.axpy(alpha, &ds);
            z.axpy(alpha, &dz);
            s.symmetrize();
            z.symmetrize();
        }

        let status = if converged {
            SolverStatus::Optimal
        } else if last.pres <= self.opts.near_tol
            && last.dres <= self.opts.near_tol
            && (last.relgap <= self.opts.near_tol || last.gap <= self.opts.near_tol)
        {
            SolverStatus::NearOptimal
        } else {
            SolverStatus::Failed
        };
        Ok(ConeSolution {
            status,
            x,
            s_hermitian: s.herm,
            z_hermitian: z.herm,
            s_soc: s.soc,
            z_soc: z.soc,
            primal_objective: last.pcost,
            dual_objective: last.dcost,
            iterations,
            primal_residual: last.pres,
            dual_residual: last.dres,
            gap: last.gap,
            message,
        })
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Residuals {
    pres: f64,
    dres: f64,
    gap: f64,
    relgap: f64,
    pcost: f64,
    dcost: f64,
}

fn compute_scaling(p: &ConeProgram, s: &ConeVec, z: &ConeVec) -> Option<Scaling> {
    let herm = s
        .herm
        .iter()
        .zip(&z.herm)
        .map(|(sb, zb)| HermScaling::compute(sb, zb))
        .collect::<Option<Vec<_>>>()?;
    let soc = s
        .soc
        .iter()
        .zip(&z.soc)
        .map(|(sb, zb)| SocScaling::compute(sb, zb))
        .collect::<Option<Vec<_>>>()?;
    debug_assert_eq!(herm.len(), p.hermitian.len());
    Some(Scaling { herm, soc })
}

/// `lambda^{-1} o (-lambda o lambda - ds_a o dz_a + sigma_mu e)`.
fn combined_rhs(w: &Scaling, aff: &Direction, sigma_mu: f64) -> ConeVec {
    let herm = w
        .herm
        .iter()
        .zip(aff.ds_scaled.herm.iter().zip(&aff.dz_scaled.herm))
        .map(|(sc, (ds, dz))| {
            let lam = DMatrix::from_diagonal(&sc.lambda.map(|l| Complex64::new(l, 0.0)));
            let mut r = -diag_prod(&sc.lambda, &lam) - herm_prod(ds, dz);
            for i in 0..r.nrows() {
                r[(i, i)] += sigma_mu;
            }
            diag_div(&sc.lambda, &r)
        })
        .collect();
    let soc = w
        .soc
        .iter()
        .zip(aff.ds_scaled.soc.iter().zip(&aff.dz_scaled.soc))
        .map(|(sc, (ds, dz))| {
            let mut r = -soc_prod(&sc.lambda, &sc.lambda) - soc_prod(ds, dz);
            r[0] += sigma_mu;
            soc_div(&sc.lambda, &r)
        })
        .collect();
    ConeVec { herm, soc }
}

fn max_step(w: &Scaling, d: &ConeVec) -> f64 {
    let h = w
        .herm
        .iter()
        .zip(&d.herm)
        .map(|(sc, m)| herm_max_step(&sc.lambda, m))
        .fold(f64::INFINITY, f64::min);
    let q = w
        .soc
        .iter()
        .zip(&d.soc)
        .map(|(sc, u)| soc_max_step(&sc.lambda, u))
        .fold(f64::INFINITY, f64::min);
    h.min(q)
}

/// Moves `u` strictly inside the cone by adding a multiple of the identity.
fn shift_into_cone(p: &ConeProgram, u: &mut ConeVec) {
    let mut t = f64::NEG_INFINITY;
    for m in &u.herm {
        t = t.max(-min_eigenvalue(m));
    }
    for v in &u.soc {
        t = t.max(v.rows(1, v.len() - 1).norm() - v[0]);
    }
    let scale = u.norm().max(1.0);
    if t >= -1e-8 * scale {
        let e = ConeVec::identity(p);
        u.axpy(1.0 + t, &e);
    }
}

/// Cholesky of the Schur complement with diagonal regularization fallback.
struct SchurFactor {
    k: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl SchurFactor {
    fn new(k: DMatrix<f64>) -> Option<Self> {
        let n = k.nrows();
        let dmax = (0..n)
            .map(|i| k[(i, i)].abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        let mut reg = 0.0;
        for _ in 0..6 {
            let mut kr = k.clone();
            for i in 0..n {
                kr[(i, i)] += reg;
            }
            if let Some(chol) = Cholesky::new(kr) {
                return Some(Self { k, chol });
            }
            reg = if reg == 0.0 {
                1e-14 * dmax
            } else {
                reg * 100.0
            };
        }
        None
    }

    /// Solve with one step of iterative refinement against the unregularized matrix.
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(b);
        let r = b - &self.k * &x;
        x += self.chol.solve(&r);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn soc_scaling_is_nesterov_todd() {
        let s = DVector::from_vec(vec![3.0, 1.0, -0.5, 0.2]);
        let z = DVector::from_vec(vec![2.0, -0.3, 0.8, 0.1]);
        let w = SocScaling::compute(&s, &z).unwrap();
        let lz = w.apply(&z);
        let ls = w.apply_inv(&s);
        assert!((lz - ls).norm() < 1e-12);
        let u = DVector::from_vec(vec![0.3, 0.1, -0.7, 0.4]);
        assert!((w.apply_inv(&w.apply(&u)) - u).norm() < 1e-12);
    }

    #[test]
    fn herm_scaling_is_nesterov_todd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rand_pd = |n: usize| {
            let a = DMatrix::from_fn(n, n, |_, _| {
                c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            &a * a.adjoint() + DMatrix::identity(n, n) * c(0.1, 0.0)
        };
        let s = rand_pd(5);
        let z = rand_pd(5);
        let w = HermScaling::compute(&s, &z).unwrap();
        let lam = DMatrix::from_diagonal(&w.lambda.map(|l| c(l, 0.0)));
        let wz = w.r.adjoint() * &z * &w.r;
        assert!((wz - &lam).norm() < 1e-10);
        assert!((w.scale_primal(&s) - &lam).norm() < 1e-10);
        assert!((&w.q * &w.r - DMatrix::<Complex64>::identity(5, 5)).norm() < 1e-10);
    }

    #[test]
    fn soc_step_and_division() {
        let l = DVector::from_vec(vec![2.0, 0.5, 0.5]);
        let r = DVector::from_vec(vec![1.0, -0.2, 0.3]);
        let u = soc_div(&l, &r);
        assert!((soc_prod(&l, &u) - r).norm() < 1e-12);
        // moving towards -e leaves the cone at alpha with 2 - a = |(0.5,0.5)|
        let d = DVector::from_vec(vec![-1.0, 0.0, 0.0]);
        let a = soc_max_step(&l, &d);
        assert!((a - (2.0 - 0.5f64.hypot(0.5))).abs() < 1e-12);
        let d = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(soc_max_step(&l, &d).is_infinite());
    }

    #[test]
    fn socp_unit_disk() {
        // minimize x0 + x1 subject to ||(x0, x1)|| <= 1
        let prog = ConeProgram {
            num_vars: 2,
            c: DVector::from_vec(vec![1.0, 1.0]),
            hermitian: vec![],
            soc: vec![SocBlock {
                dim: 3,
                h: DVector::from_vec(vec![1.0, 0.0, 0.0]),
                vars: vec![0, 1],
                g: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, -1.0, 0.0, 0.0, -1.0]),
            }],
        };
        let sol = InteriorPoint::default().solve(&prog).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        let r = -std::f64::consts::FRAC_1_SQRT_2;
        assert!((sol.x[0] - r).abs() < 1e-7 && (sol.x[1] - r).abs() < 1e-7);
        assert!((sol.primal_objective + 2f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn hermitian_max_eigenvalue() {
        // minimize t subject to t I - A >= 0
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let b = DMatrix::from_fn(n, n, |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let a = (&b + b.adjoint()) * c(0.5, 0.0);
        let mut ident = SparseHermitian::new(n);
        for i in 0..n {
            ident.push(i, i, c(-1.0, 0.0));
        }
        let prog = ConeProgram {
            num_vars: 1,
            c: DVector::from_vec(vec![1.0]),
            hermitian: vec![HermitianBlock {
                dim: n,
                h: -a.clone(),
                columns: vec![(0, ident)],
            }],
            soc: vec![],
        };
        let sol = InteriorPoint::default().solve(&prog).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        let lmax = SymmetricEigen::new(a)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((sol.x[0] - lmax).abs() < 1e-7, "{} vs {}", sol.x[0], lmax);
        // dual is a unit-trace PSD matrix
        let tr: f64 = (0..n).map(|i| sol.z_hermitian[0][(i, i)].re).sum();
        assert!((tr - 1.0).abs() < 1e-7);
    }

    #[test]
    fn sparse_hermitian_inner_matches_dense() {
        let mut a = SparseHermitian::new(3);
        a.push(0, 1, c(0.5, -0.25));
        a.push(2, 2, c(2.0, 0.0));
        a.push(2, 0, c(1.0, 1.0));
        let z = DMatrix::from_fn(3, 3, |i, j| {
            let v = c((i + 2 * j) as f64, (i as f64) - (j as f64));
            if i == j {
                c(v.re, 0.0)
            } else {
                v
            }
        });
        let mut zh = z.clone();
        hermitianize(&mut zh);
        let dense = a.to_dense();
        let expect = (dense * &zh).trace().re;
        assert!((a.inner(&zh) - expect).abs() < 1e-12);
    }
}
