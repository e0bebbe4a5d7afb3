//! Nonnegative polynomial `p(z) = 1 - |b(z)|^2` and its unit-circle roots.

use crate::angle::{circ_dist_rad, wrap_rad};
use crate::error::{DoaError, Result};
use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Root distance from the unit circle accepted as a DOA candidate.
pub const DEFAULT_CIRCLE_TOL: f64 = 0.02;
/// Angular radius (degrees) within which candidate angles are merged.
pub const DEFAULT_CLUSTER_TOL_DEG: f64 = 0.5;
/// Relative size below which leading/trailing coefficients are dropped.
const TRIM_REL: f64 = 1e-12;
/// Grid minimum of `p` below which the solver tolerance is suspected.
pub const NEGATIVITY_WARN: f64 = -1e-7;

/// Autocorrelation `r_k = sum_j h_j conj(h_{j-k})` for k = -(P-1)..=(P-1).
pub fn autocorrelation(h: &[Complex64]) -> Vec<Complex64> {
    let p = h.len();
    if p == 0 {
        return Vec::new();
    }
    let mut r = vec![Complex64::new(0.0, 0.0); 2 * p - 1];
    for k in -(p as i64 - 1)..=(p as i64 - 1) {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..p as i64 {
            let l = j - k;
            if (0..p as i64).contains(&l) {
                acc += h[j as usize] * h[l as usize].conj();
            }
        }
        r[(k + p as i64 - 1) as usize] = acc;
    }
    r
}

/// `1 - |b(z)|^2` as a Laurent polynomial, also usable as the ordinary
/// polynomial `z^(P-1) p(z)` of degree `2P - 2`.
#[derive(Debug, Clone)]
pub struct NonnegPolynomial {
    /// Coefficients of `z^k`, k = -(P-1)..=(P-1).
    coeffs: Vec<Complex64>,
    degenerate: bool,
}

impl NonnegPolynomial {
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// True when every coefficient vanishes, i.e. `|b| = 1` everywhere.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Degree of `z^(P-1) p(z)`.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `p(e^{j theta})`; real up to rounding.
    pub fn eval_on_circle(&self, theta: f64) -> Complex64 {
        let half = (self.coeffs.len() / 2) as f64;
        let step = Complex64::from_polar(1.0, theta);
        let mut zk = Complex64::from_polar(1.0, -half * theta);
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in &self.coeffs {
            acc += c * zk;
            zk *= step;
        }
        acc
    }

    /// Minimum of `Re p` over a uniform grid; warns when clearly negative.
    pub fn grid_minimum(&self, points: usize) -> f64 {
        let min = (0..points)
            .map(|i| self.eval_on_circle(2.0 * PI * i as f64 / points as f64).re)
            .fold(f64::INFINITY, f64::min);
        if min < NEGATIVITY_WARN {
            log::warn!(
                "1 - |b|^2 reaches {min:.3e} on the unit circle; dual solution may be inaccurate"
            );
        }
        min
    }
}

/// Builds `p(z) = 1 - |b(z)|^2` from the dual polynomial coefficients.
pub fn build_p(h: &[Complex64]) -> NonnegPolynomial {
    let r = autocorrelation(h);
    let p = h.len();
    let mut coeffs: Vec<Complex64> = r.iter().map(|v| -v).collect();
    if p > 0 {
        coeffs[p - 1] += Complex64::new(1.0, 0.0);
    }
    let scale = r.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let degenerate = coeffs.iter().all(|c| c.norm() <= 1e-12 * scale);
    NonnegPolynomial { coeffs, degenerate }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    // coeffs ascending; returns (p(z), p'(z))
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Diagonal similarity scaling that equalizes row and column norms.
fn balance(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].norm();
                    r += m[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut cc, mut rr) = (c, r);
            while cc < rr / radix {
                cc *= radix;
                rr /= radix;
                f *= radix;
            }
            while cc >= rr * radix {
                cc /= radix;
                rr *= radix;
                f /= radix;
            }
            if (cc + rr) < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// All roots of `sum_i coeffs[i] z^i` via eigenvalues of the balanced
/// companion matrix, each polished by Newton steps on the original polynomial.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(DoaError::InvalidArgument(
            "zero polynomial has no isolated roots".into(),
        ));
    }
    let lo = coeffs
        .iter()
        .position(|c| c.norm() > TRIM_REL * scale)
        .unwrap_or(0);
    let hi = coeffs
        .iter()
        .rposition(|c| c.norm() > TRIM_REL * scale)
        .unwrap_or(0);
    let trimmed = &coeffs[lo..=hi];
    let n = trimmed.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = trimmed[n];
    let mut comp = DMatrix::<Complex64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        comp[(i, n - 1)] = -trimmed[i] / lead;
    }
    balance(&mut comp);
    let schur = Schur::try_new(comp, f64::EPSILON, 100_000).ok_or_else(|| {
        DoaError::Solver("companion eigenvalue iteration did not converge".into())
    })?;
    let (_, t) = schur.unpack();
    let mut roots: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    for z in roots.iter_mut() {
        let mut best = *z;
        let mut best_val = horner(trimmed, best).0.norm();
        for _ in 0..8 {
            let (pv, dpv) = horner(trimmed, best);
            if dpv.norm() == 0.0 {
                break;
            }
            let cand = best - pv / dpv;
            let cv = horner(trimmed, cand).0.norm();
            if cv < best_val && cand.re.is_finite() && cand.im.is_finite() {
                best = cand;
                best_val = cv;
            } else {
                break;
            }
        }
        *z = best;
    }
    Ok(roots)
}

/// Roots of `p`, and the merged angles of those close to the unit circle.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RootSet {
    /// Every root of `z^(P-1) p(z)`, as `(re, im)`.
    pub roots: Vec<(f64, f64)>,
    /// Candidate angles in radians, ascending in (-pi, pi].
    pub unit_circle_angles: Vec<f64>,
    /// Number of roots that passed the distance filter before merging.
    pub near_circle_roots: usize,
    /// Set when `p` vanished identically.
    pub degenerate: bool,
}

impl RootSet {
    pub fn distances_from_circle(&self) -> Vec<f64> {
        self.roots
            .iter()
            .map(|&(re, im)| (re.hypot(im) - 1.0).abs())
            .collect()
    }
}

/// Groups angles (radians) whose neighbours lie within `tol` and returns the
/// circular mean of each group, sorted ascending in (-pi, pi].
pub fn cluster_angles(angles: &[f64], tol: f64) -> Vec<f64> {
    if angles.is_empty() {
        return Vec::new();
    }
    let mut a: Vec<f64> = angles.iter().map(|&t| wrap_rad(t)).collect();
    a.sort_by(f64::total_cmp);
    let mut groups: Vec<Vec<f64>> = vec![vec![a[0]]];
    for w in a.windows(2) {
        if circ_dist_rad(w[1], w[0]) <= tol {
            groups.last_mut().unwrap().push(w[1]);
        } else {
            groups.push(vec![w[1]]);
        }
    }
    if groups.len() > 1 && circ_dist_rad(a[0], a[a.len() - 1]) <= tol {
        let tail = groups.pop().unwrap();
        groups[0].extend(tail);
    }
    let mut out: Vec<f64> = groups
        .iter()
        .map(|g| {
            let (s, c) = g
                .iter()
                .fold((0.0, 0.0), |(s, c), &t| (s + t.sin(), c + t.cos()));
            wrap_rad(s.atan2(c))
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Roots of `p` within `circle_tol` of the unit circle, merged by angle.
pub fn find_unit_circle_angles(
    p: &NonnegPolynomial,
    circle_tol: f64,
    cluster_tol_deg: f64,
) -> Result<RootSet> {
    if p.is_degenerate() {
        return Ok(RootSet {
            degenerate: true,
            ..RootSet::default()
        });
    }
    if p.degree() == 0 {
        return Ok(RootSet::default());
    }
    let roots = polynomial_roots(p.coeffs())?;
    let near: Vec<f64> = roots
        .iter()
        .filter(|z| (z.norm() - 1.0).abs() <= circle_tol)
        .map(|z| z.arg())
        .collect();
    Ok(RootSet {
        roots: roots.iter().map(|z| (z.re, z.im)).collect(),
        unit_circle_angles: cluster_angles(&near, cluster_tol_deg.to_radians()),
        near_circle_roots: near.len(),
        degenerate: false,
    })
}

/// Convenience: `p` from `h` and its candidate angles.
pub fn candidate_angles(
    h: &DVector<Complex64>,
    circle_tol: f64,
    cluster_tol_deg: f64,
) -> Result<RootSet> {
    let p = build_p(h.as_slice());
    find_unit_circle_angles(&p, circle_tol, cluster_tol_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::eval_trig_poly;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn autocorrelation_examples() {
        assert_eq!(autocorrelation(&[c(1.0, 0.0)]), vec![c(1.0, 0.0)]);
        assert_eq!(
            autocorrelation(&[c(1.0, 0.0), c(1.0, 0.0)]),
            vec![c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]
        );
    }

    #[test]
    fn autocorrelation_matches_squared_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h: Vec<Complex64> = (0..63)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let r = autocorrelation(&h);
        let hv = DVector::from_vec(h);
        for i in 0..1024 {
            let t = 2.0 * PI * i as f64 / 1024.0;
            let direct = eval_trig_poly(&hv, t).norm_sqr();
            let via_r = eval_trig_poly(&DVector::from_vec(r.clone()), t);
            assert!((via_r.re - direct).abs() < 1e-10 && via_r.im.abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_and_constant_cases() {
        let p = build_p(&[c(1.0, 0.0)]);
        assert!(p.is_degenerate());
        let rs = find_unit_circle_angles(&p, DEFAULT_CIRCLE_TOL, DEFAULT_CLUSTER_TOL_DEG).unwrap();
        assert!(rs.degenerate && rs.unit_circle_angles.is_empty());

        let p = build_p(&[c(0.5, 0.0)]);
        assert!(!p.is_degenerate());
        assert!((p.coeffs()[0] - c(0.75, 0.0)).norm() < 1e-15);
        let rs = find_unit_circle_angles(&p, DEFAULT_CIRCLE_TOL, DEFAULT_CLUSTER_TOL_DEG).unwrap();
        assert!(rs.roots.is_empty());
    }

    fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
        let mut coeffs = vec![c(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (i, &a) in coeffs.iter().enumerate() {
                next[i + 1] += a;
                next[i] -= a * r;
            }
            coeffs = next;
        }
        coeffs
    }

    #[test]
    fn planted_double_roots_on_circle() {
        let e = |deg: f64| Complex64::from_polar(1.0, deg.to_radians());
        let off = [c(0.3, 0.2), c(2.5, -1.0)];
        let roots = [e(45.0), e(45.0), e(-45.0), e(-45.0), off[0], off[1]];
        let coeffs = poly_from_roots(&roots);
        let p = NonnegPolynomial {
            coeffs,
            degenerate: false,
        };
        let rs = find_unit_circle_angles(&p, DEFAULT_CIRCLE_TOL, DEFAULT_CLUSTER_TOL_DEG).unwrap();
        assert_eq!(rs.unit_circle_angles.len(), 2);
        assert!((rs.unit_circle_angles[0].to_degrees() + 45.0).abs() < 1e-5);
        assert!((rs.unit_circle_angles[1].to_degrees() - 45.0).abs() < 1e-5);
        assert_eq!(rs.near_circle_roots, 4);
    }

    #[test]
    fn planted_roots_recovered_to_high_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let deg = 24;
        let roots: Vec<Complex64> = (0..deg)
            .map(|i| {
                let angle = 2.0 * PI * (i as f64 + 0.5 * rng.random::<f64>()) / deg as f64;
                Complex64::from_polar(0.9 + 0.2 * rng.random::<f64>(), angle)
            })
            .collect();
        let found = polynomial_roots(&poly_from_roots(&roots)).unwrap();
        assert_eq!(found.len(), deg);
        let worst = roots
            .iter()
            .map(|r| {
                found
                    .iter()
                    .map(|f| (f - r).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "worst root error {worst:e}");
    }

    #[test]
    fn high_degree_roots_have_small_newton_correction() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for p_len in [33, 63, 66] {
            let h: Vec<Complex64> = (0..p_len)
                .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let p = build_p(&h);
            let roots = polynomial_roots(p.coeffs()).unwrap();
            assert_eq!(roots.len(), 2 * p_len - 2);
            for z in &roots {
                let (v, dv) = horner(p.coeffs(), *z);
                assert!(
                    (v / dv).norm() < 1e-8 * z.norm().max(1.0),
                    "degree {}",
                    2 * p_len - 2
                );
            }
        }
    }

    #[test]
    fn clustering_merges_across_branch_cut() {
        let a = [PI - 0.001, -PI + 0.001, 0.5, 0.5 + 1e-4];
        let out = cluster_angles(&a, 0.5f64.to_radians());
        assert_eq!(out.len(), 2);
        assert!((out[0] - (0.5 + 5e-5)).abs() < 1e-12);
        assert!((out[1].abs() - PI).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn p_is_hermitian_and_roots_pair(seed in 0u64..1000) {
            // h scaled so |b| < 1: p is strictly positive on the circle
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h: Vec<Complex64> = (0..9).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let l1: f64 = h.iter().map(|v| v.norm()).sum();
            let h: Vec<Complex64> = h.iter().map(|v| v * (0.9 / l1)).collect();
            let p = build_p(&h);
            let n = p.coeffs().len();
            for k in 0..n {
                prop_assert!((p.coeffs()[k] - p.coeffs()[n - 1 - k].conj()).norm() < 1e-15);
            }
            for i in 0..256 {
                prop_assert!(p.eval_on_circle(2.0 * PI * i as f64 / 256.0).im.abs() < 1e-10);
            }
            let roots = polynomial_roots(p.coeffs()).unwrap();
            for z in &roots {
                let mirror = 1.0 / z.conj();
                let d = roots.iter().map(|w| (w - mirror).norm() / mirror.norm().max(1.0)).fold(f64::INFINITY, f64::min);
                prop_assert!(d < 1e-6);
            }
        }
    }
}
