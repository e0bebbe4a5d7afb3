//! Invariants of the dual solution and of the rooting polynomial, checked on
//! solved problems rather than on hand-built inputs.

mod common;

use common::*;
use gridless_doa::geometry::{make_rpa, make_uca, ArrayGeometry};
use gridless_doa::Complex64;
use nalgebra::DVector;
use proptest::prelude::*;

fn arrays() -> Vec<ArrayGeometry> {
    vec![
        make_uca(16, 1.5).unwrap(),
        make_rpa(14, 0.3, 1.5, 7).unwrap(),
    ]
}

#[test]
fn dual_polynomial_is_bounded_by_one() {
    for (i, g) in arrays().iter().enumerate() {
        for seed in 0..3 {
            let sol = solve_noisy(g, &[20.0, 95.0, -140.0], 15.0, 100 * i as u64 + seed);
            let worst =
                check_bounded(&sol).unwrap_or_else(|e| panic!("array {i} seed {seed}: {e}"));
            assert!(
                worst > 0.99,
                "array {i} seed {seed}: b never reaches the circle ({worst})"
            );
        }
    }
}

#[test]
fn psd_and_trace_certificates_hold() {
    for (i, g) in arrays().iter().enumerate() {
        let sol = solve_noisy(g, &[-35.0, 60.0], 10.0, 3 + i as u64);
        check_certificates(&sol).unwrap_or_else(|e| panic!("array {i}: {e}"));
    }
}

#[test]
fn autocorrelation_matches_grid_oracle_on_solutions() {
    let g = make_uca(20, 2.0).unwrap();
    let sol = solve_noisy(&g, &[40.0, 50.0], 20.0, 11);
    check_grid_oracle(&sol.h_star, 1024).unwrap();
    check_hermitian(sol.h_star.as_slice()).unwrap();
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rooting_polynomial_is_hermitian(h in (1usize..40).prop_flat_map(complex_vec)) {
        prop_assert!(check_hermitian(&h).is_ok());
        prop_assert!(check_grid_oracle(&DVector::from_vec(h), 256).is_ok());
    }
}

#[test]
fn ula_fourier_route_matches_direct_polynomial() {
    for (k, doas) in [[50.0, 110.0], [35.0, 80.0], [70.0, 135.0]]
        .iter()
        .enumerate()
    {
        check_ula_cross(doas, k as u64).unwrap_or_else(|e| panic!("case {k}: {e}"));
    }
}
