use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeloc_core::model::constraint_matrix;
use rangeloc_core::polyspectral::{cauchy_bound, lambda_lower, simdiag, sturm_count, Polynomial};

fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> Polynomial {
    let mut c: Vec<f64> = (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect();
    if c[degree].abs() < 0.05 {
        c[degree] = 0.5;
    }
    Polynomial::new(c)
}

/// Sign changes of `p` on `grid + 1` equally spaced points of `[lo, hi]`.
fn scan_sign_changes(p: &Polynomial, lo: f64, hi: f64, grid: usize) -> usize {
    let mut changes = 0;
    let mut last = 0.0f64;
    for k in 0..=grid {
        let x = lo + (hi - lo) * k as f64 / grid as f64;
        let v = p.eval(x);
        if v != 0.0 {
            if last != 0.0 && v.signum() != last {
                changes += 1;
            }
            last = v.signum();
        }
    }
    changes
}

fn companion_roots(p: &Polynomial) -> Vec<(f64, f64)> {
    let c = p.coeffs();
    let deg = c.len() - 1;
    let lead = c[deg];
    let mut m = DMatrix::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -c[i] / lead;
    }
    m.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

#[test]
fn sturm_counts_match_dense_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let degree = 2 + case % 9;
        let p = random_poly(&mut rng, degree);
        let b = cauchy_bound(&p).unwrap();
        let sturm = sturm_count(&p, -b, b).unwrap();
        let scan = scan_sign_changes(&p, -b, b, 1_000_000);
        // The scan cannot see roots of even multiplicity, which random
        // coefficients do not produce, so the counts must agree.
        assert_eq!(sturm, scan, "case {case}: {:?}", p.coeffs());
    }
}

#[test]
fn sturm_counts_sub_intervals() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..50 {
        let p = random_poly(&mut rng, 8);
        let b = cauchy_bound(&p).unwrap();
        let lo = rng.random_range(-b..0.0);
        let hi = rng.random_range(0.0..b);
        assert_eq!(sturm_count(&p, lo, hi).unwrap(), scan_sign_changes(&p, lo, hi, 1_000_000), "case {case}");
    }
}

#[test]
fn cauchy_bound_dominates_companion_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let degree = 2 + case % 9;
        let p = random_poly(&mut rng, degree);
        let b = cauchy_bound(&p).unwrap();
        for (re, im) in companion_roots(&p) {
            assert!(re.hypot(im) <= b * (1.0 + 1e-9), "case {case}: root {re}+{im}i beyond {b}");
        }
    }
}

fn random_spd(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let rows = k + 3;
    let a = DMatrix::from_fn(rows, k, |_, _| rng.random_range(-5.0..5.0));
    a.tr_mul(&a)
}

#[test]
fn simdiag_residuals_on_random_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let k = if case % 2 == 0 { 3 } else { 4 };
        let ata = random_spd(&mut rng, k);
        let d = constraint_matrix(k - 1);
        let diag = simdiag(&ata, &d).unwrap();
        assert!(diag.residual(&ata, &d) < 1e-9, "case {case}: {}", diag.residual(&ata, &d));
        assert!(diag.r.determinant().abs() > 0.0);
        assert!(diag.delta.iter().zip(diag.delta.iter().skip(1)).all(|(a, b)| a >= b));
        assert_eq!(diag.delta[k - 1], 0.0);
    }
}

#[test]
fn lambda_lower_brackets_semidefiniteness() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let ata = random_spd(&mut rng, 4);
        let d = constraint_matrix(3);
        let l = lambda_lower(&ata, &d).unwrap();
        let above = (&ata + &d * (l + 1e-6)).symmetric_eigenvalues().min();
        let below = (&ata + &d * (l - 1e-6)).symmetric_eigenvalues().min();
        assert!(above > 0.0 && below < 0.0, "λ_l={l}: {above} {below}");
    }
}

proptest! {
    #[test]
    fn sturm_over_cauchy_interval_counts_all_distinct_real_roots(
        roots in prop::collection::btree_set(-20i32..20, 1..7),
    ) {
        let real: Vec<f64> = roots.iter().map(|r| *r as f64 * 0.5).collect();
        let p = Polynomial::from_roots(&real);
        let b = cauchy_bound(&p).unwrap();
        prop_assert_eq!(sturm_count(&p, -b, b).unwrap(), roots.len());
    }

    #[test]
    fn sturm_matches_scan_on_random_coefficients(
        coeffs in prop::collection::vec(-1.0f64..1.0, 3..12),
        lead in 0.1f64..1.0,
    ) {
        let mut c = coeffs;
        let last = c.len() - 1;
        c[last] = lead;
        let p = Polynomial::new(c);
        let b = cauchy_bound(&p).unwrap();
        prop_assert_eq!(sturm_count(&p, -b, b).unwrap(), scan_sign_changes(&p, -b, b, 200_000));
    }

    #[test]
    fn simdiag_reconstructs(entries in prop::collection::vec(-3.0f64..3.0, 18)) {
        let a = DMatrix::from_row_slice(6, 3, &entries);
        let ata = a.tr_mul(&a) + DMatrix::identity(3, 3) * 1e-3;
        let d = constraint_matrix(2);
        let diag = simdiag(&ata, &d).unwrap();
        prop_assert!(diag.residual(&ata, &d) < 1e-9);
        prop_assert!(diag.r.determinant().abs() > 0.0);
    }
}
