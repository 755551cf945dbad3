mod common;

use common::*;
use lapvard_ct::transmission::{mean_counts, neg_log_likelihood, nll_gradient};
use lapvard_ct::{Sinogram, SystemMatrix};
use proptest::prelude::*;

fn nll_at(a: &SystemMatrix, sino: &Sinogram, x: &[f64]) -> f64 {
    neg_log_likelihood(sino, &mean_counts(a, sino.air_scan(), x).unwrap()).unwrap()
}

/// Direct evaluation from the dense matrix.
fn dense_nll(dense: &[Vec<f64>], y: &[f64], air: &[f64], x: &[f64]) -> f64 {
    dense_matvec(dense, x)
        .iter()
        .zip(y.iter().zip(air))
        .map(|(l, (y, i))| i * (-l).exp() - y * (i.ln() - l))
        .sum()
}

fn small_problem(seed: u64) -> (SystemMatrix, Sinogram, Vec<f64>) {
    let mut r = rng(seed);
    let a = random_matrix(&mut r, 5, 4, 0.7, false);
    let air = random_vec(&mut r, 5, 50.0, 500.0);
    let y: Vec<f64> = random_vec(&mut r, 5, 0.0, 300.0).iter().map(|v| v.round()).collect();
    let x = random_vec(&mut r, 4, -0.5, 1.0);
    (a, Sinogram::new(y, air).unwrap(), x)
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..20 {
        let (a, sino, x) = small_problem(seed);
        let g = nll_gradient(&a, &sino, &x).unwrap();
        let step = 1e-5;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += step;
            xm[k] -= step;
            let fd = (nll_at(&a, &sino, &xp) - nll_at(&a, &sino, &xm)) / (2.0 * step);
            let scale = g[k].abs().max(1.0);
            assert!((g[k] - fd).abs() <= 1e-5 * scale, "seed {seed} k {k}: {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn values_match_dense_oracle() {
    for seed in 0..20 {
        let (a, sino, x) = small_problem(seed);
        let dense = a.to_dense();
        let q = mean_counts(&a, sino.air_scan(), &x).unwrap();
        let want: Vec<f64> = dense_matvec(&dense, &x)
            .iter()
            .zip(sino.air_scan())
            .map(|(l, i)| i * (-l).exp())
            .collect();
        for (g, w) in q.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w);
        }
        let got = nll_at(&a, &sino, &x);
        let want = dense_nll(&dense, sino.counts(), sino.air_scan(), &x);
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn convex_along_random_segments() {
    let mut r = rng(31);
    for seed in 0..100 {
        let (a, sino, x0) = small_problem(seed);
        let x1 = random_vec(&mut r, 4, -0.5, 1.0);
        let f0 = nll_at(&a, &sino, &x0);
        let f1 = nll_at(&a, &sino, &x1);
        for s in 1..10 {
            let t = s as f64 / 10.0;
            let xt: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            let ft = nll_at(&a, &sino, &xt);
            assert!(ft <= (1.0 - t) * f0 + t * f1 + 1e-9 * (f0.abs() + f1.abs()));
        }
    }
}

#[test]
fn minimized_where_means_equal_counts() {
    // Identity system: each ray sees one coefficient, so the minimizer is
    // x_i = ln(I_i / y_i).
    let a = SystemMatrix::identity(3);
    let sino = Sinogram::new(vec![10.0, 40.0, 90.0], vec![100.0, 100.0, 100.0]).unwrap();
    let x: Vec<f64> = [10.0f64, 40.0, 90.0].iter().map(|y| (100.0 / y).ln()).collect();
    let g = nll_gradient(&a, &sino, &x).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn zero_counts_rays_are_allowed() {
    let a = SystemMatrix::identity(2);
    let sino = Sinogram::new(vec![0.0, 0.0], vec![10.0, 20.0]).unwrap();
    assert_eq!(nll_at(&a, &sino, &[0.0, 0.0]), 30.0);
}

#[test]
fn malformed_sinograms_rejected() {
    assert!(Sinogram::new(vec![1.0], vec![1.0, 2.0]).is_err());
    assert!(Sinogram::new(vec![-1.0], vec![1.0]).is_err());
    assert!(Sinogram::new(vec![1.0], vec![0.0]).is_err());
    let a = SystemMatrix::identity(2);
    let sino = Sinogram::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
    assert!(nll_gradient(&a, &sino, &[0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_first_order_accurate(seed in any::<u64>()) {
        let (a, sino, x) = small_problem(seed);
        let mut r = rng(seed ^ 0x9e37);
        let dir = random_vec(&mut r, 4, -1.0, 1.0);
        let g = nll_gradient(&a, &sino, &x).unwrap();
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
        let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
        let fd = (nll_at(&a, &sino, &xp) - nll_at(&a, &sino, &xm)) / (2.0 * h);
        let dd = dot(&g, &dir);
        prop_assert!((fd - dd).abs() <= 1e-4 * dd.abs().max(1.0));
    }
}
