mod common;

use common::*;
use lapvard_ct::lapvard::*;
use lapvard_ct::transmission::mean_counts;
use lapvard_ct::{Sinogram, SystemMatrix};
use proptest::prelude::*;
use rand::Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn kl_matches_quadrature() {
    let mut rng = rng(41);
    for _ in 0..100 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let b: f64 = rng.random_range(0.02..1.0);
        let gamma: f64 = rng.random_range(0.05..2.0);
        let log_ratio = |x: f64| (gamma / b).ln() - (x - mu).abs() / b + x.abs() / gamma;
        let density = |x: f64| (-(x - mu).abs() / b).exp() / (2.0 * b);
        let f = |x: f64| density(x) * log_ratio(x);
        let (lo, hi) = (mu.min(0.0), mu.max(0.0));
        let reach = 60.0 * b;
        let mut quad = adaptive_simpson(&f, lo - reach, lo, 1e-13) + adaptive_simpson(&f, hi, hi + reach, 1e-13);
        if hi > lo {
            quad += adaptive_simpson(&f, lo, hi, 1e-13);
        }
        let got = laplace_kl(mu, b, gamma).unwrap();
        assert!((got - quad).abs() <= 1e-8, "({mu}, {b}, {gamma}): {got} vs {quad}");
    }
}

#[test]
fn expected_counts_match_monte_carlo() {
    let mut rng = rng(42);
    let phi = random_matrix(&mut rng, 5, 4, 0.8, true);
    let max_abs = phi.max_abs_per_col();
    let mu = random_vec(&mut rng, 4, -0.3, 0.3);
    // b |φ| ≤ 0.2 keeps the second moment of the exponential finite.
    let b: Vec<f64> = max_abs.iter().map(|&m| if m > 0.0 { 0.2 / m } else { 0.1 }).collect();
    let state = VariationalState::new(mu.clone(), b.clone(), vec![1.0; 4]).unwrap();
    let air = vec![1000.0; 5];
    let exact = expected_mean_counts(&phi, &air, &state).unwrap();

    let n = 1_000_000;
    let dense = phi.to_dense();
    let mut sum = vec![0.0; 5];
    let mut sum_sq = vec![0.0; 5];
    let mut beta = vec![0.0; 4];
    for _ in 0..n {
        for k in 0..4 {
            beta[k] = laplace_draw(&mut rng, mu[k], b[k]);
        }
        for (i, row) in dense.iter().enumerate() {
            let q = air[i] * (-dot(row, &beta)).exp();
            sum[i] += q;
            sum_sq[i] += q * q;
        }
    }
    for i in 0..5 {
        let mean = sum[i] / n as f64;
        let se = ((sum_sq[i] / n as f64 - mean * mean) / n as f64).sqrt();
        let err = (mean - exact[i]).abs();
        assert!(err <= 0.01 * exact[i], "ray {i}: MC {mean} vs {}", exact[i]);
        assert!(err <= 3.0 * se, "ray {i}: MC {mean} ± {se} vs {}", exact[i]);
    }

    let one = SystemMatrix::from_rows(1, vec![vec![(0, 1.0)]]).unwrap();
    let s = VariationalState::new(vec![0.0], vec![0.5], vec![1.0]).unwrap();
    let e = expected_mean_counts(&one, &[100.0], &s).unwrap();
    assert!((e[0] - 133.333_333_333_333_3).abs() < 1e-9);
}

#[test]
fn gamma_update_is_the_one_dimensional_minimizer() {
    let mut rng = rng(43);
    for _ in 0..100 {
        let mu: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = 10f64.powf(rng.random_range(-4.0..0.0));
        let state = VariationalState::new(vec![mu], vec![b], vec![1.0]).unwrap();
        let got = update_gamma(&state)[0];
        // γ-dependent terms of the energy: E|β|/γ + ln(2γ), searched in ln γ.
        let e_abs = b * (-mu.abs() / b).exp() + mu.abs();
        let f = |t: f64| e_abs / t.exp() + (2.0 * t.exp()).ln();
        let want = global_min_1d(f, -20.0, 5.0, 2000).exp();
        assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
    }
}

#[test]
fn perturbing_gamma_never_lowers_energy() {
    let (phi, sino, beta) = small_scan();
    let mut rng = rng(44);
    for _ in 0..5 {
        let mut state = random_state(&mut rng, &phi, &beta);
        state.gamma = update_gamma(&state);
        let base = free_variational_energy(&phi, &sino, &state).unwrap();
        for k in (0..state.len()).step_by(17) {
            for factor in [0.99, 1.01] {
                let mut probe = state.clone();
                probe.gamma[k] *= factor;
                let f = free_variational_energy(&phi, &sino, &probe).unwrap();
                assert!(f >= base, "gamma[{k}] × {factor} lowered F by {}", base - f);
            }
        }
    }
}

#[test]
fn mu_surrogate_touches_and_majorizes() {
    let (phi, sino, beta) = small_scan();
    let mut rng = rng(45);
    let state = random_state(&mut rng, &phi, &beta);
    let terms = build_mu_surrogate(&phi, &sino, &state, &state.mu).unwrap();
    let at = mu_objective(&phi, &sino, &state, &state.mu).unwrap();
    assert!(rel(terms.value(&state, &state.mu), at) < 1e-9);
    for p in 0..200 {
        let scale = 10f64.powf(-4.0 + 3.0 * (p as f64 / 200.0));
        let probe: Vec<f64> = state.mu.iter().map(|&m| m + scale * rng.random_range(-1.0..1.0)).collect();
        let g = terms.value(&state, &probe);
        let f = mu_objective(&phi, &sino, &state, &probe).unwrap();
        assert!(g >= f - 1e-9 * f.abs(), "probe {p}: G {g} < F {f}");
    }
}

#[test]
fn b_surrogate_touches_and_majorizes() {
    let (phi, sino, beta) = small_scan();
    let mut rng = rng(46);
    let state = random_state(&mut rng, &phi, &beta);
    let terms = build_b_surrogate(&phi, &sino, &state, &state.b).unwrap();
    let at = b_objective(&phi, &sino, &state, &state.b).unwrap();
    assert!(rel(terms.value(&state, &state.b), at) < 1e-9);
    let max_abs = phi.max_abs_per_col();
    for p in 0..200 {
        let spread = 0.05 + 2.0 * (p as f64 / 200.0);
        let probe: Vec<f64> = (0..state.len())
            .map(|k| {
                let (lo, hi) = terms.feasible_interval(k);
                let hi = hi.min(0.999 / max_abs[k]);
                let margin = 1e-3 * (hi - lo.max(0.0));
                (state.b[k] * rng.random_range(-spread..spread).exp()).clamp(lo.max(0.0) + margin, hi - margin)
            })
            .collect();
        let g = terms.value(&state, &probe);
        let f = b_objective(&phi, &sino, &state, &probe).unwrap();
        assert!(g.is_finite() && g >= f - 1e-9 * f.abs(), "probe {p}: G {g} < F {f}");
    }
}

#[test]
fn mu_minimizer_matches_scan_oracle() {
    let (phi, sino, beta) = small_scan();
    let mut rng = rng(47);
    let cfg = LapVardConfig::default();
    let state = random_state(&mut rng, &phi, &beta);
    let terms = build_mu_surrogate(&phi, &sino, &state, &state.mu).unwrap();
    let got = minimize_mu_surrogate(&terms, &state, &cfg).unwrap();
    let width = 40.0 / terms.z1;
    for k in (0..state.len()).step_by(7) {
        let (b, g) = (state.b[k], state.gamma[k]);
        let f = |m: f64| terms.coordinate(k, m, b, g).0;
        let centre = state.mu[k];
        let want = global_min_1d(f, centre - width, centre + width, 4000);
        assert!((got[k] - want).abs() <= 1e-6 * want.abs().max(1.0), "k {k}: {} vs {want}", got[k]);
        assert!(f(got[k]) <= f(want) + 1e-12 * f(want).abs());
    }
}

#[test]
fn b_minimizer_matches_bisection_oracle() {
    let (phi, sino, beta) = small_scan();
    let mut rng = rng(48);
    let cfg = LapVardConfig::default();
    let state = random_state(&mut rng, &phi, &beta);
    let terms = build_b_surrogate(&phi, &sino, &state, &state.b).unwrap();
    let got = minimize_b_surrogate(&terms, &state, &cfg).unwrap();
    let max_abs = phi.max_abs_per_col();
    let c: Vec<f64> = mean_counts(&phi, sino.air_scan(), &state.mu).unwrap();
    let col_ptr = phi.col_ptr();
    for k in (0..state.len()).step_by(7) {
        let (rows, vals) = phi.column(k);
        let base = col_ptr[k];
        let anchor = state.b[k];
        let (m, g) = (state.mu[k].abs(), state.gamma[k]);
        // d/db of Σ_i r c_i Q_ik / (1 - (φ b̃)²) with b̃ = b̂ + (b - b̂)/r, plus
        // the prior and entropy terms.
        let deriv = |b: f64| {
            let mut d = (-m / b).exp() * (1.0 + m / b) / g - 1.0 / b;
            for (p, (&i, &v)) in rows.iter().zip(vals).enumerate() {
                let (r, q) = (terms.r[base + p], terms.q[base + p]);
                let x = v * (anchor + (b - anchor) / r);
                d += r * c[i] * q * 2.0 * x * (v / r) / (1.0 - x * x).powi(2);
            }
            d
        };
        let (lo, hi) = terms.feasible_interval(k);
        let upper = hi.min((1.0 - cfg.b_domain_margin) / max_abs[k]);
        let want = if deriv(upper) <= 0.0 {
            upper
        } else {
            let (mut a, mut z) = (lo.max(0.0), upper);
            for _ in 0..200 {
                let mid = 0.5 * (a + z);
                if deriv(mid) < 0.0 {
                    a = mid;
                } else {
                    z = mid;
                }
            }
            0.5 * (a + z)
        };
        assert!((got[k] - want).abs() <= 1e-6 * want, "k {k}: {} vs {want}", got[k]);
    }
}

#[test]
fn unseen_coefficient_scale_solves_stationarity() {
    // Column 1 is never traversed, so its b minimizes b e^{-|μ|/b}/γ - ln(2b).
    let phi = SystemMatrix::from_rows(2, vec![vec![(0, 1.0)], vec![(0, 0.5)]]).unwrap();
    let sino = Sinogram::new(vec![50.0, 70.0], vec![100.0, 100.0]).unwrap();
    let cfg = LapVardConfig::default();
    for (mu, gamma) in [(0.0, 0.3), (0.2, 0.5), (-1.0, 1.5), (0.05, 0.01)] {
        let state = VariationalState::new(vec![0.1, mu], vec![0.2, 0.1], vec![1.0, gamma]).unwrap();
        let terms = build_b_surrogate(&phi, &sino, &state, &state.b).unwrap();
        let got = minimize_b_surrogate(&terms, &state, &cfg).unwrap()[1];
        let c: f64 = mu.abs();
        let deriv = |b: f64| (-c / b).exp() * (1.0 + c / b) / gamma - 1.0 / b;
        let (mut lo, mut hi) = (1e-12, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let want = 0.5 * (lo + hi);
        assert!((got - want).abs() <= 1e-8 * want, "({mu}, {gamma}): {got} vs {want}");
    }
}

#[test]
fn energy_decomposes_into_likelihood_and_kl() {
    let (phi, sino, beta) = small_scan();
    let mut rng = rng(49);
    for _ in 0..5 {
        let state = random_state(&mut rng, &phi, &beta);
        let f = free_variational_energy(&phi, &sino, &state).unwrap();
        let e_nll = expected_neg_log_likelihood(&phi, &sino, &state).unwrap();
        let data_const: f64 = sino
            .counts()
            .iter()
            .zip(sino.air_scan())
            .map(|(y, i)| y * i.ln())
            .sum();
        let kl: f64 = (0..state.len())
            .map(|k| laplace_kl(state.mu[k], state.b[k], state.gamma[k]).unwrap())
            .sum();
        let recomposed = e_nll + data_const + kl + state.len() as f64;
        assert!(rel(f, recomposed) < 1e-9 || (f - recomposed).abs() <= 1e-9 * f.abs());
    }
}

#[test]
fn expected_counts_dominate_plug_in_counts() {
    let (phi, sino, beta) = small_scan();
    let mut rng = rng(50);
    let state = random_state(&mut rng, &phi, &beta);
    let e = expected_mean_counts(&phi, sino.air_scan(), &state).unwrap();
    let q = mean_counts(&phi, sino.air_scan(), &state.mu).unwrap();
    assert!(e.iter().zip(&q).all(|(e, q)| e >= q));
}

#[test]
fn every_block_is_monotone_and_respects_the_box() {
    let (phi, sino, _) = small_scan();
    let cfg = LapVardConfig {
        n_outer: 30,
        ..Default::default()
    };
    let run = run_lapvard(&phi, &sino, &cfg, None).unwrap();
    let trace: Vec<f64> = run.fve_trace().collect();
    assert_eq!(trace.len(), 1 + 3 * 30);
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{} -> {}", w[0], w[1]);
    }
    let max_abs = phi.max_abs_per_col();
    for (k, &b) in run.state.b.iter().enumerate() {
        if max_abs[k] > 0.0 {
            assert!(b <= (1.0 - cfg.b_domain_margin) / max_abs[k] * (1.0 + 1e-15));
        }
        assert!(b > 0.0);
    }
    assert_eq!(run.state.gamma, update_gamma(&run.state));
}

#[test]
fn all_zero_counts_run_cleanly() {
    let (phi, sino, _) = small_scan();
    let empty = Sinogram::new(vec![0.0; sino.n_rays()], sino.air_scan().to_vec()).unwrap();
    let cfg = LapVardConfig {
        n_outer: 10,
        ..Default::default()
    };
    let run = run_lapvard(&phi, &empty, &cfg, None).unwrap();
    let trace: Vec<f64> = run.fve_trace().collect();
    assert!(trace.iter().all(|f| f.is_finite()));
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    assert!(run.state.mu.iter().all(|m| m.is_finite()));
}

#[test]
fn single_pixel_noiseless_recovers_attenuation() {
    let truth = 0.7;
    let phi = SystemMatrix::from_rows(1, vec![vec![(0, 1.0)], vec![(0, 2.0)]]).unwrap();
    let air = vec![1e6, 1e6];
    let y = mean_counts(&phi, &air, &[truth]).unwrap();
    let sino = Sinogram::new(y, air).unwrap();
    let cfg = LapVardConfig {
        n_outer: 200,
        ..Default::default()
    };
    let run = run_lapvard(&phi, &sino, &cfg, None).unwrap();
    assert!((run.state.mu[0] - truth).abs() < 1e-3, "mu = {}", run.state.mu[0]);
}

#[test]
fn seeded_start_requires_coefficients() {
    let phi = SystemMatrix::identity(2);
    let sino = Sinogram::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
    let cfg = LapVardConfig {
        n_outer: 1,
        init_mu_mode: InitMuMode::FromImage,
        ..Default::default()
    };
    assert!(run_lapvard(&phi, &sino, &cfg, None).is_err());
    assert!(run_lapvard(&phi, &sino, &cfg, Some(&[0.1])).is_err());
    let run = run_lapvard(&phi, &sino, &cfg, Some(&[0.5, 0.6])).unwrap();
    assert_eq!(run.trace.len(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_match(mu in -3.0f64..3.0, b in 1e-3f64..3.0, gamma in 1e-3f64..3.0) {
        let kl = laplace_kl(mu, b, gamma).unwrap();
        prop_assert!(kl >= -1e-12);
        prop_assert!(laplace_kl(0.0, b, b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn optimal_gamma_bounds(mu in -3.0f64..3.0, b in 1e-4f64..3.0) {
        let s = VariationalState::new(vec![mu], vec![b], vec![1.0]).unwrap();
        let g = update_gamma(&s)[0];
        prop_assert!(g >= mu.abs());
        // b e^{-|μ|/b} underflows for |μ| >> b.
        if b * (-mu.abs() / b).exp() > 4.0 * f64::EPSILON * mu.abs() {
            prop_assert!(g > mu.abs());
        }
        prop_assert!(g <= mu.abs() + b);
    }
}
