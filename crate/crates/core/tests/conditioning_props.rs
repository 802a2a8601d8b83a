//! Partition conditional expectations, bridge laws and the kernel
//! regressions.

use std::sync::OnceLock;

use pettis_core::conditioning::{
    bridge_density, bridge_regression, cond_exp_partition, defining_equation_residual,
    gaussian_cond_exp, n_martingale_check, n_measure_integral, pullout, q_kernel_cond,
    BridgeKernel, GaussianPair, Partition, PathMonomial, Verdict,
};
use pettis_core::paths::{sample_brownian, PathEnsemble, TimeGrid};
use pettis_core::stats::{wmean, WeightedSample};
use pettis_core::vecspace::Vector;
use proptest::prelude::*;

const PATHS: usize = 100_000;

fn ensemble() -> &'static PathEnsemble {
    static E: OnceLock<PathEnsemble> = OnceLock::new();
    E.get_or_init(|| sample_brownian(TimeGrid::new(1.0, 256).unwrap(), 8_675_309, PATHS).unwrap())
}

/// Vector samples `(w_T, w_T², sin w_{T/2})` over the first `n` paths.
fn samples(n: usize) -> (Vec<Vector>, Vec<f64>) {
    let e = ensemble();
    let mid = e.values_at(0.5).unwrap();
    let end = e.terminal_values();
    let v = (0..n)
        .map(|k| Vector::new(vec![end[k], end[k] * end[k], mid[k].sin()]).unwrap())
        .collect();
    (v, mid[..n].to_vec())
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn defining_equation_and_pullout() {
    let (v, key) = samples(20_000);
    let four = Partition::rank_bins(&key, 4).unwrap();
    let ce = cond_exp_partition(&v, &four).unwrap();
    assert!(defining_equation_residual(&v, &ce, &four).unwrap() <= 1e-12);

    let eight = Partition::rank_bins(&key, 8).unwrap();
    let phi: Vec<f64> = eight.cells().iter().map(|&c| c as f64 - 3.5).collect();
    let (lhs, rhs) = pullout(&v, &phi, &eight).unwrap();
    for (a, b) in lhs.iter().zip(&rhs) {
        for (x, y) in a.coords().iter().zip(b.coords()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
    let bumpy: Vec<f64> = key.clone();
    assert!(pullout(&v, &bumpy, &eight).is_err());
}

#[test]
fn tower_property_over_nested_bins() {
    let (v, key) = samples(16_384);
    let ks = [1usize, 2, 4, 8, key.len()];
    let parts: Vec<Partition> = ks
        .iter()
        .map(|&k| Partition::rank_bins(&key, k).unwrap())
        .collect();
    for fine in 0..parts.len() {
        for coarse in 0..=fine {
            let inner = cond_exp_partition(&v, &parts[fine]).unwrap();
            let twice = cond_exp_partition(&inner, &parts[coarse]).unwrap();
            let once = cond_exp_partition(&v, &parts[coarse]).unwrap();
            for (a, b) in twice.iter().zip(&once) {
                for (x, y) in a.coords().iter().zip(b.coords()) {
                    assert!(
                        (x - y).abs() <= 1e-12 * (1.0 + y.abs()),
                        "K={} in K={}",
                        ks[fine],
                        ks[coarse]
                    );
                }
            }
        }
    }
}

#[test]
fn bridge_density_is_the_normal_pdf_and_normalized() {
    for &(t, big_t) in &[(0.5, 1.0), (0.1, 2.0), (1.9, 2.0), (3.0, 7.5)] {
        let k = BridgeKernel::new(t, big_t).unwrap();
        let var = t * (big_t - t) / big_t;
        for y in [-2.0, 0.0, 0.7, 3.1] {
            let mean = t / big_t * y;
            for i in -40..=40 {
                let x = mean + 0.2 * i as f64 * var.sqrt();
                let (a, b) = (bridge_density(&k, x, y), normal_pdf(x, mean, var));
                assert!((a - b).abs() <= 1e-12, "t={t} T={big_t} y={y} x={x}");
            }
            // trapezoid over ±8 sd
            let sd = var.sqrt();
            let n = 4000;
            let h = 16.0 * sd / n as f64;
            let mut total = 0.0;
            for i in 0..=n {
                let x = mean - 8.0 * sd + h * i as f64;
                let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
                total += wgt * bridge_density(&k, x, y);
            }
            assert!((total * h - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn gaussian_conditioning_reduces_to_the_bridge_mean() {
    for &(t, u) in &[(0.25, 1.0), (0.5, 1.0), (1.0, 4.0)] {
        let pair = GaussianPair::brownian(t, u).unwrap();
        let k = BridgeKernel::new(t, u).unwrap();
        for y in [-1.5, 0.0, 2.5] {
            assert!((gaussian_cond_exp(&pair, y) - k.mean(y)).abs() < 1e-14);
        }
    }
}

#[test]
fn bridge_regression_slope_and_conditional_variance() {
    let rep = bridge_regression(0.5, ensemble()).unwrap();
    let r = &rep.regression;
    assert!((r.slope - 0.5).abs() <= 3.0 * r.slope_se, "{r:?}");
    assert_eq!(r.verdict, Verdict::Pass);
    let v = &rep.conditional_variance;
    assert!((v.estimate - 0.25).abs() <= 3.0 * v.se, "{v:?}");
    assert!(v.pass);
}

#[test]
fn n_kernel_martingale_and_alpha_sweep() {
    let e = ensemble();
    let n = n_martingale_check(0.25, 0.5, e).unwrap();
    assert!((n.slope - 0.5).abs() <= 3.0 * n.slope_se, "{n:?}");
    assert_eq!(n.verdict, Verdict::Pass);

    for (alpha, slope, verdict) in [
        (0.5, 0.25, Verdict::Fail),
        (1.0, 0.5, Verdict::Fail),
        (2.0, 1.0, Verdict::Pass),
    ] {
        let q = q_kernel_cond(alpha, 0.25, 0.5, e).unwrap();
        assert_eq!(q.verdict, verdict, "alpha {alpha}: {q:?}");
        assert!(
            (q.slope - slope).abs() <= 3.0 * q.slope_se,
            "alpha {alpha}: {q:?}"
        );
    }
}

#[test]
fn n_measure_integral_matches_p_on_terminal_events() {
    // {w_T > 0} is σ(w_T)-measurable, so ∫_A w_t dN = E^P[w_t; A].
    let e = ensemble();
    let n_side = n_measure_integral(&PathMonomial::level(0.5), |p| p.terminal() > 0.0, e).unwrap();
    let direct: Vec<f64> = e
        .paths()
        .iter()
        .map(|p| {
            if p.terminal() > 0.0 {
                p.at(0.5).unwrap()
            } else {
                0.0
            }
        })
        .collect();
    let (p_side, se) = wmean(&WeightedSample::uniform(&direct).unwrap()).unwrap();
    assert!((n_side - p_side).abs() <= 3.0 * se, "N {n_side} P {p_side}");
    let exact = 0.5 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((p_side - exact).abs() <= 3.0 * se);

    let sq = n_measure_integral(&PathMonomial::square(0.5), |_| true, e).unwrap();
    assert!((sq - 0.5).abs() < 0.01);
    assert!(n_measure_integral(&PathMonomial::new(vec![0.1, 0.2, 0.3]), |_| true, e).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn defining_equation_holds_for_any_partition(
        cells in prop::collection::vec(0usize..5, 5..60),
        data in prop::collection::vec(-1e3f64..1e3, 120),
    ) {
        let n = cells.len();
        let mut cells = cells;
        // every label below the maximum must appear
        for c in 0..5 { cells[c % n] = c.min(n - 1); }
        let count = cells.iter().max().unwrap() + 1;
        let part = Partition::new(cells, count).unwrap();
        let v: Vec<Vector> = (0..n).map(|k| Vector::new(vec![data[2 * k], data[2 * k + 1]]).unwrap()).collect();
        let ce = cond_exp_partition(&v, &part).unwrap();
        prop_assert!(defining_equation_residual(&v, &ce, &part).unwrap() <= 1e-12);
        // idempotent
        let again = cond_exp_partition(&ce, &part).unwrap();
        for (a, b) in again.iter().zip(&ce) {
            for (x, y) in a.coords().iter().zip(b.coords()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn trivial_partition_is_the_mean_and_singletons_are_identity(data in prop::collection::vec(-10.0f64..10.0, 2..40)) {
        let v: Vec<Vector> = data.iter().map(|x| Vector::new(vec![*x]).unwrap()).collect();
        let all = cond_exp_partition(&v, &Partition::trivial(v.len()).unwrap()).unwrap();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        for a in &all {
            prop_assert!((a.coords()[0] - mean).abs() < 1e-12);
        }
        let id = cond_exp_partition(&v, &Partition::singletons(v.len()).unwrap()).unwrap();
        prop_assert_eq!(id, v);
    }

    #[test]
    fn bridge_moments(a in 0.01f64..0.99, b in 0.01f64..0.99, y in -4.0f64..4.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m = PathMonomial::product(a, b).bridge_expectation(1.0, y).unwrap();
        prop_assert!((m - (lo * (1.0 - hi) + lo * hi * y * y)).abs() < 1e-12);
        let k = BridgeKernel::new(a, 1.0).unwrap();
        let sq = PathMonomial::square(a).bridge_expectation(1.0, y).unwrap();
        prop_assert!((sq - (k.variance() + k.mean(y).powi(2))).abs() < 1e-12);
    }
}
