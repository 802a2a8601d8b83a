//! Conditional expectations: finite partitions with the pull-out property,
//! Gaussian and Brownian-bridge conditionals in closed form, and the
//! conditional measures `N` and `Q` seen through their action on statistics.
//!
//! Checks of `E^N(w_t | F_s)` and `E^Q(w_t | F_s)` are linear regressions on
//! `w_s`: both claimed conditional expectations are linear in the
//! conditioning variable, so the verdict is a slope test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{PathEnsemble, ScalarPath};
use crate::stats::{pairwise_sum, TestReport, Z_GATE};
use crate::vecspace::Vector;

/// Regressor variance at or below this makes a regression inconclusive.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// A finite sub-σ-algebra on the ensemble: each path belongs to one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    cells: Vec<usize>,
    count: usize,
}

impl Partition {
    /// `cells[k]` is the cell of path `k`; every id in `0..count` must occur.
    pub fn new(cells: Vec<usize>, count: usize) -> Result<Self> {
        let mut sizes = vec![0usize; count];
        for &c in &cells {
            if c >= count {
                return Err(Error::usage(format!("cell id {c} out of range 0..{count}")));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|n| *n == 0) {
            return Err(Error::usage(format!("partition cell {empty} is empty")));
        }
        Ok(Self { cells, count })
    }

    /// One cell holding everything.
    pub fn trivial(n: usize) -> Result<Self> {
        Self::new(vec![0; n], 1)
    }

    /// Every path alone in its cell.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    /// `k` equal-count bins by rank of `values` (ties broken by index). For
    /// `k = 2^a` the bins are nested across `a`.
    pub fn rank_bins(values: &[f64], k: usize) -> Result<Self> {
        let n = values.len();
        if k == 0 || k > n {
            return Err(Error::usage(format!(
                "cannot split {n} values into {k} nonempty bins"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let mut cells = vec![0; n];
        for (rank, &idx) in order.iter().enumerate() {
            cells[idx] = rank * k / n;
        }
        Self::new(cells, k)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.count
    }

    pub fn cell_of(&self, k: usize) -> usize {
        self.cells[k]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
}

fn check_samples(samples: &[Vector], part: &Partition) -> Result<usize> {
    if samples.len() != part.len() {
        return Err(Error::DimensionMismatch {
            expected: part.len(),
            found: samples.len(),
        });
    }
    let dim = samples.first().map_or(0, Vector::dim);
    if let Some(bad) = samples.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    Ok(dim)
}

/// Per-cell coordinate sums, in path order.
fn cell_sums(samples: &[Vector], part: &Partition, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; part.count];
    for (v, &c) in samples.iter().zip(&part.cells) {
        for (s, x) in sums[c].iter_mut().zip(v.coords()) {
            *s += x;
        }
    }
    sums
}

fn cell_sizes(part: &Partition) -> Vec<usize> {
    let mut sizes = vec![0usize; part.count];
    for &c in &part.cells {
        sizes[c] += 1;
    }
    sizes
}

/// `E(Φ | F)` on the empirical measure: each path gets its cell's mean.
pub fn cond_exp_partition(samples: &[Vector], part: &Partition) -> Result<Vec<Vector>> {
    let dim = check_samples(samples, part)?;
    let sums = cell_sums(samples, part, dim);
    let sizes = cell_sizes(part);
    let means: Vec<Vector> = sums
        .into_iter()
        .zip(&sizes)
        .map(|(s, n)| Vector::from_raw(s.into_iter().map(|x| x / *n as f64).collect()))
        .collect();
    Ok(part.cells.iter().map(|&c| means[c].clone()).collect())
}

/// Largest per-cell mismatch `|Σ_E out − Σ_E in|`, relative to
/// `max(1, Σ_E |in|)`: the defining equation of conditional expectation.
pub fn defining_equation_residual(
    inputs: &[Vector],
    outputs: &[Vector],
    part: &Partition,
) -> Result<f64> {
    let dim = check_samples(inputs, part)?;
    check_samples(outputs, part)?;
    let a = cell_sums(inputs, part, dim);
    let b = cell_sums(outputs, part, dim);
    let abs: Vec<Vector> = inputs
        .iter()
        .map(|v| Vector::from_raw(v.coords().iter().map(|x| x.abs()).collect()))
        .collect();
    let scale = cell_sums(&abs, part, dim);
    let mut worst: f64 = 0.0;
    for c in 0..part.count {
        for i in 0..dim {
            worst = worst.max((a[c][i] - b[c][i]).abs() / scale[c][i].max(1.0));
        }
    }
    Ok(worst)
}

/// Both sides of the pull-out identity `E(φΦ | F) = φ·E(Φ | F)` for a
/// cell-constant `φ`.
pub fn pullout(
    samples: &[Vector],
    phi: &[f64],
    part: &Partition,
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    check_samples(samples, part)?;
    if phi.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            found: phi.len(),
        });
    }
    let mut cell_value: Vec<Option<f64>> = vec![None; part.count];
    for (&p, &c) in phi.iter().zip(&part.cells) {
        match cell_value[c] {
            None => cell_value[c] = Some(p),
            Some(q) if q == p => {}
            Some(_) => return Err(Error::usage(format!("φ is not constant on cell {c}"))),
        }
    }
    let products: Vec<Vector> = samples.iter().zip(phi).map(|(v, p)| v.scaled(*p)).collect();
    let lhs = cond_exp_partition(&products, part)?;
    let rhs = cond_exp_partition(samples, part)?
        .into_iter()
        .zip(phi)
        .map(|(v, p)| v.scaled(*p))
        .collect();
    Ok((lhs, rhs))
}

/// Parameters of a jointly Gaussian pair `(z_t, z_u)`; `ρ` is their
/// correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub mu_t: f64,
    pub sigma_t: f64,
    pub mu_u: f64,
    pub sigma_u: f64,
    pub rho: f64,
}

impl GaussianPair {
    pub fn new(mu_t: f64, sigma_t: f64, mu_u: f64, sigma_u: f64, rho: f64) -> Result<Self> {
        if !(sigma_t > 0.0 && sigma_u > 0.0) {
            return Err(Error::usage("standard deviations must be positive"));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::usage(format!("correlation {rho} outside [-1, 1]")));
        }
        if ![mu_t, sigma_t, mu_u, sigma_u].iter().all(|x| x.is_finite()) {
            return Err(Error::Numeric("non-finite Gaussian parameter".into()));
        }
        Ok(Self {
            mu_t,
            sigma_t,
            mu_u,
            sigma_u,
            rho,
        })
    }

    /// `(w_t, w_u)` for a standard Brownian motion, `0 < t ≤ u`.
    pub fn brownian(t: f64, u: f64) -> Result<Self> {
        if !(t > 0.0 && t <= u) {
            return Err(Error::usage(format!(
                "need 0 < t ≤ u, got t = {t}, u = {u}"
            )));
        }
        Self::new(0.0, t.sqrt(), 0.0, u.sqrt(), (t / u).sqrt())
    }
}

/// `E(z_t | z_u) = μ_t + ρ·(σ_t/σ_u)·(z_u − μ_u)`.
pub fn gaussian_cond_exp(p: &GaussianPair, z_u: f64) -> f64 {
    p.mu_t + p.rho * (p.sigma_t / p.sigma_u) * (z_u - p.mu_u)
}

/// Law of `w_t` given `w_T`, `0 < t < T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeKernel {
    t: f64,
    horizon: f64,
}

impl BridgeKernel {
    pub fn new(t: f64, horizon: f64) -> Result<Self> {
        if !(t > 0.0 && t < horizon && horizon.is_finite()) {
            return Err(Error::Domain(format!(
                "bridge needs 0 < t < T, got t = {t}, T = {horizon}"
            )));
        }
        Ok(Self { t, horizon })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn mean(&self, w_terminal: f64) -> f64 {
        self.t / self.horizon * w_terminal
    }

    pub fn variance(&self) -> f64 {
        self.t * (self.horizon - self.t) / self.horizon
    }
}

/// `f_t(x | w_T) = √T / (√(T−t)·√(2πt)) · exp{−(x − w_T t/T)²·T / (2(T−t)t)}`.
pub fn bridge_density(k: &BridgeKernel, x: f64, w_terminal: f64) -> f64 {
    let (t, big_t) = (k.t, k.horizon);
    let norm = big_t.sqrt() / ((big_t - t).sqrt() * (2.0 * std::f64::consts::PI * t).sqrt());
    let dev = x - w_terminal * t / big_t;
    norm * (-(dev * dev) * big_t / (2.0 * (big_t - t) * t)).exp()
}

/// Product `w_{t_1}·…·w_{t_k}` of Brownian values; the empty product is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMonomial {
    times: Vec<f64>,
}

impl PathMonomial {
    pub fn new(times: Vec<f64>) -> Self {
        Self { times }
    }

    /// `w_t`.
    pub fn level(t: f64) -> Self {
        Self::new(vec![t])
    }

    /// `w_t²`.
    pub fn square(t: f64) -> Self {
        Self::new(vec![t, t])
    }

    /// `w_s·w_t`.
    pub fn product(s: f64, t: f64) -> Self {
        Self::new(vec![s, t])
    }

    pub fn degree(&self) -> usize {
        self.times.len()
    }

    /// `E(statistic | w_T = y)` from the Brownian-bridge law. Degrees above
    /// two are outside the closed-form catalog.
    pub fn bridge_expectation(&self, horizon: f64, y: f64) -> Result<f64> {
        if let Some(bad) = self.times.iter().find(|t| !(0.0..=horizon).contains(*t)) {
            return Err(Error::usage(format!("time {bad} outside [0, {horizon}]")));
        }
        match self.times.as_slice() {
            [] => Ok(1.0),
            [t] => Ok(t / horizon * y),
            [a, b] => {
                let (lo, hi) = if a <= b { (*a, *b) } else { (*b, *a) };
                Ok(lo * (horizon - hi) / horizon + lo * hi / (horizon * horizon) * y * y)
            }
            _ => Err(Error::Unsupported(format!(
                "no closed-form bridge conditional for a degree-{} monomial",
                self.degree()
            ))),
        }
    }
}

/// `∫_A φ dN = (1/count)·Σ_{k ∈ A} E(φ | w_T = w_T(k))`.
pub fn n_measure_integral(
    statistic: &PathMonomial,
    event: impl Fn(&ScalarPath) -> bool,
    ensemble: &PathEnsemble,
) -> Result<f64> {
    let horizon = ensemble.grid().horizon();
    // validate once even when A is empty
    statistic.bridge_expectation(horizon, 0.0)?;
    let terms = ensemble
        .paths()
        .iter()
        .filter(|p| event(p))
        .map(|p| statistic.bridge_expectation(horizon, p.terminal()))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&terms) / ensemble.count() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// OLS fit `y ≈ intercept + slope·x` with classical standard errors, checked
/// against `slope = target_slope` and `intercept = 0` at 3 SE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub label: String,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    pub target_slope: f64,
    pub residual_variance: f64,
    pub verdict: Verdict,
}

struct OlsFit {
    slope: f64,
    slope_se: f64,
    intercept: f64,
    intercept_se: f64,
    residuals: Vec<f64>,
    residual_variance: f64,
}

fn ols(x: &[f64], y: &[f64]) -> Option<OlsFit> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = pairwise_sum(x) / nf;
    let my = pairwise_sum(y) / nf;
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let sxx = pairwise_sum(&dx.iter().map(|d| d * d).collect::<Vec<_>>());
    if sxx / nf <= DEGENERATE_VARIANCE {
        return None;
    }
    let sxy = pairwise_sum(
        &dx.iter()
            .zip(y)
            .map(|(d, v)| d * (v - my))
            .collect::<Vec<_>>(),
    );
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - intercept - slope * a)
        .collect();
    let sse = pairwise_sum(&residuals.iter().map(|e| e * e).collect::<Vec<_>>());
    let sigma2 = sse / (nf - 2.0);
    Some(OlsFit {
        slope,
        slope_se: (sigma2 / sxx).sqrt(),
        intercept,
        intercept_se: (sigma2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        residuals,
        residual_variance: sigma2,
    })
}

fn within(estimate: f64, target: f64, se: f64) -> bool {
    TestReport::new("", estimate, target, se, Z_GATE).pass
}

fn regression_report(
    label: String,
    x: &[f64],
    y: &[f64],
    target_slope: f64,
) -> (RegressionReport, Option<Vec<f64>>) {
    match ols(x, y) {
        None => {
            let mean = pairwise_sum(y) / y.len() as f64;
            (
                RegressionReport {
                    label,
                    slope: f64::NAN,
                    slope_se: f64::NAN,
                    intercept: mean,
                    intercept_se: f64::NAN,
                    target_slope,
                    residual_variance: f64::NAN,
                    verdict: Verdict::Inconclusive,
                },
                None,
            )
        }
        Some(fit) => {
            let ok = within(fit.slope, target_slope, fit.slope_se)
                && within(fit.intercept, 0.0, fit.intercept_se);
            (
                RegressionReport {
                    label,
                    slope: fit.slope,
                    slope_se: fit.slope_se,
                    intercept: fit.intercept,
                    intercept_se: fit.intercept_se,
                    target_slope,
                    residual_variance: fit.residual_variance,
                    verdict: if ok { Verdict::Pass } else { Verdict::Fail },
                },
                Some(fit.residuals),
            )
        }
    }
}

fn check_times(s: f64, t: f64, ensemble: &PathEnsemble) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let horizon = ensemble.grid().horizon();
    if !(s >= 0.0 && s < t && t <= horizon) {
        return Err(Error::usage(format!(
            "need 0 ≤ s < t ≤ T, got s = {s}, t = {t}, T = {horizon}"
        )));
    }
    Ok((ensemble.values_at(s)?, ensemble.terminal_values(), horizon))
}

/// Regresses `ξ = (t/T)·w_T = E^P(w_t | w_T)` on `w_s`. The verdict confirms
/// `E^N(w_t | F_s) = (t/T)·w_s`, i.e. slope `t/T` and zero intercept.
pub fn n_martingale_check(s: f64, t: f64, ensemble: &PathEnsemble) -> Result<RegressionReport> {
    let (w_s, w_end, horizon) = check_times(s, t, ensemble)?;
    let ratio = t / horizon;
    let xi: Vec<f64> = w_end.iter().map(|y| ratio * y).collect();
    Ok(regression_report(format!("E^N(w_{t}|F_{s})"), &w_s, &xi, ratio).0)
}

/// Regresses `ξ = E^P(w_t | w_T = α·w_T) = (t/T)·α·w_T` on `w_s`. The verdict is
/// the martingale claim `E^Q(w_t | F_s) = w_s`: slope 1, zero intercept.
pub fn q_kernel_cond(
    alpha: f64,
    s: f64,
    t: f64,
    ensemble: &PathEnsemble,
) -> Result<RegressionReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::usage(format!("α must be positive, got {alpha}")));
    }
    let (w_s, w_end, horizon) = check_times(s, t, ensemble)?;
    let scale = t / horizon * alpha;
    let xi: Vec<f64> = w_end.iter().map(|y| scale * y).collect();
    Ok(regression_report(format!("E^Q[alpha={alpha}](w_{t}|F_{s})"), &w_s, &xi, 1.0).0)
}

/// Regression of `w_t` on `w_T` (slope `t/T`) and the conditional variance
/// `t(T−t)/T` of the residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRegression {
    pub regression: RegressionReport,
    pub conditional_variance: TestReport,
}

pub fn bridge_regression(t: f64, ensemble: &PathEnsemble) -> Result<BridgeRegression> {
    let horizon = ensemble.grid().horizon();
    let kernel = BridgeKernel::new(t, horizon)?;
    let w_t = ensemble.values_at(t)?;
    let w_end = ensemble.terminal_values();
    let (regression, residuals) =
        regression_report(format!("E^P(w_{t}|w_T)"), &w_end, &w_t, t / horizon);
    let residuals =
        residuals.ok_or_else(|| Error::Numeric("terminal values have no spread".into()))?;
    let n = residuals.len() as f64;
    let sq: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let var = pairwise_sum(&sq) / n;
    let dev: Vec<f64> = sq.iter().map(|e| (e - var).powi(2)).collect();
    let se = (pairwise_sum(&dev) / n).sqrt() / n.sqrt();
    Ok(BridgeRegression {
        regression,
        conditional_variance: TestReport::new(
            "conditional_variance",
            var,
            kernel.variance(),
            se,
            Z_GATE,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{sample_brownian, TimeGrid};

    fn vecs(rows: &[&[f64]]) -> Vec<Vector> {
        rows.iter()
            .map(|r| Vector::new(r.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0, 2, 2], 3).is_err());
        assert!(Partition::new(vec![0, 3], 3).is_err());
        assert!(Partition::rank_bins(&[1.0, 2.0], 3).is_err());
        let p = Partition::rank_bins(&[0.3, -1.0, 2.0, 0.0], 2).unwrap();
        assert_eq!(p.cells(), &[1, 0, 1, 0]);
    }

    #[test]
    fn rank_bins_are_nested() {
        let vals: Vec<f64> = (0..103).map(|i| ((i * 7919) % 103) as f64).collect();
        let fine = Partition::rank_bins(&vals, 8).unwrap();
        let coarse = Partition::rank_bins(&vals, 2).unwrap();
        for k in 0..vals.len() {
            assert_eq!(fine.cell_of(k) / 4, coarse.cell_of(k));
        }
    }

    #[test]
    fn trivial_and_full_information() {
        let x = vecs(&[&[1.0, 2.0], &[3.0, -2.0], &[5.0, 6.0]]);
        let out = cond_exp_partition(&x, &Partition::trivial(3).unwrap()).unwrap();
        for v in &out {
            assert!((v.coords()[0] - 3.0).abs() < 1e-15 && (v.coords()[1] - 2.0).abs() < 1e-15);
        }
        let out = cond_exp_partition(&x, &Partition::singletons(3).unwrap()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn pullout_examples() {
        let x = vecs(&[&[1.0], &[3.0], &[5.0], &[7.0]]);
        let part = Partition::new(vec![0, 0, 1, 1], 2).unwrap();
        let (l, r) = pullout(&x, &[1.0; 4], &part).unwrap();
        let direct = cond_exp_partition(&x, &part).unwrap();
        assert_eq!(l, direct);
        assert_eq!(r, direct);
        let (l, r) = pullout(&x, &[0.0; 4], &part).unwrap();
        assert!(l.iter().chain(&r).all(|v| v.coords()[0] == 0.0));
        assert!(pullout(&x, &[1.0, 2.0, 3.0, 3.0], &part).is_err());
    }

    #[test]
    fn pullout_small_exact_instance() {
        // Dyadic rationals keep every operation exact.
        let x = vecs(&[&[0.5, 1.0], &[1.5, -2.0], &[2.0, 0.25], &[-1.0, 4.0]]);
        let part = Partition::new(vec![0, 0, 1, 1], 2).unwrap();
        let phi = [2.0, 2.0, -0.5, -0.5];
        let (l, r) = pullout(&x, &phi, &part).unwrap();
        let expected = vecs(&[
            &[2.0, -1.0],
            &[2.0, -1.0],
            &[-0.25, -1.0625],
            &[-0.25, -1.0625],
        ]);
        assert_eq!(l, expected);
        assert_eq!(r, expected);
    }

    #[test]
    fn gaussian_examples() {
        let p = GaussianPair::new(1.5, 2.0, -3.0, 0.5, 0.0).unwrap();
        assert_eq!(gaussian_cond_exp(&p, 100.0), 1.5);
        let b = GaussianPair::brownian(0.25, 1.0).unwrap();
        assert!((b.rho - 0.5).abs() < 1e-15);
        assert!((gaussian_cond_exp(&b, 2.0) - 0.5).abs() < 1e-15);
        let p = GaussianPair::new(0.7, 1.0, 2.0, 3.0, 0.9).unwrap();
        assert_eq!(gaussian_cond_exp(&p, 2.0), 0.7);
        assert!(GaussianPair::new(0.0, 0.0, 0.0, 1.0, 0.5).is_err());
        assert!(GaussianPair::new(0.0, 1.0, 0.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn bridge_density_examples() {
        let k = BridgeKernel::new(0.5, 1.0).unwrap();
        let v = bridge_density(&k, 0.0, 0.0);
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.79788).abs() < 1e-5);
        let k = BridgeKernel::new(0.3, 2.0).unwrap();
        let m = k.mean(1.1);
        for d in [0.01, 0.3, 1.7] {
            assert!(
                (bridge_density(&k, m + d, 1.1) - bridge_density(&k, m - d, 1.1)).abs() < 1e-12
            );
        }
        assert!(matches!(BridgeKernel::new(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(BridgeKernel::new(1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn monomial_catalog() {
        let m = PathMonomial::level(0.5);
        assert_eq!(m.bridge_expectation(1.0, 2.0).unwrap(), 1.0);
        // E(w_t² | w_T = y) = t(T−t)/T + (t/T)²y²
        let sq = PathMonomial::square(0.5)
            .bridge_expectation(1.0, 2.0)
            .unwrap();
        assert!((sq - (0.25 + 1.0)).abs() < 1e-15);
        let pr = PathMonomial::product(0.25, 0.5)
            .bridge_expectation(1.0, 2.0)
            .unwrap();
        assert!((pr - (0.125 + 0.5)).abs() < 1e-15);
        assert!(matches!(
            PathMonomial::new(vec![0.2, 0.3, 0.4]).bridge_expectation(1.0, 1.0),
            Err(Error::Unsupported(_))
        ));
        assert!(PathMonomial::level(2.0)
            .bridge_expectation(1.0, 1.0)
            .is_err());
    }

    #[test]
    fn n_measure_edge_cases() {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let e = sample_brownian(g, 3, 500).unwrap();
        assert_eq!(
            n_measure_integral(&PathMonomial::level(0.5), |_| false, &e).unwrap(),
            0.0
        );
        let at_end = n_measure_integral(&PathMonomial::level(1.0), |_| true, &e).unwrap();
        let plain = e.terminal_values().iter().sum::<f64>() / 500.0;
        assert!((at_end - plain).abs() < 1e-14);
        assert!(matches!(
            n_measure_integral(&PathMonomial::new(vec![0.5; 3]), |_| false, &e),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn regression_preconditions() {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let e = sample_brownian(g, 3, 200).unwrap();
        assert!(n_martingale_check(0.5, 0.25, &e).is_err());
        assert!(q_kernel_cond(0.0, 0.25, 0.5, &e).is_err());
        assert!(q_kernel_cond(1.0, 0.3, 0.5, &e).is_err());
        let r = n_martingale_check(0.0, 0.5, &e).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.intercept.abs() < 0.2);
    }

    #[test]
    fn horizon_recovers_martingale() {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let e = sample_brownian(g, 9, 2000).unwrap();
        let n = n_martingale_check(0.25, 1.0, &e).unwrap();
        assert!((n.slope - 1.0).abs() < 3.0 * n.slope_se);
        assert_eq!(n.verdict, Verdict::Pass);
        let q = q_kernel_cond(1.0, 0.25, 1.0, &e).unwrap();
        assert_eq!(q.verdict, Verdict::Pass);
    }
}
