//! Weighted estimators, Brownian-law moment checks and martingale z-tests.
//!
//! Weights are importance weights for a change of measure; every estimate is
//! self-normalized (`Σ w v / Σ w`). Standard errors use the influence-function
//! (delta-method) linearization `se = √(Σ w² ψ²) / Σ w`, which reduces to the
//! usual `σ/√n` when the weights are uniform.
//!
//! All sums go through [`pairwise_sum`], whose split points depend only on the
//! slice length, so results are bit-identical for identical input order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default z gate: about 0.997 two-sided coverage under the null.
pub const Z_GATE: f64 = 3.0;

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise (tree) summation with a fixed topology.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn sum_map(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let buf: Vec<f64> = (0..n).map(f).collect();
    pairwise_sum(&buf)
}

/// Values with nonnegative weights; `None` means uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample<'a> {
    values: &'a [f64],
    weights: Option<&'a [f64]>,
}

impl<'a> WeightedSample<'a> {
    pub fn new(values: &'a [f64], weights: Option<&'a [f64]>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::usage("weighted sample is empty"));
        }
        if let Some(w) = weights {
            if w.len() != values.len() {
                return Err(Error::DimensionMismatch {
                    expected: values.len(),
                    found: w.len(),
                });
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::usage("weights must be finite and nonnegative"));
            }
            if pairwise_sum(w) <= 0.0 {
                return Err(Error::usage("weights sum to zero"));
            }
        }
        Ok(Self { values, weights })
    }

    pub fn uniform(values: &'a [f64]) -> Result<Self> {
        Self::new(values, None)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }

    #[inline]
    fn w(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn weight_sum(&self) -> f64 {
        match self.weights {
            Some(w) => pairwise_sum(w),
            None => self.values.len() as f64,
        }
    }

    /// Weighted mean of `f(i)`.
    fn mean_of(&self, wsum: f64, f: impl Fn(usize) -> f64) -> f64 {
        sum_map(self.len(), |i| self.w(i) * f(i)) / wsum
    }

    /// `√(Σ w_i² ψ_i²) / Σ w`.
    fn influence_se(&self, wsum: f64, psi: impl Fn(usize) -> f64) -> f64 {
        sum_map(self.len(), |i| {
            let a = self.w(i) * psi(i);
            a * a
        })
        .sqrt()
            / wsum
    }
}

/// Self-normalized mean and its linearized standard error.
pub fn wmean(s: &WeightedSample<'_>) -> Result<(f64, f64)> {
    let wsum = s.weight_sum();
    if wsum <= 0.0 {
        return Err(Error::usage("weights sum to zero"));
    }
    let m = s.mean_of(wsum, |i| s.values[i]);
    let se = s.influence_se(wsum, |i| s.values[i] - m);
    Ok((m, se))
}

/// Self-normalized mean with a delete-one jackknife standard error; a
/// cross-check for [`wmean`].
pub fn wmean_jackknife(s: &WeightedSample<'_>) -> Result<(f64, f64)> {
    let n = s.len();
    if n < 2 {
        return Err(Error::usage("jackknife needs at least two values"));
    }
    let wsum = s.weight_sum();
    let wvsum = sum_map(n, |i| s.w(i) * s.values[i]);
    let mean = wvsum / wsum;
    let mut loo = Vec::with_capacity(n);
    for i in 0..n {
        let rest = wsum - s.w(i);
        if rest <= 0.0 {
            return Err(Error::usage("a single value carries all the weight"));
        }
        loo.push((wvsum - s.w(i) * s.values[i]) / rest);
    }
    let loo_mean = pairwise_sum(&loo) / n as f64;
    let dev: Vec<f64> = loo.iter().map(|x| (x - loo_mean).powi(2)).collect();
    let se = ((n - 1) as f64 / n as f64 * pairwise_sum(&dev)).sqrt();
    Ok((mean, se))
}

/// `(Σu)² / Σu²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s = pairwise_sum(weights);
    let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    s * s / pairwise_sum(&sq)
}

/// One z-test: `z = (estimate − target) / se`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub se: f64,
    /// Infinite (serialized as `null`) when `se = 0` and the estimate misses
    /// the target.
    pub z: f64,
    pub z_gate: f64,
    pub pass: bool,
}

impl TestReport {
    pub fn new(name: impl Into<String>, estimate: f64, target: f64, se: f64, z_gate: f64) -> Self {
        let diff = estimate - target;
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        Self {
            name: name.into(),
            estimate,
            target,
            se,
            z,
            z_gate,
            pass: z.abs() <= z_gate,
        }
    }
}

/// Family-wise summary of a suite of z-tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub total: usize,
    pub failed: usize,
    pub pass: bool,
}

pub fn summarize<'a>(reports: impl IntoIterator<Item = &'a TestReport>) -> SuiteSummary {
    let (mut total, mut failed) = (0, 0);
    for r in reports {
        total += 1;
        if !r.pass {
            failed += 1;
        }
    }
    SuiteSummary {
        total,
        failed,
        pass: failed == 0,
    }
}

/// Increments of a process over `[s, t]`, plus the increment over `[0, s]`
/// used for the cross-covariance (independence) test.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementPair {
    pub s: f64,
    pub t: f64,
    pub earlier: Vec<f64>,
    pub increment: Vec<f64>,
}

/// Checks that increments look like `N(0, t − s)` and are uncorrelated with
/// the past: mean, variance, skew, excess kurtosis, cross-covariance.
pub fn brownian_law_check(
    pairs: &[IncrementPair],
    weights: Option<&[f64]>,
) -> Result<Vec<TestReport>> {
    let mut out = Vec::with_capacity(5 * pairs.len());
    for p in pairs {
        if p.earlier.len() != p.increment.len() {
            return Err(Error::DimensionMismatch {
                expected: p.increment.len(),
                found: p.earlier.len(),
            });
        }
        let x = WeightedSample::new(&p.increment, weights)?;
        let wsum = x.weight_sum();
        let v = &p.increment;
        let m = x.mean_of(wsum, |i| v[i]);
        let m2 = x.mean_of(wsum, |i| (v[i] - m).powi(2));
        let m3 = x.mean_of(wsum, |i| (v[i] - m).powi(3));
        let m4 = x.mean_of(wsum, |i| (v[i] - m).powi(4));
        let sd = m2.sqrt();
        let skew = m3 / (m2 * sd);
        let kurt = m4 / (m2 * m2);
        let z = |i: usize| (v[i] - m) / sd;
        let label = |what: &str| format!("{what}[{},{}]", p.s, p.t);

        out.push(TestReport::new(
            label("mean"),
            m,
            0.0,
            x.influence_se(wsum, |i| v[i] - m),
            Z_GATE,
        ));
        out.push(TestReport::new(
            label("variance"),
            m2,
            p.t - p.s,
            x.influence_se(wsum, |i| (v[i] - m).powi(2) - m2),
            Z_GATE,
        ));
        out.push(TestReport::new(
            label("skew"),
            skew,
            0.0,
            x.influence_se(wsum, |i| {
                let zi = z(i);
                zi.powi(3) - skew - 3.0 * zi - 1.5 * skew * (zi * zi - 1.0)
            }),
            Z_GATE,
        ));
        out.push(TestReport::new(
            label("excess_kurtosis"),
            kurt - 3.0,
            0.0,
            x.influence_se(wsum, |i| {
                let zi = z(i);
                zi.powi(4) - kurt - 4.0 * skew * zi - 2.0 * kurt * (zi * zi - 1.0)
            }),
            Z_GATE,
        ));
        let a = &p.earlier;
        let ma = x.mean_of(wsum, |i| a[i]);
        let cov = x.mean_of(wsum, |i| (a[i] - ma) * (v[i] - m));
        out.push(TestReport::new(
            label("cross_covariance"),
            cov,
            0.0,
            x.influence_se(wsum, |i| (a[i] - ma) * (v[i] - m) - cov),
            Z_GATE,
        ));
    }
    Ok(out)
}

/// `F_s`-measurable test statistics `g(w_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsStatistic {
    One,
    Level,
    Square,
    Sign,
}

impl FsStatistic {
    pub const CATALOG: [FsStatistic; 4] = [Self::One, Self::Level, Self::Square, Self::Sign];

    pub fn eval(self, w_s: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Level => w_s,
            Self::Square => w_s * w_s,
            Self::Sign => {
                if w_s > 0.0 {
                    1.0
                } else if w_s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::One => "1",
            Self::Level => "w_s",
            Self::Square => "w_s^2",
            Self::Sign => "sign(w_s)",
        }
    }
}

/// Martingale z-tests `E[(v_t − v_s)·g(w_s)] = 0` for every statistic in
/// `catalog`. `w_s` is the driving path at `s` (so `g` only sees `F_s`).
pub fn martingale_z(
    at_s: &[f64],
    at_t: &[f64],
    w_s: &[f64],
    catalog: &[FsStatistic],
    weights: Option<&[f64]>,
) -> Result<Vec<(FsStatistic, TestReport)>> {
    if at_s.len() != at_t.len() || w_s.len() != at_t.len() {
        return Err(Error::DimensionMismatch {
            expected: at_t.len(),
            found: if at_s.len() != at_t.len() {
                at_s.len()
            } else {
                w_s.len()
            },
        });
    }
    catalog
        .iter()
        .map(|g| {
            let prod: Vec<f64> = (0..at_t.len())
                .map(|i| (at_t[i] - at_s[i]) * g.eval(w_s[i]))
                .collect();
            let (est, se) = wmean(&WeightedSample::new(&prod, weights)?)?;
            Ok((
                *g,
                TestReport::new(format!("martingale[g={}]", g.tag()), est, 0.0, se, Z_GATE),
            ))
        })
        .collect()
}
