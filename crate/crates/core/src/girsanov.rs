//! Exponential-martingale weights, the measure change `dQ/dP = y_T` as
//! self-normalized reweighting, the shifted Brownian motion `w̃`, and the
//! drift-cancelling link `Ψ = r·Φ`.
//!
//! With `r` chosen so that `Ψ(t) = r(t)·Φ(t)`, the Itô–Pettis process
//! `A = ∫Ψ ds + ∫Φ dw` equals `∫Φ dw̃` node by node on the grid, and under the
//! reweighted measure it is a martingale. [`girsanov_certify`] checks the
//! algebraic identity exactly and the martingale/Brownian-law claims with
//! z-tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{
    ito_integral, Integrand, ItoPettisKernel, Quadrature, ScalarField, VectorField,
};
use crate::paths::{PathEnsemble, ScalarPath, TimeGrid};
use crate::stats::{
    brownian_law_check, effective_sample_size, martingale_z, pairwise_sum, summarize, FsStatistic,
    IncrementPair, SuiteSummary, TestReport,
};
use crate::vecspace::{norm_of, DualFamily, NormTag};

/// Relative residual allowed when checking `Ψ(t) = r(t)·Φ(t)`.
pub const DEFAULT_PROP_TOL: f64 = 1e-9;

/// ESS below this fraction of the path count marks the weights degenerate.
pub const DEGENERATE_ESS_FRACTION: f64 = 0.01;

/// Upper bound on `Σ r(t_i)²·dt`, the checkable stand-in for Novikov's
/// condition (beyond it `e^{∫r²}` overflows).
pub const NOVIKOV_LIMIT: f64 = 700.0;

/// Gate for the grid drift-cancellation residual.
pub const DRIFT_RESIDUAL_TOL: f64 = 1e-10;

/// `y_t = exp(−½∫θ² ds − ∫θ dw)`, stored as its logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpMartingale {
    log_values: ScalarPath,
}

impl ExpMartingale {
    pub fn log_path(&self) -> &ScalarPath {
        &self.log_values
    }

    pub fn log_terminal(&self) -> f64 {
        self.log_values.terminal()
    }

    /// `y(t_k)`; fails if any value overflows. The log path stays available.
    pub fn values(&self) -> Result<Vec<f64>> {
        self.log_values
            .values()
            .iter()
            .map(|l| {
                let y = l.exp();
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::Numeric(format!("exp({l}) overflows")))
                }
            })
            .collect()
    }
}

fn log_exp_martingale(theta: &[f64], dt: f64, w: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.len());
    let (mut energy, mut ito) = (0.0, 0.0);
    out.push(0.0);
    for i in 0..w.len() - 1 {
        energy += theta[i] * theta[i];
        ito += theta[i] * (w[i + 1] - w[i]);
        out.push(-0.5 * energy * dt - ito);
    }
    out
}

pub fn exp_martingale(theta: &ScalarField, w: &ScalarPath) -> Result<ExpMartingale> {
    let theta_nodes = theta.node_values(w.grid())?;
    let logs = log_exp_martingale(&theta_nodes, w.grid().dt(), w.values());
    if logs.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric(
            "log exponential martingale is not finite".into(),
        ));
    }
    Ok(ExpMartingale {
        log_values: ScalarPath::new(*w.grid(), logs)?,
    })
}

/// Per-path Radon–Nikodym weights `y_T`, kept in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureWeights {
    log_weights: Vec<f64>,
    /// `log Σ_k y_T(k)`.
    log_normalizer: f64,
    ess: f64,
    degenerate: bool,
}

impl MeasureWeights {
    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::usage("no weights"));
        }
        if log_weights.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("non-finite log weight".into()));
        }
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let u: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        let log_normalizer = max + pairwise_sum(&u).ln();
        let ess = effective_sample_size(&u);
        let degenerate = ess < DEGENERATE_ESS_FRACTION * log_weights.len() as f64;
        Ok(Self {
            log_weights,
            log_normalizer,
            ess,
            degenerate,
        })
    }

    /// `P` itself: every weight is one.
    pub fn uniform(count: usize) -> Result<Self> {
        Self::from_log_weights(vec![0.0; count])
    }

    pub fn count(&self) -> usize {
        self.log_weights.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// `u_k = exp(log y_k − max)`; self-normalized estimators only need these.
    pub fn scaled(&self) -> Vec<f64> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.log_weights.iter().map(|l| (l - max).exp()).collect()
    }

    /// Unnormalized mean `(1/n)·Σ y_T`, the `E^P y_T = 1` surrogate.
    pub fn weight_mean(&self) -> f64 {
        (self.log_normalizer - (self.count() as f64).ln()).exp()
    }

    /// Monte Carlo standard error of [`MeasureWeights::weight_mean`].
    pub fn weight_mean_se(&self) -> f64 {
        let mean = self.weight_mean();
        let dev: Vec<f64> = self
            .log_weights
            .iter()
            .map(|l| (l.exp() - mean).powi(2))
            .collect();
        let n = self.count() as f64;
        (pairwise_sum(&dev) / n).sqrt() / n.sqrt()
    }
}

/// `log y_T(θ)` on every path of the ensemble.
pub fn weights_from(theta: &ScalarField, ensemble: &PathEnsemble) -> Result<MeasureWeights> {
    let grid = ensemble.grid();
    let theta_nodes = theta.node_values(grid)?;
    let logs: Vec<f64> = ensemble
        .paths()
        .par_iter()
        .map(|p| log_terminal(&theta_nodes, grid.dt(), p.values()))
        .collect();
    MeasureWeights::from_log_weights(logs)
}

fn log_terminal(theta: &[f64], dt: f64, w: &[f64]) -> f64 {
    let (mut energy, mut ito) = (0.0, 0.0);
    for i in 0..w.len() - 1 {
        energy += theta[i] * theta[i];
        ito += theta[i] * (w[i + 1] - w[i]);
    }
    -0.5 * energy * dt - ito
}

/// `w̃(t_k) = w(t_k) + Σ_{i<k} r(t_i)·dt`.
pub fn shift_brownian(w: &ScalarPath, r: &ScalarField) -> Result<ScalarPath> {
    let r_nodes = r.node_values(w.grid())?;
    ScalarPath::new(*w.grid(), shifted(w.values(), &r_nodes, w.grid().dt()))
}

fn shifted(w: &[f64], r: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.len());
    let mut running = 0.0;
    out.push(w[0]);
    for k in 1..w.len() {
        running += r[k - 1];
        out.push(w[k] + running * dt);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scalar link with `Ψ(t) = r(t)·Φ(t)` at every node.
///
/// `r(t) = ⟨Ψ,Φ⟩/⟨Φ,Φ⟩`, accepted when `‖Ψ − rΦ‖ ≤ prop_tol·‖Ψ‖`. Returns a
/// constant field when the ratio is the same at every node.
pub fn drift_cancel_r(
    psi: &VectorField,
    phi: &VectorField,
    grid: &TimeGrid,
    prop_tol: f64,
) -> Result<ScalarField> {
    if psi.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.dim(),
            found: psi.dim(),
        });
    }
    let mut r = Vec::with_capacity(grid.len());
    for t in grid.times() {
        let (p, f) = (psi.eval(t), phi.eval(t));
        let (pp, ff) = (dot(&p, &p), dot(&f, &f));
        if !(pp.is_finite() && ff.is_finite()) {
            return Err(Error::Numeric(format!(
                "drift or diffusion not finite at t = {t}"
            )));
        }
        if pp == 0.0 {
            r.push(0.0);
            continue;
        }
        if ff == 0.0 {
            return Err(Error::NoValidDrift {
                t,
                residual: f64::INFINITY,
            });
        }
        let ratio = dot(&p, &f) / ff;
        let residual = proportionality_residual(&p, &f, ratio);
        if residual > prop_tol {
            return Err(Error::NoValidDrift { t, residual });
        }
        r.push(ratio);
    }
    if r.iter().all(|x| *x == r[0]) {
        Ok(ScalarField::constant(r[0]))
    } else {
        ScalarField::tabulated(*grid, r)
    }
}

/// `‖Ψ − rΦ‖ / ‖Ψ‖` (zero when `Ψ = 0` and `rΦ = 0`).
fn proportionality_residual(psi: &[f64], phi: &[f64], r: f64) -> f64 {
    let diff: Vec<f64> = psi.iter().zip(phi).map(|(p, f)| p - r * f).collect();
    let num = dot(&diff, &diff).sqrt();
    let den = dot(psi, psi).sqrt();
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Drift `Ψ`, diffusion `Φ` and link `r` on one grid.
#[derive(Debug, Clone)]
pub struct GirsanovSetup {
    psi: VectorField,
    phi: VectorField,
    r: ScalarField,
    grid: TimeGrid,
    /// Largest relative residual of `Ψ = rΦ` over the nodes.
    link_residual: f64,
}

impl GirsanovSetup {
    /// Derives `r` with [`drift_cancel_r`].
    pub fn auto(psi: VectorField, phi: VectorField, grid: TimeGrid, prop_tol: f64) -> Result<Self> {
        let r = drift_cancel_r(&psi, &phi, &grid, prop_tol)?;
        Self::new(psi, phi, r, grid, prop_tol)
    }

    /// Uses the given `r` and rejects it unless `Ψ = rΦ` within `prop_tol`.
    pub fn new(
        psi: VectorField,
        phi: VectorField,
        r: ScalarField,
        grid: TimeGrid,
        prop_tol: f64,
    ) -> Result<Self> {
        let setup = Self::unchecked(psi, phi, r, grid)?;
        if setup.link_residual > prop_tol {
            let t = setup.worst_link_node();
            return Err(Error::NoValidDrift {
                t,
                residual: setup.link_residual,
            });
        }
        Ok(setup)
    }

    /// Accepts any `r` passing the energy check; `Ψ = rΦ` is only measured.
    /// Used for controls where the drift is not supposed to cancel.
    pub fn unchecked(
        psi: VectorField,
        phi: VectorField,
        r: ScalarField,
        grid: TimeGrid,
    ) -> Result<Self> {
        if psi.dim() != phi.dim() {
            return Err(Error::DimensionMismatch {
                expected: phi.dim(),
                found: psi.dim(),
            });
        }
        let energy = r.grid_energy(&grid)?;
        if energy >= NOVIKOV_LIMIT {
            return Err(Error::Numeric(format!(
                "Σ r² dt = {energy} exceeds the Novikov surrogate limit {NOVIKOV_LIMIT}"
            )));
        }
        let link_residual = grid
            .times()
            .map(|t| proportionality_residual(&psi.eval(t), &phi.eval(t), r.eval(t)))
            .fold(0.0, f64::max);
        Ok(Self {
            psi,
            phi,
            r,
            grid,
            link_residual,
        })
    }

    fn worst_link_node(&self) -> f64 {
        self.grid
            .times()
            .find(|t| {
                proportionality_residual(&self.psi.eval(*t), &self.phi.eval(*t), self.r.eval(*t))
                    == self.link_residual
            })
            .unwrap_or(0.0)
    }

    pub fn psi(&self) -> &VectorField {
        &self.psi
    }

    pub fn phi(&self) -> &VectorField {
        &self.phi
    }

    pub fn r(&self) -> &ScalarField {
        &self.r
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn link_residual(&self) -> f64 {
        self.link_residual
    }
}

/// Which measure the certification tests run under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureChoice {
    /// `Q` with `dQ/dP = y_T(r)`.
    Girsanov,
    /// `P` itself (all weights one); the negative control.
    Uniform,
}

/// One martingale z-test of `f_j(A)` between nodes `s < t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleZScore {
    pub functional: usize,
    pub s: f64,
    pub t: f64,
    pub statistic: String,
    pub estimate: f64,
    /// `(1/n)·Σ y_k·X_k`, reported next to the self-normalized estimate.
    pub unnormalized_estimate: f64,
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub measure: MeasureChoice,
    pub seed: u64,
    pub paths: usize,
    pub weight_mean: f64,
    pub weight_mean_se: f64,
    pub ess: f64,
    pub degenerate_weights: bool,
    pub link_residual: f64,
    pub drift_residual: f64,
    pub drift_residual_norm: NormTag,
    pub z_scores: Vec<MartingaleZScore>,
    pub law_tests: Vec<TestReport>,
    pub summary: SuiteSummary,
    pub inconclusive: bool,
    pub pass: bool,
}

impl GirsanovReport {
    /// Largest `|z|` over martingale tests using the statistic `g = 1`.
    pub fn max_abs_z_for(&self, statistic: FsStatistic) -> f64 {
        self.z_scores
            .iter()
            .filter(|z| z.statistic == statistic.tag())
            .map(|z| z.z.abs())
            .fold(0.0, f64::max)
    }
}

/// Validates `(s, t)` node pairs with `0 ≤ s < t ≤ T` and returns node indices.
pub fn node_pairs(grid: &TimeGrid, pairs: &[(f64, f64)]) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|&(s, t)| {
            let (i, j) = (grid.node_index(s)?, grid.node_index(t)?);
            if i >= j {
                return Err(Error::usage(format!(
                    "node pair requires s < t, got ({s}, {t})"
                )));
            }
            Ok((i, j))
        })
        .collect()
}

/// Per-path quantities the certification needs.
struct PathSummary {
    residual: f64,
    log_weight: f64,
    /// Per pair: `w_s`, `w̃_s`, `w̃_t`, then `f_j(A(t)) − f_j(A(s))` per functional.
    per_pair: Vec<f64>,
}

/// Runs the drift-removal certification over an ensemble.
///
/// Reports (a) the grid residual `max ‖A(t) − Σ Φ(t_i)Δw̃_i‖`, (b) martingale
/// z-scores of `f_j(A)` for every functional, pair and `F_s` statistic, and
/// (c) Brownian-law tests of `w̃` increments, all under `measure`.
pub fn girsanov_certify(
    setup: &GirsanovSetup,
    ensemble: &PathEnsemble,
    family: &DualFamily,
    measure: MeasureChoice,
    pairs: &[(f64, f64)],
    norm: NormTag,
) -> Result<GirsanovReport> {
    let grid = *ensemble.grid();
    if grid != setup.grid {
        return Err(Error::usage("ensemble and setup use different grids"));
    }
    let idx = node_pairs(&grid, pairs)?;
    let process =
        ItoPettisKernel::new(Some(&setup.psi), &setup.phi, grid, family, Quadrature::Grid)?;
    let shifted_integral = ItoPettisKernel::new(None, &setup.phi, grid, family, Quadrature::Grid)?;
    let r_nodes = setup.r.node_values(&grid)?;
    let m = family.len();
    let stride = 3 + m;

    let summaries: Vec<PathSummary> = ensemble
        .paths()
        .par_iter()
        .map(|w| -> Result<PathSummary> {
            let a = process.process(w)?;
            let w_tilde = ScalarPath::from_raw(grid, shifted(w.values(), &r_nodes, grid.dt()));
            let b = shifted_integral.stochastic(&w_tilde)?;
            let mut residual: f64 = 0.0;
            let mut diff = vec![0.0; a.dim()];
            for (x, y) in a.nodes().zip(b.nodes()) {
                for ((d, p), q) in diff.iter_mut().zip(x).zip(y) {
                    *d = p - q;
                }
                residual = residual.max(norm_of(norm, &diff));
            }
            let mut per_pair = Vec::with_capacity(idx.len() * stride);
            for &(i, j) in &idx {
                per_pair.push(w.values()[i]);
                per_pair.push(w_tilde.values()[i]);
                per_pair.push(w_tilde.values()[j]);
                for f in family.members() {
                    per_pair.push(f.apply_unchecked(a.node(j)) - f.apply_unchecked(a.node(i)));
                }
            }
            Ok(PathSummary {
                residual,
                log_weight: log_terminal(&r_nodes, grid.dt(), w.values()),
                per_pair,
            })
        })
        .collect::<Result<_>>()?;

    let drift_residual = summaries.iter().map(|s| s.residual).fold(0.0, f64::max);
    let weights = match measure {
        MeasureChoice::Girsanov => {
            MeasureWeights::from_log_weights(summaries.iter().map(|s| s.log_weight).collect())?
        }
        MeasureChoice::Uniform => MeasureWeights::uniform(summaries.len())?,
    };
    let u = weights.scaled();
    let weight_mean = weights.weight_mean();
    let column = |p: usize, c: usize| -> Vec<f64> {
        summaries
            .iter()
            .map(|s| s.per_pair[p * stride + c])
            .collect()
    };

    let mut z_scores = Vec::new();
    let mut law_pairs = Vec::with_capacity(idx.len());
    for (p, &(i, j)) in idx.iter().enumerate() {
        let (s, t) = (grid.time(i), grid.time(j));
        let w_s = column(p, 0);
        let wt_s = column(p, 1);
        let wt_t = column(p, 2);
        let zeros = vec![0.0; w_s.len()];
        for fj in 0..m {
            let incr = column(p, 3 + fj);
            for (g, rep) in martingale_z(&zeros, &incr, &w_s, &FsStatistic::CATALOG, Some(&u))? {
                z_scores.push(MartingaleZScore {
                    functional: fj,
                    s,
                    t,
                    statistic: g.tag().to_string(),
                    estimate: rep.estimate,
                    unnormalized_estimate: weight_mean * rep.estimate,
                    se: rep.se,
                    z: rep.z,
                    pass: rep.pass,
                });
            }
        }
        law_pairs.push(IncrementPair {
            s,
            t,
            earlier: wt_s.clone(),
            increment: wt_t.iter().zip(&wt_s).map(|(b, a)| b - a).collect(),
        });
    }
    let law_tests = brownian_law_check(&law_pairs, Some(&u))?;

    let martingale_reports: Vec<TestReport> = z_scores
        .iter()
        .map(|z| TestReport {
            name: String::new(),
            estimate: z.estimate,
            target: 0.0,
            se: z.se,
            z: z.z,
            z_gate: crate::stats::Z_GATE,
            pass: z.pass,
        })
        .collect();
    let summary = summarize(martingale_reports.iter().chain(&law_tests));
    let inconclusive = weights.is_degenerate();
    let pass = !inconclusive && summary.pass && drift_residual <= DRIFT_RESIDUAL_TOL;

    Ok(GirsanovReport {
        measure,
        seed: ensemble.master_seed(),
        paths: ensemble.count(),
        weight_mean,
        weight_mean_se: weights.weight_mean_se(),
        ess: weights.ess(),
        degenerate_weights: weights.is_degenerate(),
        link_residual: setup.link_residual,
        drift_residual,
        drift_residual_norm: norm,
        z_scores,
        law_tests,
        summary,
        inconclusive,
        pass,
    })
}

/// Martingale certification of the stochastic Pettis integral `Y = ∫Φ dw`
/// under `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub seed: u64,
    pub paths: usize,
    /// `max |f_j(Y(t)) − ∫_0^t f_j(Φ) dw|` over paths, nodes and functionals.
    pub weak_consistency_residual: f64,
    pub z_scores: Vec<MartingaleZScore>,
    pub summary: SuiteSummary,
    pub pass: bool,
}

/// Unweighted martingale tests of `f_j(Y)` for `Y = (Pe)∫Φ dw`, plus the
/// functional-wise consistency residual against independent scalar Itô sums.
pub fn martingale_certify(
    phi: &VectorField,
    ensemble: &PathEnsemble,
    family: &DualFamily,
    pairs: &[(f64, f64)],
) -> Result<MartingaleReport> {
    let grid = *ensemble.grid();
    let idx = node_pairs(&grid, pairs)?;
    let kernel = ItoPettisKernel::new(None, phi, grid, family, Quadrature::Grid)?;
    let paired: Vec<ScalarField> = family
        .members()
        .iter()
        .map(|f| phi.paired(f))
        .collect::<Result<_>>()?;
    let m = family.len();
    let stride = 1 + m;

    let rows: Vec<(f64, Vec<f64>)> = ensemble
        .paths()
        .par_iter()
        .map(|w| -> Result<(f64, Vec<f64>)> {
            let y = kernel.stochastic(w)?;
            let mut residual: f64 = 0.0;
            for (f, g) in family.members().iter().zip(&paired) {
                let scalar = ito_integral(Integrand::Field(g), w)?;
                for (node, s) in y.nodes().zip(scalar.values()) {
                    residual = residual.max((f.apply_unchecked(node) - s).abs());
                }
            }
            let mut per_pair = Vec::with_capacity(idx.len() * stride);
            for &(i, j) in &idx {
                per_pair.push(w.values()[i]);
                for f in family.members() {
                    per_pair.push(f.apply_unchecked(y.node(j)) - f.apply_unchecked(y.node(i)));
                }
            }
            Ok((residual, per_pair))
        })
        .collect::<Result<_>>()?;

    let weak_consistency_residual = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let column =
        |p: usize, c: usize| -> Vec<f64> { rows.iter().map(|r| r.1[p * stride + c]).collect() };
    let mut z_scores = Vec::new();
    let mut reports = Vec::new();
    for (p, &(i, j)) in idx.iter().enumerate() {
        let w_s = column(p, 0);
        let zeros = vec![0.0; w_s.len()];
        for fj in 0..m {
            let incr = column(p, 1 + fj);
            for (g, rep) in martingale_z(&zeros, &incr, &w_s, &FsStatistic::CATALOG, None)? {
                z_scores.push(MartingaleZScore {
                    functional: fj,
                    s: grid.time(i),
                    t: grid.time(j),
                    statistic: g.tag().to_string(),
                    estimate: rep.estimate,
                    unnormalized_estimate: rep.estimate,
                    se: rep.se,
                    z: rep.z,
                    pass: rep.pass,
                });
                reports.push(rep);
            }
        }
    }
    let summary = summarize(&reports);
    let pass = summary.pass && weak_consistency_residual <= DRIFT_RESIDUAL_TOL;
    Ok(MartingaleReport {
        seed: ensemble.master_seed(),
        paths: ensemble.count(),
        weak_consistency_residual,
        z_scores,
        summary,
        pass,
    })
}
