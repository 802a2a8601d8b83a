//! The four subcommands. Each writes its artifacts under the output directory
//! and returns whether every gate passed.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pettis_core::conditioning::{
    bridge_density, bridge_regression, cond_exp_partition, defining_equation_residual,
    n_martingale_check, pullout, q_kernel_cond, BridgeKernel, BridgeRegression, Partition,
    RegressionReport, Verdict,
};
use pettis_core::girsanov::{girsanov_certify, martingale_certify, GirsanovReport, MeasureChoice};
use pettis_core::integrate::{
    bds_integral, pettis_integral, ItoPettisKernel, Quadrature, ScalarField, VectorField,
    VectorMeasureDensity,
};
use pettis_core::paths::{
    fmt_f64, path_key, sample_brownian, NormalStream, PathEnsemble, TimeGrid,
};
use pettis_core::stats::FsStatistic;
use pettis_core::vecspace::{DualFamily, Functional, Vector, DEFAULT_RECONSTRUCT_TOL};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ResolvedR};
use crate::error::{CliError, CliResult};

/// Paths formatted per parallel batch.
const CSV_BATCH: usize = 1024;

/// The uniform-weight control must reject the `g = 1` martingale test this hard.
pub const NEGATIVE_CONTROL_Z: f64 = 10.0;

/// Paths used by the exact gates of `validate`.
const VALIDATE_PATHS: usize = 4096;

/// What a command leaves behind.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

fn output_dir(cfg: &ExperimentConfig) -> CliResult<&Path> {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(io_err(path))
}

/// Formats batches of rows in parallel and writes them in path order.
fn write_rows<F>(path: &Path, header: &str, count: usize, row_block: F) -> CliResult<()>
where
    F: Fn(usize, &mut String) -> CliResult<()> + Sync,
{
    let mut out = create(path)?;
    writeln!(out, "{header}").map_err(io_err(path))?;
    for start in (0..count).step_by(CSV_BATCH) {
        let end = (start + CSV_BATCH).min(count);
        let blocks: Vec<String> = (start..end)
            .into_par_iter()
            .map(|k| {
                let mut s = String::new();
                row_block(k, &mut s).map(|_| s)
            })
            .collect::<CliResult<_>>()?;
        for b in blocks {
            out.write_all(b.as_bytes()).map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

fn ensemble(cfg: &ExperimentConfig) -> CliResult<PathEnsemble> {
    Ok(sample_brownian(
        cfg.time_grid()?,
        cfg.mc.seed,
        cfg.mc.paths,
    )?)
}

/// `paths.csv` and `process.csv` for the configured Itô–Pettis process.
pub fn simulate(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let dir = output_dir(cfg)?;
    let grid = cfg.time_grid()?;
    let e = ensemble(cfg)?;
    let family = cfg.family()?;
    let kernel = ItoPettisKernel::new(
        Some(&cfg.psi()?),
        &cfg.phi()?,
        grid,
        &family,
        Quadrature::Grid,
    )?;
    let times: Vec<String> = grid.times().map(fmt_f64).collect();

    let paths_csv = dir.join("paths.csv");
    write_rows(&paths_csv, "path_id,t,w", e.count(), |k, s| {
        for (t, w) in times.iter().zip(e.paths()[k].values()) {
            let _ = writeln!(s, "{k},{t},{}", fmt_f64(*w));
        }
        Ok(())
    })?;

    let header = std::iter::once("path_id,t".to_string())
        .chain((0..cfg.space.dim).map(|i| format!("coord_{i}")))
        .collect::<Vec<_>>()
        .join(",");
    let process_csv = dir.join("process.csv");
    write_rows(&process_csv, &header, e.count(), |k, s| {
        let a = kernel.process(&e.paths()[k])?;
        for (t, node) in times.iter().zip(a.nodes()) {
            let _ = write!(s, "{k},{t}");
            for x in node {
                let _ = write!(s, ",{}", fmt_f64(*x));
            }
            s.push('\n');
        }
        Ok(())
    })?;

    Ok(Outcome {
        pass: true,
        lines: vec![format!(
            "simulate: {} paths × {} nodes, seed {}",
            e.count(),
            grid.len(),
            cfg.mc.seed
        )],
        files: vec![paths_csv, process_csv],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NegativeControl {
    /// `max |z|` of the `g = 1` martingale tests under uniform weights.
    pub max_abs_z_one: f64,
    pub threshold: f64,
    /// The control did what it should: reject the martingale claim under `P`.
    pub rejected: bool,
    pub report: GirsanovReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GirsanovCommandReport {
    #[serde(flatten)]
    pub certification: GirsanovReport,
    pub r: ResolvedR,
    pub negative_control: NegativeControl,
    pub config: ExperimentConfig,
}

/// Drift removal under `Q`, with the uniform-weight control alongside.
pub fn girsanov(cfg: &ExperimentConfig) -> CliResult<(Outcome, GirsanovCommandReport)> {
    let dir = output_dir(cfg)?;
    let setup = cfg.girsanov_setup()?;
    let e = ensemble(cfg)?;
    let family = cfg.family()?;
    let pairs = cfg.test_pairs()?;
    let q = girsanov_certify(
        &setup,
        &e,
        &family,
        MeasureChoice::Girsanov,
        &pairs,
        cfg.space.norm,
    )?;
    let p = girsanov_certify(
        &setup,
        &e,
        &family,
        MeasureChoice::Uniform,
        &pairs,
        cfg.space.norm,
    )?;
    let max_one = p.max_abs_z_for(FsStatistic::One);
    let report = GirsanovCommandReport {
        r: ResolvedR::from_setup(cfg, &setup)?,
        negative_control: NegativeControl {
            max_abs_z_one: max_one,
            threshold: NEGATIVE_CONTROL_Z,
            rejected: !p.pass && max_one > NEGATIVE_CONTROL_Z,
            report: p,
        },
        certification: q,
        config: cfg.clone(),
    };
    let path = dir.join("girsanov_report.json");
    write_json(&path, &report)?;

    let c = &report.certification;
    let lines = vec![
        format!("link residual      {:.3e}", c.link_residual),
        format!("drift residual     {:.3e}", c.drift_residual),
        format!(
            "weight mean        {:.6} ± {:.6}",
            c.weight_mean, c.weight_mean_se
        ),
        format!("ESS                {:.1} of {}", c.ess, c.paths),
        format!(
            "tests failed       {} of {}",
            c.summary.failed, c.summary.total
        ),
        format!(
            "negative control   max|z| (g=1) = {:.1}, rejected = {}",
            report.negative_control.max_abs_z_one, report.negative_control.rejected
        ),
    ];
    Ok((
        Outcome {
            pass: c.pass,
            files: vec![path],
            lines,
        },
        report,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// Which of `t/T`, `1`, `T/t` this row is.
    pub role: String,
    pub report: RegressionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct BridgeCommandReport {
    pub seed: u64,
    pub paths: usize,
    pub s: f64,
    pub t: f64,
    pub horizon: f64,
    pub bridge: BridgeRegression,
    pub n_kernel: RegressionReport,
    pub alpha_sweep: Vec<SweepRow>,
    /// The sweep passes exactly at `α = T/t`.
    pub sweep_selects_t_over_t: bool,
    pub pass: bool,
    pub config: ExperimentConfig,
}

/// Bridge regression, the `N`-kernel martingale check and the `α` sweep.
pub fn bridge(cfg: &ExperimentConfig) -> CliResult<(Outcome, BridgeCommandReport)> {
    let dir = output_dir(cfg)?;
    let e = ensemble(cfg)?;
    let (s, t, big_t) = (cfg.bridge.s, cfg.bridge.t, cfg.grid.horizon);
    let bridge = bridge_regression(t, &e)?;
    let n_kernel = n_martingale_check(s, t, &e)?;
    let alpha_sweep: Vec<SweepRow> = [(t / big_t, "t/T"), (1.0, "1"), (big_t / t, "T/t")]
        .into_iter()
        .map(|(alpha, role)| {
            Ok(SweepRow {
                alpha,
                role: role.to_string(),
                report: q_kernel_cond(alpha, s, t, &e)?,
            })
        })
        .collect::<CliResult<_>>()?;
    let target = big_t / t;
    let sweep_ok = alpha_sweep.iter().all(|row| {
        let expected = if row.alpha == target {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        row.report.verdict == expected
    });
    let pass = bridge.regression.verdict == Verdict::Pass
        && bridge.conditional_variance.pass
        && n_kernel.verdict == Verdict::Pass
        && sweep_ok;
    let report = BridgeCommandReport {
        seed: cfg.mc.seed,
        paths: e.count(),
        s,
        t,
        horizon: big_t,
        bridge,
        n_kernel,
        alpha_sweep,
        sweep_selects_t_over_t: sweep_ok,
        pass,
        config: cfg.clone(),
    };
    let path = dir.join("bridge_report.json");
    write_json(&path, &report)?;

    let fmt_reg = |r: &RegressionReport| {
        format!(
            "{:<28} slope {:+.4} ± {:.4} (target {:.4})  {:?}",
            r.label, r.slope, r.slope_se, r.target_slope, r.verdict
        )
    };
    let mut lines = vec![
        fmt_reg(&report.bridge.regression),
        format!(
            "{:<28} {:.4} ± {:.4} (target {:.4})  pass = {}",
            "conditional variance",
            report.bridge.conditional_variance.estimate,
            report.bridge.conditional_variance.se,
            report.bridge.conditional_variance.target,
            report.bridge.conditional_variance.pass
        ),
        fmt_reg(&report.n_kernel),
    ];
    lines.extend(report.alpha_sweep.iter().map(|r| fmt_reg(&r.report)));
    Ok((
        Outcome {
            pass,
            files: vec![path],
            lines,
        },
        report,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactCheck {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ExactCheck {
    fn new(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tol,
            pass: value <= tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub seed: u64,
    pub checks: Vec<ExactCheck>,
    pub pass: bool,
    pub config: ExperimentConfig,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_family(key: u64, members: usize, dim: usize) -> CliResult<DualFamily> {
    let mut z = NormalStream::new(key);
    let fs = (0..members)
        .map(|_| Functional::new(z.by_ref().take(dim).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DualFamily::spanning(fs)?)
}

fn round_trip_error(cfg: &ExperimentConfig) -> CliResult<f64> {
    let mut worst: f64 = 0.0;
    for d in 1..=cfg.space.dim.max(4) {
        for (i, members) in [d, d + 1, 2 * d].into_iter().enumerate() {
            let key = path_key(cfg.mc.seed, (100 * d + i) as u64);
            let family = random_family(key, members, d)?;
            let v: Vec<f64> = NormalStream::new(!key).take(d).collect();
            let back = family.reconstruct(&family.pairings(&v)?, DEFAULT_RECONSTRUCT_TOL)?;
            worst = worst.max(max_abs_diff(back.coords(), &v));
        }
    }
    Ok(worst)
}

fn family_independence_error(
    cfg: &ExperimentConfig,
    grid: &TimeGrid,
    fields: &[VectorField],
) -> CliResult<f64> {
    let d = cfg.space.dim;
    let families = [
        DualFamily::standard_basis(d)?,
        cfg.family()?,
        random_family(path_key(cfg.mc.seed, 7), 2 * d, d)?,
    ];
    let mut worst: f64 = 0.0;
    for field in fields {
        for quad in [Quadrature::Grid, Quadrature::Exact] {
            for k in [0, grid.steps() / 2, grid.steps()] {
                let t = grid.time(k);
                let base = pettis_integral(field, grid, &families[0], t, quad)?;
                for fam in &families[1..] {
                    let other = pettis_integral(field, grid, fam, t, quad)?;
                    worst = worst.max(max_abs_diff(base.coords(), other.coords()));
                }
            }
        }
    }
    Ok(worst)
}

fn bds_error(cfg: &ExperimentConfig, grid: &TimeGrid, fields: &[VectorField]) -> CliResult<f64> {
    let family = cfg.family()?;
    let coeffs: Vec<f64> = NormalStream::new(path_key(cfg.mc.seed, 11))
        .take(3)
        .collect();
    let phi = ScalarField::polynomial(coeffs)?;
    let mut worst: f64 = 0.0;
    for density in fields {
        let measure = VectorMeasureDensity::new(density.clone());
        let product = density.scaled_by(&phi);
        for quad in [Quadrature::Grid, Quadrature::Exact] {
            for k in [grid.steps() / 2, grid.steps()] {
                let t = grid.time(k);
                let lhs = bds_integral(&phi, &measure, grid, &family, t, quad)?;
                let rhs = pettis_integral(&product, grid, &family, t, quad)?;
                worst = worst.max(max_abs_diff(lhs.coords(), rhs.coords()));
            }
        }
    }
    Ok(worst)
}

fn rel_diff(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            x.coords()
                .iter()
                .zip(y.coords())
                .map(|(p, q)| (p - q).abs() / (1.0 + q.abs()))
        })
        .fold(0.0, f64::max)
}

/// Defining equation, pull-out and tower residuals on path-derived samples.
fn partition_errors(e: &PathEnsemble) -> CliResult<(f64, f64, f64)> {
    let big_t = e.grid().horizon();
    let mid = e.values_at(e.grid().time(e.grid().steps() / 2))?;
    let end = e.terminal_values();
    let v: Vec<Vector> = mid
        .iter()
        .zip(&end)
        .map(|(a, b)| Vector::new(vec![*b, b * b, a.sin(), a * b / big_t]))
        .collect::<Result<_, _>>()?;

    let four = Partition::rank_bins(&mid, 4)?;
    let ce = cond_exp_partition(&v, &four)?;
    let defining = defining_equation_residual(&v, &ce, &four)?;

    let eight = Partition::rank_bins(&mid, 8)?;
    let phi: Vec<f64> = eight.cells().iter().map(|&c| c as f64 - 3.5).collect();
    let (lhs, rhs) = pullout(&v, &phi, &eight)?;
    let pull = rel_diff(&lhs, &rhs);

    let parts: Vec<Partition> = [1usize, 2, 4, 8, mid.len()]
        .into_iter()
        .map(|k| Partition::rank_bins(&mid, k))
        .collect::<Result<_, _>>()?;
    let mut tower: f64 = 0.0;
    for fine in 0..parts.len() {
        let inner = cond_exp_partition(&v, &parts[fine])?;
        for coarse in &parts[..=fine] {
            tower = tower.max(rel_diff(
                &cond_exp_partition(&inner, coarse)?,
                &cond_exp_partition(&v, coarse)?,
            ));
        }
    }
    Ok((defining, pull, tower))
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Pointwise gap to the Normal pdf and the trapezoid mass over ±8 sd.
fn bridge_density_errors(cfg: &ExperimentConfig) -> CliResult<(f64, f64)> {
    let big_t = cfg.grid.horizon;
    let mut times = vec![0.25 * big_t, 0.5 * big_t, 0.9 * big_t];
    if cfg.bridge.t < big_t {
        times.push(cfg.bridge.t);
    }
    let (mut pointwise, mut mass): (f64, f64) = (0.0, 0.0);
    for t in times {
        let k = BridgeKernel::new(t, big_t)?;
        let (var, sd) = (k.variance(), k.variance().sqrt());
        for y in [-2.0 * big_t.sqrt(), 0.0, 1.3 * big_t.sqrt()] {
            let mean = k.mean(y);
            for i in -40..=40 {
                let x = mean + 0.2 * f64::from(i) * sd;
                pointwise =
                    pointwise.max((bridge_density(&k, x, y) - normal_pdf(x, mean, var)).abs());
            }
            let n = 4000;
            let h = 16.0 * sd / f64::from(n);
            let total: f64 = (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * bridge_density(&k, mean - 8.0 * sd + h * f64::from(i), y)
                })
                .sum();
            mass = mass.max((total * h - 1.0).abs());
        }
    }
    Ok((pointwise, mass))
}

/// Exact (non-statistical) gates only.
pub fn validate(cfg: &ExperimentConfig) -> CliResult<(Outcome, ValidateReport)> {
    let dir = output_dir(cfg)?;
    let grid = cfg.time_grid()?;
    let fields = [cfg.psi()?, cfg.phi()?];
    let setup = cfg.girsanov_setup()?;
    let e = sample_brownian(grid, cfg.mc.seed, VALIDATE_PATHS)?;
    let family = cfg.family()?;
    let pairs = cfg.test_pairs()?;

    let (defining, pull, tower) = partition_errors(&e)?;
    let (pointwise, mass) = bridge_density_errors(cfg)?;
    let head = sample_brownian(grid, cfg.mc.seed, 64)?;
    let drift = girsanov_certify(
        &setup,
        &head,
        &family,
        MeasureChoice::Girsanov,
        &pairs,
        cfg.space.norm,
    )?;
    let weak = martingale_certify(&fields[1], &head, &family, &pairs)?;

    let checks = vec![
        ExactCheck::new("reconstruction_round_trip", round_trip_error(cfg)?, 1e-10),
        ExactCheck::new(
            "family_independence",
            family_independence_error(cfg, &grid, &fields)?,
            1e-10,
        ),
        ExactCheck::new("bds_two_routes", bds_error(cfg, &grid, &fields)?, 1e-10),
        ExactCheck::new("defining_equation", defining, 1e-12),
        ExactCheck::new("pull_out", pull, 1e-12),
        ExactCheck::new("tower", tower, 1e-12),
        ExactCheck::new("bridge_density_pointwise", pointwise, 1e-12),
        ExactCheck::new("bridge_density_mass", mass, 1e-6),
        ExactCheck::new("drift_cancellation", drift.drift_residual, 1e-10),
        ExactCheck::new(
            "stochastic_weak_consistency",
            weak.weak_consistency_residual,
            1e-10,
        ),
    ];
    let pass = checks.iter().all(|c| c.pass);
    let report = ValidateReport {
        seed: cfg.mc.seed,
        checks,
        pass,
        config: cfg.clone(),
    };
    let path = dir.join("validate_report.json");
    write_json(&path, &report)?;
    let lines = report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{:<30} {:.3e} (tol {:.0e})  {}",
                c.name,
                c.value,
                c.tol,
                if c.pass { "PASS" } else { "FAIL" }
            )
        })
        .collect();
    Ok((
        Outcome {
            pass,
            files: vec![path],
            lines,
        },
        report,
    ))
}
