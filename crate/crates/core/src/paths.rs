//! Uniform time grids, reproducible normal streams and Brownian ensembles.
//!
//! Path `k` of an ensemble is a pure function of `(master_seed, k)`: its key
//! is a splitmix64 hash of the pair and its `i`-th normal variate is the
//! inverse normal CDF of a hashed counter. Generation order and worker count
//! therefore never change a single bit of the output.
//!
//! The natural filtration is represented by path prefixes: whatever is
//! computed from [`prefix`]`(p, s)` is `F_s`-measurable.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i·T/n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::usage(format!(
                "horizon must be finite and > 0, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::usage("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `n + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_i`; the last node is exactly `T`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|i| self.time(i))
    }

    /// Index of the node at time `t`; off-grid times are a usage error.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let x = t / self.dt();
        let i = x.round();
        if !t.is_finite() || i < 0.0 || i > self.steps as f64 || (x - i).abs() > 1e-9 {
            return Err(Error::usage(format!(
                "time {t} is not a node of the grid (T = {}, n = {})",
                self.horizon, self.steps
            )));
        }
        Ok(i as usize)
    }
}

/// A scalar trajectory on (a prefix of) a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ScalarPath {
    /// `values` covers nodes `0..values.len()`; shorter than the grid means a
    /// prefix.
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() > grid.len() {
            return Err(Error::usage(format!(
                "path has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite path value".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: TimeGrid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of the last stored node.
    pub fn end_time(&self) -> f64 {
        self.grid.time(self.values.len() - 1)
    }

    /// Value at node time `t`.
    pub fn at(&self, t: f64) -> Result<f64> {
        let i = self.grid.node_index(t)?;
        self.values
            .get(i)
            .copied()
            .ok_or_else(|| Error::usage(format!("time {t} lies beyond the end of this path")))
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths are nonempty")
    }

    /// Increments `w_{t_{i+1}} − w_{t_i}`.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|p| p[1] - p[0])
    }
}

/// Restriction of `path` to `[0, s]`, the stand-in for `F_s` information.
pub fn prefix(path: &ScalarPath, s: f64) -> Result<ScalarPath> {
    let k = path.grid.node_index(s)?;
    if k >= path.values.len() {
        return Err(Error::usage(format!(
            "time {s} lies beyond the end of this path"
        )));
    }
    Ok(ScalarPath {
        grid: path.grid,
        values: path.values[..=k].to_vec(),
    })
}

/// A vector-valued trajectory, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VecPath {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl VecPath {
    pub(crate) fn from_raw(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * grid.len());
        Self { grid, dim, data }
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            data: vec![0.0; dim * grid.len()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates at node `i`.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn at(&self, t: f64) -> Result<&[f64]> {
        Ok(self.node(self.grid.node_index(t)?))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Paths `0..count` of a seeded Brownian ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    master_seed: u64,
    grid: TimeGrid,
    paths: Vec<ScalarPath>,
}

impl PathEnsemble {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[ScalarPath] {
        &self.paths
    }

    /// Cross-section of every path at node index `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.values[i]).collect()
    }

    /// Cross-section at node time `t`.
    pub fn values_at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.column(self.grid.node_index(t)?))
    }

    pub fn terminal_values(&self) -> Vec<f64> {
        self.column(self.grid.steps())
    }

    /// CSV dump with header `path_id,t,w`, one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "path_id,t,w")?;
        for (k, path) in self.paths.iter().enumerate() {
            for (i, w) in path.values.iter().enumerate() {
                writeln!(out, "{k},{},{}", fmt_f64(self.grid.time(i)), fmt_f64(*w))?;
            }
        }
        Ok(())
    }
}

/// Seventeen significant digits, scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Samples `count` Brownian paths on `grid`. Path `k` depends only on
/// `(master_seed, k)`.
pub fn sample_brownian(grid: TimeGrid, master_seed: u64, count: usize) -> Result<PathEnsemble> {
    if count == 0 {
        return Err(Error::usage("ensemble needs at least one path"));
    }
    let paths = (0..count)
        .into_par_iter()
        .map(|k| brownian_path(grid, path_key(master_seed, k as u64)))
        .collect();
    Ok(PathEnsemble {
        master_seed,
        grid,
        paths,
    })
}

fn brownian_path(grid: TimeGrid, key: u64) -> ScalarPath {
    let sd = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut w = 0.0;
    values.push(w);
    for z in NormalStream::new(key).take(grid.steps()) {
        w += sd * z;
        values.push(w);
    }
    ScalarPath { grid, values }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-path key derived from the master seed and the path index.
#[inline]
pub fn path_key(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Counter-based stream of standard normals: variate `i` is
/// `Φ⁻¹(u_i)` with `u_i` a 53-bit uniform from `mix64(key + (i+1)·γ)`.
#[derive(Debug, Clone)]
pub struct NormalStream {
    key: u64,
    counter: u64,
}

impl NormalStream {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Uniform in the open interval (0, 1) for counter `i`.
    #[inline]
    pub fn uniform_at(key: u64, i: u64) -> f64 {
        let bits = mix64(key.wrapping_add(i.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)));
        ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal_at(key: u64, i: u64) -> f64 {
        inverse_normal_cdf(Self::uniform_at(key, i))
    }
}

impl Iterator for NormalStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let z = Self::normal_at(self.key, self.counter);
        self.counter += 1;
        Some(z)
    }
}

/// Standard normal quantile.
#[inline]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}
