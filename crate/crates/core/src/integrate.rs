//! Lebesgue/Pettis integrals of vector fields, BDS integrals against a vector
//! measure with density, scalar Itô sums and stochastic Pettis integrals.
//!
//! Every vector-valued result is produced functional-wise: for each member
//! `f_j` of the probe family the scalar integral of `f_j(integrand)` is
//! computed, then [`DualFamily::reconstruct`] finds the vector with those
//! pairings. Lebesgue and Itô integrals both use left-endpoint sums, which
//! makes `Δw̃_i = Δw_i + r(t_i)·dt` cancel drift terms exactly on the grid.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::paths::{ScalarPath, TimeGrid, VecPath};
use crate::vecspace::{DualFamily, Functional, Vector, DEFAULT_RECONSTRUCT_TOL};

/// Real polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite polynomial coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// `∫_a^b p(s) ds` from the antiderivative.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let anti = |t: f64| {
            self.coeffs
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (k, c)| acc * t + c / (k + 1) as f64)
                * t
        };
        anti(b) - anti(a)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Polynomial { coeffs: Vec::new() };
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial { coeffs: out }
    }

    fn axpy(&mut self, a: f64, other: &Polynomial) {
        if self.coeffs.len() < other.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (dst, src) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *dst += a * src;
        }
    }
}

#[derive(Clone)]
enum FieldKind {
    Poly(Polynomial),
    Table { grid: TimeGrid, values: Arc<[f64]> },
    Func(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Deterministic real function of time, evaluated at grid nodes.
#[derive(Clone)]
pub struct ScalarField {
    kind: FieldKind,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FieldKind::Poly(p) => f.debug_tuple("ScalarField::Poly").field(&p.coeffs).finish(),
            FieldKind::Table { values, .. } => f
                .debug_struct("ScalarField::Table")
                .field("nodes", &values.len())
                .finish(),
            FieldKind::Func(_) => f.write_str("ScalarField::Func"),
        }
    }
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        Self::from_polynomial(Polynomial::constant(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        Ok(Self::from_polynomial(Polynomial::new(coeffs)?))
    }

    pub fn from_polynomial(p: Polynomial) -> Self {
        Self {
            kind: FieldKind::Poly(p),
        }
    }

    /// One value per node of `grid`; evaluation rounds `t` to the nearest node.
    pub fn tabulated(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite tabulated value".into()));
        }
        Ok(Self {
            kind: FieldKind::Table {
                grid,
                values: values.into(),
            },
        })
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: FieldKind::Func(Arc::new(f)),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            FieldKind::Poly(p) => p.eval(t),
            FieldKind::Table { grid, values } => {
                let i = (t / grid.dt()).round().clamp(0.0, grid.steps() as f64) as usize;
                values[i]
            }
            FieldKind::Func(f) => f(t),
        }
    }

    pub fn as_polynomial(&self) -> Option<&Polynomial> {
        match &self.kind {
            FieldKind::Poly(p) => Some(p),
            _ => None,
        }
    }

    /// Pointwise product; stays polynomial when both factors are.
    pub fn product(&self, other: &ScalarField) -> ScalarField {
        if let (Some(a), Some(b)) = (self.as_polynomial(), other.as_polynomial()) {
            return Self::from_polynomial(a.mul(b));
        }
        let (a, b) = (self.clone(), other.clone());
        Self::from_fn(move |t| a.eval(t) * b.eval(t))
    }

    /// Node values `f(t_0), …, f(t_n)`, rejecting non-finite ones.
    pub fn node_values(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        grid.times()
            .map(|t| {
                let v = self.eval(t);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Numeric(format!("field is not finite at t = {t}")))
                }
            })
            .collect()
    }

    /// `Σ f(t_i)²·dt`, the grid surrogate for square integrability.
    pub fn grid_energy(&self, grid: &TimeGrid) -> Result<f64> {
        let e = self.node_values(grid)?[..grid.steps()]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            * grid.dt();
        if e.is_finite() {
            Ok(e)
        } else {
            Err(Error::Numeric("square-sum of field overflows".into()))
        }
    }
}

/// Deterministic `X`-valued function of time, one [`ScalarField`] per
/// coordinate.
#[derive(Debug, Clone)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::usage("vector field needs at least one component"));
        }
        Ok(Self { components })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new((0..dim).map(|_| ScalarField::zero()).collect())
    }

    pub fn constant(value: &[f64]) -> Result<Self> {
        Self::new(value.iter().map(|c| ScalarField::constant(*c)).collect())
    }

    /// Per-coordinate polynomial coefficient table (ascending powers).
    pub fn polynomial(table: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            table
                .into_iter()
                .map(ScalarField::polynomial)
                .collect::<Result<_>>()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(t)).collect()
    }

    /// `s ↦ φ(s)·Φ(s)`.
    pub fn scaled_by(&self, phi: &ScalarField) -> VectorField {
        VectorField {
            components: self.components.iter().map(|c| phi.product(c)).collect(),
        }
    }

    /// The scalar field `s ↦ f(Φ(s))`.
    pub fn paired(&self, f: &Functional) -> Result<ScalarField> {
        if f.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: f.dim(),
            });
        }
        let polys: Option<Vec<&Polynomial>> =
            self.components.iter().map(|c| c.as_polynomial()).collect();
        if let Some(polys) = polys {
            let mut acc = Polynomial { coeffs: Vec::new() };
            for (c, p) in f.coeffs().iter().zip(polys) {
                acc.axpy(*c, p);
            }
            return Ok(ScalarField::from_polynomial(acc));
        }
        let field = self.clone();
        let f = f.clone();
        Ok(ScalarField::from_fn(move |t| {
            f.apply_unchecked(&field.eval(t))
        }))
    }

    /// Node-major table of `Φ(t_i)`, rejecting non-finite values.
    fn node_table(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.len() * self.dim());
        for t in grid.times() {
            for c in &self.components {
                let v = c.eval(t);
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "vector field is not finite at t = {t}"
                    )));
                }
                out.push(v);
            }
        }
        Ok(out)
    }
}

/// Vector measure `N(E) = (Pe)∫_E Φ dν` with `ν` Lebesgue measure on the grid.
#[derive(Debug, Clone)]
pub struct VectorMeasureDensity {
    density: VectorField,
}

impl VectorMeasureDensity {
    pub fn new(density: VectorField) -> Self {
        Self { density }
    }

    pub fn density(&self) -> &VectorField {
        &self.density
    }

    /// `N([t_i, t_{i+1}))` for every grid cell, each reconstructed from its
    /// pairings.
    pub fn cell_masses(&self, grid: &TimeGrid, family: &DualFamily) -> Result<Vec<Vector>> {
        check_family(family, self.density.dim())?;
        let dt = grid.dt();
        let table = self.density.node_table(grid)?;
        let d = self.density.dim();
        let mut pairings = vec![0.0; family.len()];
        (0..grid.steps())
            .map(|i| {
                let node = &table[i * d..(i + 1) * d];
                for (p, f) in pairings.iter_mut().zip(family.members()) {
                    *p = f.apply_unchecked(node) * dt;
                }
                family.reconstruct(&pairings, DEFAULT_RECONSTRUCT_TOL)
            })
            .collect()
    }
}

/// Grid sums (the default) or closed-form antiderivatives for polynomial
/// fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Grid,
    Exact,
}

fn check_family(family: &DualFamily, dim: usize) -> Result<()> {
    family.require_spanning()?;
    if family.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: family.dim(),
            found: dim,
        });
    }
    Ok(())
}

/// Left-endpoint Riemann sum `Σ_{t_i < t} f(t_i)·dt`.
pub fn lebesgue_scalar(f: &ScalarField, grid: &TimeGrid, up_to: f64) -> Result<f64> {
    let k = grid.node_index(up_to)?;
    left_sum(f, grid, k)
}

fn left_sum(f: &ScalarField, grid: &TimeGrid, k: usize) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..k {
        let v = f.eval(grid.time(i));
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "integrand is not finite at t = {}",
                grid.time(i)
            )));
        }
        acc += v;
    }
    let out = acc * grid.dt();
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Numeric("Lebesgue sum overflows".into()))
    }
}

fn scalar_integral(f: &ScalarField, grid: &TimeGrid, k: usize, quad: Quadrature) -> Result<f64> {
    match quad {
        Quadrature::Grid => left_sum(f, grid, k),
        Quadrature::Exact => {
            let p = f
                .as_polynomial()
                .ok_or_else(|| Error::usage("exact quadrature needs a polynomial integrand"))?;
            Ok(p.integral(0.0, grid.time(k)))
        }
    }
}

/// `(Pe)∫_0^t Φ ds`: one scalar integral per functional, then reconstruction.
pub fn pettis_integral(
    phi: &VectorField,
    grid: &TimeGrid,
    family: &DualFamily,
    up_to: f64,
    quad: Quadrature,
) -> Result<Vector> {
    check_family(family, phi.dim())?;
    let k = grid.node_index(up_to)?;
    let pairings = family
        .members()
        .iter()
        .map(|f| scalar_integral(&phi.paired(f)?, grid, k, quad))
        .collect::<Result<Vec<_>>>()?;
    family.reconstruct(&pairings, DEFAULT_RECONSTRUCT_TOL)
}

/// `(BDS)∫_0^t φ dN`, evaluated on the measure side.
///
/// On the grid each functional sees `Σ_i φ(t_i)·f_j(N(cell_i))`, where the
/// cell masses come from [`VectorMeasureDensity::cell_masses`]; this never
/// forms the product field `φΦ`. In exact mode the pairing
/// `∫ φ·f_j(Φ) ds` is integrated in closed form.
pub fn bds_integral(
    phi: &ScalarField,
    measure: &VectorMeasureDensity,
    grid: &TimeGrid,
    family: &DualFamily,
    up_to: f64,
    quad: Quadrature,
) -> Result<Vector> {
    check_family(family, measure.density.dim())?;
    let k = grid.node_index(up_to)?;
    let pairings = match quad {
        Quadrature::Grid => {
            let masses = measure.cell_masses(grid, family)?;
            let weights = phi.node_values(grid)?;
            family
                .members()
                .iter()
                .map(|f| {
                    let s: f64 = (0..k)
                        .map(|i| weights[i] * f.apply_unchecked(masses[i].coords()))
                        .sum();
                    if s.is_finite() {
                        Ok(s)
                    } else {
                        Err(Error::Numeric("BDS sum overflows".into()))
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
        Quadrature::Exact => {
            let phi_poly = phi
                .as_polynomial()
                .ok_or_else(|| Error::usage("exact quadrature needs a polynomial integrand"))?;
            family
                .members()
                .iter()
                .map(|f| {
                    let paired = measure.density.paired(f)?;
                    let p = paired.as_polynomial().ok_or_else(|| {
                        Error::usage("exact quadrature needs a polynomial density")
                    })?;
                    Ok(phi_poly.mul(p).integral(0.0, grid.time(k)))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    family.reconstruct(&pairings, DEFAULT_RECONSTRUCT_TOL)
}

/// Integrand of a scalar Itô sum.
pub enum Integrand<'a> {
    /// Deterministic field evaluated at the left endpoints.
    Field(&'a ScalarField),
    /// Path functional: `eval` receives the path values on nodes `0..=i` and
    /// returns the integrand at `t_i`. A positive `lookahead` declares that the
    /// functional needs later nodes, which is not adapted and is rejected.
    Adapted {
        lookahead: usize,
        eval: &'a dyn Fn(&[f64]) -> f64,
    },
}

/// Left-point Itô sum `I(t_k) = Σ_{i<k} f(t_i)·Δw_i`, `I(0) = 0`.
pub fn ito_integral(integrand: Integrand<'_>, w: &ScalarPath) -> Result<ScalarPath> {
    let grid = *w.grid();
    let values = w.values();
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(acc);
    match integrand {
        Integrand::Field(f) => {
            for i in 0..values.len() - 1 {
                acc += f.eval(grid.time(i)) * (values[i + 1] - values[i]);
                out.push(acc);
            }
        }
        Integrand::Adapted { lookahead, eval } => {
            if lookahead > 0 {
                return Err(Error::usage(format!(
                    "integrand looks {lookahead} node(s) ahead and is not adapted"
                )));
            }
            for i in 0..values.len() - 1 {
                acc += eval(&values[..=i]) * (values[i + 1] - values[i]);
                out.push(acc);
            }
        }
    }
    if !acc.is_finite() {
        return Err(Error::Numeric("Itô sum is not finite".into()));
    }
    Ok(ScalarPath::from_raw(grid, out))
}

/// Precomputed data for repeated stochastic Pettis / Itô–Pettis integrals on
/// one grid with one probe family.
///
/// Holds the diffusion pairings `f_j(Φ(t_i))` and, when a drift is given, the
/// deterministic drift integral at every node.
#[derive(Debug, Clone)]
pub struct ItoPettisKernel {
    grid: TimeGrid,
    family: DualFamily,
    dim: usize,
    /// Node-major `n × m` table of `f_j(Φ(t_i))`.
    diffusion_pairings: Vec<f64>,
    drift: Option<VecPath>,
    tol: f64,
}

impl ItoPettisKernel {
    pub fn new(
        drift: Option<&VectorField>,
        diffusion: &VectorField,
        grid: TimeGrid,
        family: &DualFamily,
        quad: Quadrature,
    ) -> Result<Self> {
        let dim = diffusion.dim();
        check_family(family, dim)?;
        let m = family.len();
        let table = diffusion.node_table(&grid)?;
        let mut diffusion_pairings = Vec::with_capacity(grid.steps() * m);
        for i in 0..grid.steps() {
            let node = &table[i * dim..(i + 1) * dim];
            diffusion_pairings.extend(family.members().iter().map(|f| f.apply_unchecked(node)));
        }
        let drift = match drift {
            None => None,
            Some(psi) => {
                if psi.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: psi.dim(),
                    });
                }
                Some(drift_path(psi, &grid, family, quad)?)
            }
        };
        Ok(Self {
            grid,
            family: family.clone(),
            dim,
            diffusion_pairings,
            drift,
            tol: DEFAULT_RECONSTRUCT_TOL,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn family(&self) -> &DualFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Drift integral `(Pe)∫_0^t Ψ ds` at every node, if a drift was given.
    pub fn drift(&self) -> Option<&VecPath> {
        self.drift.as_ref()
    }

    fn check_path(&self, w: &ScalarPath) -> Result<()> {
        if w.grid() != &self.grid || w.len() != self.grid.len() {
            return Err(Error::usage(
                "driving path must cover the kernel's full grid",
            ));
        }
        Ok(())
    }

    /// Node-major `(n+1) × m` table of the scalar Itô sums
    /// `∫_0^{t_k} f_j(Φ) dw`.
    pub fn stochastic_pairings(&self, w: &ScalarPath) -> Result<Vec<f64>> {
        self.check_path(w)?;
        let m = self.family.len();
        let mut out = vec![0.0; self.grid.len() * m];
        let values = w.values();
        for i in 0..self.grid.steps() {
            let dw = values[i + 1] - values[i];
            let g = &self.diffusion_pairings[i * m..(i + 1) * m];
            let (prev, next) = out.split_at_mut((i + 1) * m);
            let prev = &prev[i * m..];
            for j in 0..m {
                next[j] = prev[j] + g[j] * dw;
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("stochastic integral is not finite".into()));
        }
        Ok(out)
    }

    /// `Y(t) = (Pe)∫_0^t Φ dw`, reconstructed at every node.
    pub fn stochastic(&self, w: &ScalarPath) -> Result<VecPath> {
        let m = self.family.len();
        let pairings = self.stochastic_pairings(w)?;
        let mut data = vec![0.0; self.grid.len() * self.dim];
        for (p, out) in pairings
            .chunks_exact(m)
            .zip(data.chunks_exact_mut(self.dim))
        {
            self.family.reconstruct_into(p, self.tol, out)?;
        }
        Ok(VecPath::from_raw(self.grid, self.dim, data))
    }

    /// `A(t) = (Pe)∫_0^t Ψ ds + (Pe)∫_0^t Φ dw`.
    pub fn process(&self, w: &ScalarPath) -> Result<VecPath> {
        let y = self.stochastic(w)?;
        match &self.drift {
            None => Ok(y),
            Some(d) => {
                let data = y
                    .nodes()
                    .zip(d.nodes())
                    .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>())
                    .collect();
                Ok(VecPath::from_raw(self.grid, self.dim, data))
            }
        }
    }
}

fn drift_path(
    psi: &VectorField,
    grid: &TimeGrid,
    family: &DualFamily,
    quad: Quadrature,
) -> Result<VecPath> {
    let dim = psi.dim();
    let m = family.len();
    let paired: Vec<ScalarField> = family
        .members()
        .iter()
        .map(|f| psi.paired(f))
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; grid.len() * dim];
    let mut pairings = vec![0.0; m];
    match quad {
        Quadrature::Grid => {
            // running sums of node values, scaled by dt at each node
            let node_values: Vec<Vec<f64>> = paired
                .iter()
                .map(|g| g.node_values(grid))
                .collect::<Result<_>>()?;
            let mut running = vec![0.0; m];
            for k in 1..grid.len() {
                for j in 0..m {
                    running[j] += node_values[j][k - 1];
                    pairings[j] = running[j] * grid.dt();
                }
                family.reconstruct_into(
                    &pairings,
                    DEFAULT_RECONSTRUCT_TOL,
                    &mut data[k * dim..(k + 1) * dim],
                )?;
            }
        }
        Quadrature::Exact => {
            for k in 1..grid.len() {
                for j in 0..m {
                    pairings[j] = scalar_integral(&paired[j], grid, k, quad)?;
                }
                family.reconstruct_into(
                    &pairings,
                    DEFAULT_RECONSTRUCT_TOL,
                    &mut data[k * dim..(k + 1) * dim],
                )?;
            }
        }
    }
    Ok(VecPath::from_raw(*grid, dim, data))
}

/// `Y(t) = (Pe)∫_0^t Φ dw` along one driving path.
pub fn stochastic_pettis_integral(
    phi: &VectorField,
    w: &ScalarPath,
    family: &DualFamily,
) -> Result<VecPath> {
    ItoPettisKernel::new(None, phi, *w.grid(), family, Quadrature::Grid)?.stochastic(w)
}

/// Itô–Pettis process `A(t) = (Pe)∫_0^t Ψ ds + (Pe)∫_0^t Φ dw`.
pub fn ito_pettis_path(
    psi: &VectorField,
    phi: &VectorField,
    w: &ScalarPath,
    family: &DualFamily,
    quad: Quadrature,
) -> Result<VecPath> {
    ItoPettisKernel::new(Some(psi), phi, *w.grid(), family, quad)?.process(w)
}
