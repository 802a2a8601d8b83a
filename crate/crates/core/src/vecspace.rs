//! Finite-dimensional model of the space `X`, its probe functionals, and
//! recovery of a vector from its pairings.
//!
//! The reconstruction is what makes an integral "weak": callers compute one
//! scalar per functional and ask [`DualFamily::reconstruct`] for the single
//! vector realizing all of them. If no such vector exists (residual above the
//! tolerance) the call fails instead of silently projecting.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default residual gate for [`DualFamily::reconstruct`].
pub const DEFAULT_RECONSTRUCT_TOL: f64 = 1e-8;

/// Singular values below `RANK_TOL * σ_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormTag {
    L1,
    L2,
    #[serde(rename = "LINF")]
    LInf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormedSpace {
    dim: usize,
    norm: NormTag,
}

impl NormedSpace {
    pub fn new(dim: usize, norm: NormTag) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("space dimension must be at least 1"));
        }
        Ok(Self { dim, norm })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_tag(&self) -> NormTag {
        self.norm
    }

    /// Norm of `v` under this space's tag. Only used for reporting.
    pub fn norm(&self, v: &[f64]) -> f64 {
        norm_of(self.norm, v)
    }
}

pub fn norm_of(tag: NormTag, v: &[f64]) -> f64 {
    match tag {
        NormTag::L1 => v.iter().map(|x| x.abs()).sum(),
        NormTag::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormTag::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// An element of `X = ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::usage("vector must have at least one coordinate"));
        }
        if let Some(bad) = coords.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite vector coordinate {bad}"
            )));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, a: f64) -> Vector {
        Vector(self.0.iter().map(|x| a * x).collect())
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A continuous linear functional `x*`, acting by the dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    coeffs: Vec<f64>,
}

impl Functional {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::usage(
                "functional must have at least one coefficient",
            ));
        }
        if coeffs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite functional coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    /// The `i`-th coordinate projection in dimension `dim`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut coeffs = vec![0.0; dim];
        coeffs[i] = 1.0;
        Self { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn apply(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coeffs.len(),
                found: v.len(),
            });
        }
        Ok(self.apply_unchecked(v))
    }

    #[inline]
    pub(crate) fn apply_unchecked(&self, v: &[f64]) -> f64 {
        self.coeffs.iter().zip(v).map(|(c, x)| c * x).sum()
    }
}

/// `x*(v)`.
pub fn apply(f: &Functional, v: &Vector) -> Result<f64> {
    f.apply(v.coords())
}

/// A finite probe set standing in for the dual space.
///
/// The pseudo-inverse of the `m × d` coefficient matrix is computed once at
/// construction, so repeated reconstructions are a matrix-vector product plus
/// the residual gate.
#[derive(Debug, Clone)]
pub struct DualFamily {
    members: Vec<Functional>,
    dim: usize,
    rank: usize,
    pinv: DMatrix<f64>,
}

impl DualFamily {
    /// Builds a family and determines its numerical rank. The family may be
    /// non-spanning; such a family cannot reconstruct.
    pub fn new(members: Vec<Functional>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::usage("dual family must have at least one member"))?;
        let dim = first.dim();
        if let Some(bad) = members.iter().find(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let m = members.len();
        let matrix = DMatrix::from_fn(m, dim, |r, c| members[r].coeffs[c]);
        let svd = matrix.svd(true, true);
        let smax = svd.singular_values.max();
        let cutoff = RANK_TOL * smax;
        let rank = if smax > 0.0 {
            svd.singular_values.iter().filter(|s| **s > cutoff).count()
        } else {
            0
        };
        let pinv = if smax > 0.0 {
            svd.pseudo_inverse(cutoff)
                .map_err(|e| Error::Numeric(e.to_string()))?
        } else {
            DMatrix::zeros(dim, m)
        };
        Ok(Self {
            members,
            dim,
            rank,
            pinv,
        })
    }

    /// Like [`DualFamily::new`] but rejects a family that does not span.
    pub fn spanning(members: Vec<Functional>) -> Result<Self> {
        let family = Self::new(members)?;
        family.require_spanning()?;
        Ok(family)
    }

    /// The coordinate projections `e_0*, …, e_{d−1}*`.
    pub fn standard_basis(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("space dimension must be at least 1"));
        }
        Self::spanning((0..dim).map(|i| Functional::coordinate(dim, i)).collect())
    }

    /// Partial-sum probes `f_j = e_0* + … + e_j*`. Spanning, and every member
    /// sees the first coordinate.
    pub fn partial_sums(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("space dimension must be at least 1"));
        }
        let members = (0..dim)
            .map(|j| {
                let coeffs = (0..dim).map(|i| if i <= j { 1.0 } else { 0.0 }).collect();
                Functional { coeffs }
            })
            .collect();
        Self::spanning(members)
    }

    pub fn members(&self) -> &[Functional] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_spanning(&self) -> bool {
        self.rank == self.dim
    }

    pub(crate) fn require_spanning(&self) -> Result<()> {
        if self.is_spanning() {
            Ok(())
        } else {
            Err(Error::RankDeficient {
                rank: self.rank,
                dim: self.dim,
            })
        }
    }

    /// Pairings `[f_j(v)]` of every member with `v`.
    pub fn pairings(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(self.members.iter().map(|f| f.apply_unchecked(v)).collect())
    }

    /// Least-squares vector for `pairings`, gated on the max-abs residual.
    pub fn reconstruct(&self, pairings: &[f64], tol: f64) -> Result<Vector> {
        self.require_spanning()?;
        if pairings.len() != self.members.len() {
            return Err(Error::DimensionMismatch {
                expected: self.members.len(),
                found: pairings.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        self.reconstruct_into(pairings, tol, &mut out)?;
        Ok(Vector(out))
    }

    /// Allocation-free core of [`DualFamily::reconstruct`]. Assumes the family
    /// spans and the slice lengths are right.
    pub(crate) fn reconstruct_into(
        &self,
        pairings: &[f64],
        tol: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if let Some(bad) = pairings.iter().find(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!("non-finite pairing {bad}")));
        }
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, p) in pairings.iter().enumerate() {
                acc += self.pinv[(i, j)] * p;
            }
            *slot = acc;
        }
        let mut residual: f64 = 0.0;
        for (f, p) in self.members.iter().zip(pairings) {
            residual = residual.max((f.apply_unchecked(out) - p).abs());
        }
        if residual > tol || residual.is_nan() {
            return Err(Error::PettisViolation { residual, tol });
        }
        Ok(())
    }
}

/// Free-function form of [`DualFamily::reconstruct`].
pub fn reconstruct(family: &DualFamily, pairings: &[f64], tol: f64) -> Result<Vector> {
    family.reconstruct(pairings, tol)
}
