//! Structured constraint sets `K = {θ : R(θ) ≤ R}`, their Euclidean
//! projections, and Gaussian-width tools for the tangent balls around a
//! population parameter.
//!
//! Each set family implements [`ModelSet`]. Families are registered by name in
//! a [`SetRegistry`] so experiment configs and the CLI can pick one at runtime.

mod registry;
mod sets;
mod tangent;

pub use registry::{SetFactory, SetParams, SetRegistry};
pub use sets::{L1Ball, LowRank, Sparsity, Subspace, Unconstrained};
pub use tangent::{width_mc, width_table, Relaxation, TangentBallSpec, WidthEstimate};

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Tolerance for `BᵀB = I` on subspace bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Relative cutoff (times σ₁) below which a singular value counts as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

/// A constraint set with an exact Euclidean projection.
pub trait ModelSet: Send + Sync + fmt::Debug {
    /// Registry name of the family.
    fn name(&self) -> &'static str;

    /// Ambient dimension `p`.
    fn dim(&self) -> usize;

    /// Projection without argument checks. Callers go through [`ModelSet::project`].
    fn project_unchecked(&self, v: ArrayView1<f64>) -> Array1<f64>;

    fn contains(&self, v: ArrayView1<f64>, tol: f64) -> bool;

    /// Squared Gaussian width of the tangent ball from the closed-form table,
    /// with the unspecified absolute constant taken as 1. `sparsity` is the
    /// number of nonzeros of the anchor, required for the ℓ1 family.
    fn width_squared(&self, sparsity: Option<usize>) -> Result<f64>;

    fn is_convex(&self) -> bool;

    /// Constant of the error recursion: 1 for convex sets, 2 otherwise.
    fn kappa(&self) -> f64 {
        if self.is_convex() {
            1.0
        } else {
            2.0
        }
    }

    /// Plain-data description of this set.
    fn spec(&self) -> ConstraintSpec;

    fn project(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_vector(v, self.dim())?;
        Ok(self.project_unchecked(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    Unconstrained,
    Sparsity {
        s: usize,
    },
    L1Ball {
        radius: f64,
    },
    /// Orthonormal `p × k` basis.
    Subspace {
        basis: Array2<f64>,
    },
    LowRank {
        r: usize,
        rows: usize,
        cols: usize,
    },
}

/// Description of a constraint set over `R^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub p: usize,
}

impl ConstraintSpec {
    pub fn unconstrained(p: usize) -> Self {
        Self {
            kind: ConstraintKind::Unconstrained,
            p,
        }
    }

    pub fn sparsity(p: usize, s: usize) -> Self {
        Self {
            kind: ConstraintKind::Sparsity { s },
            p,
        }
    }

    pub fn l1_ball(p: usize, radius: f64) -> Self {
        Self {
            kind: ConstraintKind::L1Ball { radius },
            p,
        }
    }

    pub fn subspace(basis: Array2<f64>) -> Self {
        let p = basis.nrows();
        Self {
            kind: ConstraintKind::Subspace { basis },
            p,
        }
    }

    pub fn low_rank(rows: usize, cols: usize, r: usize) -> Self {
        Self {
            kind: ConstraintKind::LowRank { r, rows, cols },
            p: rows * cols,
        }
    }

    /// Check the invariants and build the projection strategy.
    pub fn build(&self) -> Result<Arc<dyn ModelSet>> {
        Ok(match &self.kind {
            ConstraintKind::Unconstrained => Arc::new(Unconstrained::new(self.p)?),
            ConstraintKind::Sparsity { s } => Arc::new(Sparsity::new(self.p, *s)?),
            ConstraintKind::L1Ball { radius } => Arc::new(L1Ball::new(self.p, *radius)?),
            ConstraintKind::Subspace { basis } => {
                if basis.nrows() != self.p {
                    return Err(Error::invalid(format!(
                        "subspace basis has {} rows, expected p = {}",
                        basis.nrows(),
                        self.p
                    )));
                }
                Arc::new(Subspace::new(basis.clone())?)
            }
            ConstraintKind::LowRank { r, rows, cols } => {
                if rows * cols != self.p {
                    return Err(Error::invalid(format!(
                        "low-rank view {rows}x{cols} does not match p = {}",
                        self.p
                    )));
                }
                Arc::new(LowRank::new(*rows, *cols, *r)?)
            }
        })
    }
}

/// Euclidean projection of `v` onto `K`.
pub fn project(v: ArrayView1<f64>, k: &ConstraintSpec) -> Result<Array1<f64>> {
    k.build()?.project(v)
}

/// Projection onto the bias-extended set: only `θ` is constrained, `μ` passes through.
pub fn project_extended(
    theta: ArrayView1<f64>,
    mu: f64,
    k: &ConstraintSpec,
) -> Result<(Array1<f64>, f64)> {
    if !mu.is_finite() {
        return Err(Error::invalid("bias coordinate is not finite"));
    }
    Ok((project(theta, k)?, mu))
}

pub(crate) fn check_vector(v: ArrayView1<f64>, p: usize) -> Result<()> {
    if v.len() != p {
        return Err(Error::invalid(format!(
            "vector has length {}, constraint set lives in dimension {p}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("vector has non-finite entries"));
    }
    Ok(())
}
