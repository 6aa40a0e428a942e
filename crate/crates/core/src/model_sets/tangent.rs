//! Tangent balls and their computable relaxations.
//!
//! The tangent ball `C` at an anchor `θ★` is never materialized. Every
//! supremum over `C` is taken over a superset with a closed-form support
//! function instead:
//!
//! * `FullBall`: the unit ball of `R^p`, valid for every base set.
//! * `DoubledSparsity`: unit vectors with at most `2s` nonzeros. Differences
//!   of two `s`-sparse vectors are `2s`-sparse, so this contains `C` for the
//!   sparsity set and for an ℓ1 ball whose radius equals `||θ★||₁` at an
//!   `s`-sparse anchor.
//! * `ExactSubspace`: the unit ball of the subspace itself.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ConstraintKind, ConstraintSpec};
use crate::error::{Error, Result};
use crate::linalg::{norm2, top_k_norm};
use crate::rng::{rng_from_seed, Rng};

/// Anchor membership tolerance.
const ANCHOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    ExactSubspace,
    DoubledSparsity,
    FullBall,
}

impl Relaxation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Relaxation::ExactSubspace => "exact_subspace",
            Relaxation::DoubledSparsity => "doubled_sparsity",
            Relaxation::FullBall => "full_ball",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TangentBallSpec {
    base: ConstraintSpec,
    anchor: Array1<f64>,
    relaxation: Relaxation,
    /// Nonzero budget of the `DoubledSparsity` relaxation, capped at `p`.
    level: usize,
}

impl TangentBallSpec {
    pub fn new(base: ConstraintSpec, anchor: Array1<f64>, relaxation: Relaxation) -> Result<Self> {
        let set = base.build()?;
        if anchor.len() != base.p {
            return Err(Error::invalid(format!(
                "anchor has length {}, expected {}",
                anchor.len(),
                base.p
            )));
        }
        let proj = set.project(anchor.view())?;
        let dist = norm2((&proj - &anchor).view());
        if dist > ANCHOR_TOL * norm2(anchor.view()).max(1.0) {
            return Err(Error::invalid(format!(
                "anchor is not a member of the base set (distance {dist:e})"
            )));
        }
        let nnz = anchor.iter().filter(|x| **x != 0.0).count();
        let level = match (&base.kind, relaxation) {
            (_, Relaxation::FullBall) => base.p,
            (ConstraintKind::Sparsity { s }, Relaxation::DoubledSparsity) => (2 * s).min(base.p),
            (ConstraintKind::L1Ball { radius }, Relaxation::DoubledSparsity) => {
                let l1: f64 = anchor.iter().map(|x| x.abs()).sum();
                if (l1 - radius).abs() > ANCHOR_TOL * radius.max(1.0) || nnz == 0 {
                    return Err(Error::invalid(
                        "doubled-sparsity relaxation of an l1 ball needs a nonzero anchor on the boundary; use full_ball",
                    ));
                }
                (2 * nnz).min(base.p)
            }
            (ConstraintKind::Subspace { basis }, Relaxation::ExactSubspace) => basis.ncols(),
            (kind, r) => {
                return Err(Error::invalid(format!(
                    "relaxation {} does not cover constraint {kind:?}",
                    r.as_str()
                )))
            }
        };
        Ok(Self {
            base,
            anchor,
            relaxation,
            level,
        })
    }

    /// The tightest built-in relaxation for the base set.
    pub fn with_default_relaxation(base: ConstraintSpec, anchor: Array1<f64>) -> Result<Self> {
        let relaxation = match &base.kind {
            ConstraintKind::Sparsity { .. } => Relaxation::DoubledSparsity,
            ConstraintKind::L1Ball { radius } => {
                let l1: f64 = anchor.iter().map(|x| x.abs()).sum();
                if (l1 - radius).abs() <= ANCHOR_TOL * radius.max(1.0) && l1 > 0.0 {
                    Relaxation::DoubledSparsity
                } else {
                    Relaxation::FullBall
                }
            }
            ConstraintKind::Subspace { .. } => Relaxation::ExactSubspace,
            ConstraintKind::Unconstrained | ConstraintKind::LowRank { .. } => Relaxation::FullBall,
        };
        Self::new(base, anchor, relaxation)
    }

    pub fn base(&self) -> &ConstraintSpec {
        &self.base
    }

    pub fn anchor(&self) -> &Array1<f64> {
        &self.anchor
    }

    pub fn relaxation(&self) -> Relaxation {
        self.relaxation
    }

    pub fn p(&self) -> usize {
        self.base.p
    }

    /// Nonzero budget for `DoubledSparsity`, `p` for `FullBall`, `k` for `ExactSubspace`.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn anchor_sparsity(&self) -> usize {
        self.anchor.iter().filter(|x| **x != 0.0).count()
    }

    pub fn basis(&self) -> Option<&Array2<f64>> {
        match (&self.base.kind, self.relaxation) {
            (ConstraintKind::Subspace { basis }, Relaxation::ExactSubspace) => Some(basis),
            _ => None,
        }
    }

    /// `ω²(C)` from the closed-form table for the base set at this anchor.
    pub fn width_squared_table(&self) -> Result<f64> {
        let s = match self.base.kind {
            ConstraintKind::Sparsity { s } => Some(s),
            ConstraintKind::L1Ball { .. } => Some(self.anchor_sparsity().max(1)),
            _ => None,
        };
        width_table(&self.base, s)
    }

    /// `sup vᵀg` over unit vectors `v` in the relaxation (equal to `sup |vᵀg|`).
    pub fn sup_inner(&self, g: ArrayView1<f64>) -> f64 {
        match self.relaxation {
            Relaxation::FullBall => norm2(g),
            Relaxation::DoubledSparsity => match g.as_slice() {
                Some(sl) => top_k_norm(sl, self.level),
                None => top_k_norm(&g.to_vec(), self.level),
            },
            Relaxation::ExactSubspace => {
                let b = self
                    .basis()
                    .expect("exact subspace relaxation carries a basis");
                norm2(b.t().dot(&g).view())
            }
        }
    }

    /// Uniformly random coordinate support for the sparse relaxation
    /// (all coordinates for `FullBall`).
    pub fn sample_support(&self, rng: &mut Rng) -> Vec<usize> {
        match self.relaxation {
            Relaxation::DoubledSparsity => {
                let mut idx = sample(rng, self.p(), self.level).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..self.p()).collect(),
        }
    }

    /// A random unit vector of the relaxation.
    pub fn sample_direction(&self, rng: &mut Rng) -> Array1<f64> {
        let p = self.p();
        let mut v = Array1::zeros(p);
        match self.relaxation {
            Relaxation::FullBall => v.iter_mut().for_each(|x| *x = StandardNormal.sample(rng)),
            Relaxation::DoubledSparsity => {
                for i in self.sample_support(rng) {
                    v[i] = StandardNormal.sample(rng);
                }
            }
            Relaxation::ExactSubspace => {
                let b = self
                    .basis()
                    .expect("exact subspace relaxation carries a basis");
                let z: Array1<f64> = (0..b.ncols()).map(|_| StandardNormal.sample(rng)).collect();
                v = b.dot(&z);
            }
        }
        let nv = norm2(v.view());
        v / nv
    }
}

/// Squared Gaussian width `ω²(C)` from the closed-form table.
pub fn width_table(k: &ConstraintSpec, sparsity: Option<usize>) -> Result<f64> {
    k.build()?.width_squared(sparsity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `ω = E sup_{v∈relaxation} vᵀg`, `g ~ N(0, I_p)`.
pub fn width_mc(t: &TangentBallSpec, n_mc: usize, seed: u64) -> Result<WidthEstimate> {
    if n_mc < 2 {
        return Err(Error::invalid("width_mc needs at least two draws"));
    }
    let mut rng = rng_from_seed(seed);
    let mut g = Array1::<f64>::zeros(t.p());
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_mc {
        g.iter_mut()
            .for_each(|x| *x = StandardNormal.sample(&mut rng));
        let v = t.sup_inner(g.view());
        sum += v;
        sum_sq += v * v;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(WidthEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
    })
}
