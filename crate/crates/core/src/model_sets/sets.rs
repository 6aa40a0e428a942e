use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};

use super::{ConstraintKind, ConstraintSpec, ModelSet, ORTHONORMAL_TOL, RANK_CUTOFF};
use crate::error::{Error, Result};
use crate::linalg::top_k_indices;

fn check_dim(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::invalid("ambient dimension must be positive"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Unconstrained {
    p: usize,
}

impl Unconstrained {
    pub fn new(p: usize) -> Result<Self> {
        check_dim(p)?;
        Ok(Self { p })
    }
}

impl ModelSet for Unconstrained {
    fn name(&self) -> &'static str {
        "unconstrained"
    }

    fn dim(&self) -> usize {
        self.p
    }

    fn project_unchecked(&self, v: ArrayView1<f64>) -> Array1<f64> {
        v.to_owned()
    }

    fn contains(&self, v: ArrayView1<f64>, _tol: f64) -> bool {
        v.len() == self.p
    }

    fn width_squared(&self, _sparsity: Option<usize>) -> Result<f64> {
        Ok(self.p as f64)
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn spec(&self) -> ConstraintSpec {
        ConstraintSpec::unconstrained(self.p)
    }
}

/// `{θ : ||θ||₀ ≤ s}`; projection is hard thresholding.
#[derive(Debug, Clone)]
pub struct Sparsity {
    p: usize,
    s: usize,
}

impl Sparsity {
    pub fn new(p: usize, s: usize) -> Result<Self> {
        check_dim(p)?;
        if s == 0 || s > p {
            return Err(Error::invalid(format!(
                "sparsity level s = {s} must lie in 1..={p}"
            )));
        }
        Ok(Self { p, s })
    }

    pub fn level(&self) -> usize {
        self.s
    }
}

fn sparse_width(p: usize, s: usize) -> Result<f64> {
    if s == 0 || s > p {
        return Err(Error::invalid(format!(
            "sparsity level s = {s} must lie in 1..={p}"
        )));
    }
    Ok(s as f64 * (6.0 * p as f64 / s as f64).ln())
}

impl ModelSet for Sparsity {
    fn name(&self) -> &'static str {
        "sparsity"
    }

    fn dim(&self) -> usize {
        self.p
    }

    fn project_unchecked(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let keep = top_k_indices(v, self.s);
        let mut out = Array1::zeros(self.p);
        for i in keep {
            out[i] = v[i];
        }
        out
    }

    fn contains(&self, v: ArrayView1<f64>, _tol: f64) -> bool {
        v.len() == self.p && v.iter().filter(|x| **x != 0.0).count() <= self.s
    }

    fn width_squared(&self, sparsity: Option<usize>) -> Result<f64> {
        sparse_width(self.p, sparsity.unwrap_or(self.s))
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn spec(&self) -> ConstraintSpec {
        ConstraintSpec::sparsity(self.p, self.s)
    }
}

/// `{θ : ||θ||₁ ≤ R}`; sort-and-threshold projection.
#[derive(Debug, Clone)]
pub struct L1Ball {
    p: usize,
    radius: f64,
}

impl L1Ball {
    pub fn new(p: usize, radius: f64) -> Result<Self> {
        check_dim(p)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "l1 radius must be positive, got {radius}"
            )));
        }
        Ok(Self { p, radius })
    }
}

impl ModelSet for L1Ball {
    fn name(&self) -> &'static str {
        "l1"
    }

    fn dim(&self) -> usize {
        self.p
    }

    fn project_unchecked(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let l1: f64 = v.iter().map(|x| x.abs()).sum();
        if l1 <= self.radius {
            return v.to_owned();
        }
        let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        u.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut cumsum = 0.0;
        let mut threshold = 0.0;
        for (j, &uj) in u.iter().enumerate() {
            cumsum += uj;
            let t = (cumsum - self.radius) / (j + 1) as f64;
            if uj > t {
                threshold = t;
            } else {
                break;
            }
        }
        v.mapv(|x| x.signum() * (x.abs() - threshold).max(0.0))
    }

    fn contains(&self, v: ArrayView1<f64>, tol: f64) -> bool {
        v.len() == self.p && v.iter().map(|x| x.abs()).sum::<f64>() <= self.radius + tol
    }

    fn width_squared(&self, sparsity: Option<usize>) -> Result<f64> {
        let s = sparsity
            .ok_or_else(|| Error::invalid("l1 width needs the sparsity level of the anchor"))?;
        sparse_width(self.p, s)
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn spec(&self) -> ConstraintSpec {
        ConstraintSpec::l1_ball(self.p, self.radius)
    }
}

/// Linear subspace spanned by the orthonormal columns of `basis`.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Array2<f64>,
}

impl Subspace {
    pub fn new(basis: Array2<f64>) -> Result<Self> {
        check_dim(basis.nrows())?;
        let k = basis.ncols();
        if k == 0 || k > basis.nrows() {
            return Err(Error::invalid(format!(
                "subspace dimension {k} must lie in 1..={}",
                basis.nrows()
            )));
        }
        if basis.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("subspace basis has non-finite entries"));
        }
        let gram = basis.t().dot(&basis);
        for ((i, j), g) in gram.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            if (g - want).abs() > ORTHONORMAL_TOL {
                return Err(Error::invalid(format!(
                    "subspace basis is not orthonormal: (BᵀB)[{i},{j}] = {g}"
                )));
            }
        }
        Ok(Self { basis })
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }
}

impl ModelSet for Subspace {
    fn name(&self) -> &'static str {
        "subspace"
    }

    fn dim(&self) -> usize {
        self.basis.nrows()
    }

    fn project_unchecked(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.basis.dot(&self.basis.t().dot(&v))
    }

    fn contains(&self, v: ArrayView1<f64>, tol: f64) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        let r = &v - &self.project_unchecked(v);
        let scale = v.dot(&v).sqrt().max(1.0);
        r.dot(&r).sqrt() <= tol * scale
    }

    fn width_squared(&self, _sparsity: Option<usize>) -> Result<f64> {
        Ok(self.basis.ncols() as f64)
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn spec(&self) -> ConstraintSpec {
        ConstraintSpec::subspace(self.basis.clone())
    }
}

/// Vectors whose `rows × cols` row-major matricization has rank ≤ r.
#[derive(Debug, Clone)]
pub struct LowRank {
    rows: usize,
    cols: usize,
    r: usize,
}

impl LowRank {
    pub fn new(rows: usize, cols: usize, r: usize) -> Result<Self> {
        check_dim(rows * cols)?;
        if r == 0 || r > rows.min(cols) {
            return Err(Error::invalid(format!(
                "rank {r} must lie in 1..={} for a {rows}x{cols} view",
                rows.min(cols)
            )));
        }
        Ok(Self { rows, cols, r })
    }

    fn matricize(&self, v: ArrayView1<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| v[i * self.cols + j])
    }

    /// Singular values of the matricized vector, descending.
    pub fn singular_values(&self, v: ArrayView1<f64>) -> Vec<f64> {
        let mut sv: Vec<f64> = self
            .matricize(v)
            .singular_values()
            .iter()
            .copied()
            .collect();
        sv.sort_unstable_by(|a, b| b.total_cmp(a));
        sv
    }
}

impl ModelSet for LowRank {
    fn name(&self) -> &'static str {
        "lowrank"
    }

    fn dim(&self) -> usize {
        self.rows * self.cols
    }

    fn project_unchecked(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let m = self.matricize(v);
        let svd = m.svd(true, true);
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => unreachable!("svd was asked for both factors"),
        };
        let sigma = &svd.singular_values;
        let mut order: Vec<usize> = (0..sigma.len()).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
        let top = sigma[order[0]];
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for &i in order.iter().take(self.r) {
            if sigma[i] <= RANK_CUTOFF * top || sigma[i] == 0.0 {
                break;
            }
            out += sigma[i] * u.column(i) * vt.row(i);
        }
        Array1::from_shape_fn(self.dim(), |k| out[(k / self.cols, k % self.cols)])
    }

    fn contains(&self, v: ArrayView1<f64>, tol: f64) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        let sv = self.singular_values(v);
        let cut = (RANK_CUTOFF * sv[0]).max(tol);
        sv.iter().skip(self.r).all(|s| *s <= cut)
    }

    fn width_squared(&self, _sparsity: Option<usize>) -> Result<f64> {
        Ok(self.r as f64 * (self.dim() as f64).sqrt())
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn spec(&self) -> ConstraintSpec {
        ConstraintSpec {
            kind: ConstraintKind::LowRank {
                r: self.r,
                rows: self.rows,
                cols: self.cols,
            },
            p: self.dim(),
        }
    }
}
