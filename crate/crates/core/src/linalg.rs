//! Dense helpers shared by the solver and the diagnostics: products with the
//! bias-augmented design `[X 1]`, restricted Gram blocks, power iteration and
//! small symmetric eigenproblems.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// `X θ + μ 1`
pub fn ext_mul(x: ArrayView2<f64>, theta: ArrayView1<f64>, mu: f64) -> Array1<f64> {
    let mut out = x.dot(&theta);
    if mu != 0.0 {
        out.mapv_inplace(|v| v + mu);
    }
    out
}

/// `[X 1]ᵀ r`, returned as the `X` part and the bias coordinate.
pub fn ext_tmul(x: ArrayView2<f64>, r: ArrayView1<f64>) -> (Array1<f64>, f64) {
    (x.t().dot(&r), r.sum())
}

pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// ℓ2 norm of the `k` largest-magnitude entries, i.e. `sup vᵀg` over unit
/// vectors with at most `k` nonzeros.
pub fn top_k_norm(g: &[f64], k: usize) -> f64 {
    if k >= g.len() {
        return g.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    if k == 0 {
        return 0.0;
    }
    let mut sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    let (_, _, upper) = sq.select_nth_unstable_by(g.len() - k - 1, |a, b| a.total_cmp(b));
    upper.iter().sum::<f64>().sqrt()
}

/// Indices of the `k` largest-magnitude entries, ties resolved toward the
/// lower index. Returned in ascending index order.
pub fn top_k_indices(v: ArrayView1<f64>, k: usize) -> Vec<usize> {
    let p = v.len();
    let mut idx: Vec<usize> = (0..p).collect();
    if k < p {
        let cmp = |a: &usize, b: &usize| v[*b].abs().total_cmp(&v[*a].abs()).then(a.cmp(b));
        if k > 0 {
            idx.select_nth_unstable_by(k - 1, cmp);
        }
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// Columns `cols` of `X` followed by an all-ones column, as an `n × (|cols|+1)` matrix.
pub fn ext_columns(x: ArrayView2<f64>, cols: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    let k = cols.len();
    DMatrix::from_fn(n, k + 1, |i, j| if j < k { x[[i, cols[j]]] } else { 1.0 })
}

/// `[X B 1]` for an orthonormal basis `B` (p × k).
pub fn ext_basis(x: ArrayView2<f64>, basis: ArrayView2<f64>) -> DMatrix<f64> {
    let xb = x.dot(&basis);
    let n = xb.nrows();
    let k = xb.ncols();
    DMatrix::from_fn(n, k + 1, |i, j| if j < k { xb[[i, j]] } else { 1.0 })
}

/// Eigenvalues of a symmetric matrix in ascending order, with matching
/// eigenvector columns.
pub fn sym_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vals, vecs)
}

/// Largest singular value of a small dense matrix.
pub fn spectral_norm_small(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let (vals, _) = sym_eigen(gram);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    /// Estimate of the largest eigenvalue magnitude.
    pub value: f64,
    pub vector: Array1<f64>,
    pub iterations: usize,
}

/// Power iteration for a symmetric linear operator given as a mat-vec closure.
/// Converges to the largest |eigenvalue|; the estimate `||A v||` approaches it
/// from below. Start vector is Gaussian from a fixed seed.
pub fn power_iteration<F>(
    dim: usize,
    apply: F,
    seed: u64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<PowerResult>
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
{
    if dim == 0 {
        return Err(Error::invalid("power iteration on an empty operator"));
    }
    let mut rng = rng_from_seed(seed);
    let mut v: Array1<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n0 = norm2(v.view());
    v /= n0;
    let mut prev = f64::NAN;
    for it in 1..=max_iter {
        let w = apply(&v);
        let est = norm2(w.view());
        if !est.is_finite() {
            return Err(Error::Numeric(
                "power iteration produced a non-finite value".into(),
            ));
        }
        if est == 0.0 {
            return Ok(PowerResult {
                value: 0.0,
                vector: v,
                iterations: it,
            });
        }
        let converged = prev.is_finite() && (est - prev).abs() <= rel_tol * est;
        v = w / est;
        if converged {
            return Ok(PowerResult {
                value: est,
                vector: v,
                iterations: it,
            });
        }
        prev = est;
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge in {max_iter} steps"
    )))
}

/// `[X 1]ᵀ [X 1] v` with `v` laid out as `[θ; μ]`.
pub fn ext_gram_apply(x: ArrayView2<f64>, v: &Array1<f64>) -> Array1<f64> {
    let p = x.ncols();
    let theta = v.slice(ndarray::s![..p]);
    let xv = ext_mul(x, theta, v[p]);
    let (g, b) = ext_tmul(x, xv.view());
    let mut out = Array1::zeros(p + 1);
    out.slice_mut(ndarray::s![..p]).assign(&g);
    out[p] = b;
    out
}

pub fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(x.ncols()))
}

pub fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}
