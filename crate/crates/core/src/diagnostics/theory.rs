//! Empirical counterparts of ρ(C), ν(C), the restricted singular value, the
//! spectral norm of `[X 1]ᵀ[X 1]`, and residual clipping, each compared to a
//! calibrated bound.
//!
//! Calibration constants are frozen here: deviation `t = 3`, clipping `C = 3`,
//! spectral and width constant 5, RSV threshold 0.25, ρ constant 6.

use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;

use super::{EstimateSide, Quantity, ReportParams, TheoryReport};
use crate::error::{Error, Result};
use crate::linalg::{
    ext_basis, ext_columns, ext_gram_apply, power_iteration, spectral_norm_small, sym_eigen,
    top_k_indices,
};
use crate::model_sets::{Relaxation, TangentBallSpec};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::synth::{
    orlicz_norm_estimate, population_blm, population_blm_closed_form, residuals, support_of,
    Dataset, DistributionSpec, LinkFunction, PopulationBlm, SupportSampler,
};

/// Deviation parameter `t` in every bound.
pub const T_DEVIATION: f64 = 3.0;
/// Calibrated `c₀/2` for the restricted singular value.
pub const RSV_THRESHOLD: f64 = 0.25;
const CLIP_C: f64 = 3.0;
const SPECTRAL_C: f64 = 5.0;
const WIDTH_C: f64 = 5.0;
const NU_C: f64 = 5.0;
const RHO_C: f64 = 6.0;
const CLIP_BIAS_Z: f64 = 5.0;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 10_000;
/// Dense eigensolves are used when the smaller Gram side is at most this big.
const DENSE_LIMIT: usize = 600;

fn base_params(t: &TangentBallSpec, n: usize, seed: u64) -> ReportParams {
    ReportParams {
        n,
        p: t.p(),
        s: Some(t.anchor_sparsity()),
        dist: None,
        seed,
        relaxation: Some(t.relaxation()),
    }
}

fn check_design(x: ArrayView2<f64>, p: usize) -> Result<()> {
    if x.ncols() != p {
        return Err(Error::invalid(format!(
            "design has {} columns, expected {p}",
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("design has non-finite entries"));
    }
    Ok(())
}

/// Smallest and largest eigenvalue of `[X 1]ᵀ[X 1]`.
pub fn ext_gram_extremes(x: ArrayView2<f64>) -> Result<(f64, f64)> {
    let (n, p) = x.dim();
    let dim = p + 1;
    if n.min(dim) <= DENSE_LIMIT {
        let a = ext_columns(x, &(0..p).collect::<Vec<_>>());
        let gram = if n < dim {
            &a * a.transpose()
        } else {
            a.transpose() * &a
        };
        let (vals, _) = sym_eigen(gram);
        let lmax = vals.last().copied().unwrap_or(0.0).max(0.0);
        let lmin = if n < dim { 0.0 } else { vals[0].max(0.0) };
        return Ok((lmin, lmax));
    }
    let top = power_iteration(
        dim,
        |v| ext_gram_apply(x, v),
        0x5EED,
        POWER_TOL,
        POWER_MAX_ITER,
    )?
    .value;
    if n < dim {
        return Ok((0.0, top));
    }
    let shifted = power_iteration(
        dim,
        |v| {
            let g = ext_gram_apply(x, v);
            v * top - g
        },
        0x5EED + 1,
        POWER_TOL,
        POWER_MAX_ITER,
    )?
    .value;
    Ok(((top - shifted).max(0.0), top))
}

/// Top eigenvector of `[X 1]ᵀ[X 1]` (approximate; used to aim support sampling).
fn top_ext_direction(x: ArrayView2<f64>, seed: u64) -> Option<Array1<f64>> {
    power_iteration(x.ncols() + 1, |v| ext_gram_apply(x, v), seed, 1e-6, 2_000)
        .ok()
        .map(|r| r.vector)
}

/// Supports probed by the sampled estimators: the `level` largest coordinates
/// of the top Gram direction, the anchor's support padded at random, then
/// uniform draws, `n_dirs` in total.
fn probe_supports(
    x: ArrayView2<f64>,
    t: &TangentBallSpec,
    n_dirs: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let p = t.p();
    let level = t.level();
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n_dirs + 2);
    if let Some(v) = top_ext_direction(x, derive_seed(seed, 1)) {
        out.push(top_k_indices(v.slice(ndarray::s![..p]), level));
    }
    let mut anchored = support_of(t.anchor().view());
    anchored.truncate(level);
    if anchored.len() < level {
        let rest: Vec<usize> = (0..p).filter(|i| !anchored.contains(i)).collect();
        for k in sample(&mut rng, rest.len(), level - anchored.len()).into_iter() {
            anchored.push(rest[k]);
        }
    }
    anchored.sort_unstable();
    out.push(anchored);
    while out.len() < n_dirs.max(2) {
        out.push(t.sample_support(&mut rng));
    }
    out
}

/// `I` restricted to rows `a`, columns `b` of the extended index set.
fn partial_identity(a: &[usize], b: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len() + 1, b.len() + 1, |i, j| {
        let same = match (i < a.len(), j < b.len()) {
            (true, true) => a[i] == b[j],
            (false, false) => true,
            _ => false,
        };
        if same {
            1.0
        } else {
            0.0
        }
    })
}

/// Lower estimate of `ρ(C) = sup_{ũ,ṽ ∈ C_ext} |ũᵀ(I − η[X 1]ᵀ[X 1])ṽ|`.
///
/// `FullBall` and `ExactSubspace` are computed exactly. For `DoubledSparsity`
/// each probed pair of supports `(S₁, S₂)`, both extended by the bias
/// coordinate, contributes the largest singular value of the matching block,
/// which covers every direction pair on those supports (diagonal pairs and
/// polarization combinations included).
pub fn convergence_rho_estimate(
    x: ArrayView2<f64>,
    t: &TangentBallSpec,
    eta: f64,
    n_dirs: usize,
    seed: u64,
) -> Result<f64> {
    check_design(x, t.p())?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "eta must be a nonnegative number, got {eta}"
        )));
    }
    match t.relaxation() {
        Relaxation::FullBall => {
            let (lmin, lmax) = ext_gram_extremes(x)?;
            Ok((1.0 - eta * lmin).abs().max((1.0 - eta * lmax).abs()))
        }
        Relaxation::ExactSubspace => {
            let basis = t.basis().expect("subspace relaxation has a basis");
            let a = ext_basis(x, basis.view());
            let k = a.ncols();
            let m = DMatrix::identity(k, k) - (a.transpose() * &a) * eta;
            Ok(spectral_norm_small(&m))
        }
        Relaxation::DoubledSparsity => {
            let supports = probe_supports(x, t, n_dirs, seed);
            let blocks: Vec<DMatrix<f64>> = supports.iter().map(|s| ext_columns(x, s)).collect();
            let mut best = 0.0f64;
            let k = supports.len();
            for i in 0..k {
                for j in [i, (i + 1) % k] {
                    let m = partial_identity(&supports[i], &supports[j])
                        - (blocks[i].transpose() * &blocks[j]) * eta;
                    best = best.max(spectral_norm_small(&m));
                }
            }
            Ok(best)
        }
    }
}

/// Calibrated ρ bound: `min(1, 6(ω+t)/√n)` at the full step `η ≈ 1/n`,
/// `1 − η n RSV₀` for shorter steps.
pub fn rho_bound(eta: f64, n: usize, width_sq: f64) -> (f64, String) {
    let nf = n as f64;
    if eta * nf >= 0.999 {
        let b = (RHO_C * (width_sq.sqrt() + T_DEVIATION) / nf.sqrt()).min(1.0);
        (b, "min(1, 6(omega+3)/sqrt(n))".into())
    } else {
        (1.0 - RSV_THRESHOLD * eta * nf, "1 - 0.25*eta*n".into())
    }
}

pub fn rho_report(
    x: ArrayView2<f64>,
    t: &TangentBallSpec,
    eta: f64,
    n_dirs: usize,
    seed: u64,
) -> Result<TheoryReport> {
    let measured = convergence_rho_estimate(x, t, eta, n_dirs, seed)?;
    let (bound, formula) = rho_bound(eta, x.nrows(), t.width_squared_table()?);
    Ok(TheoryReport {
        quantity: Quantity::Rho,
        measured,
        bound,
        bound_formula: formula,
        satisfied: measured <= bound,
        side: match t.relaxation() {
            Relaxation::DoubledSparsity => EstimateSide::Lower,
            _ => EstimateSide::Exact,
        },
        params: base_params(t, x.nrows(), seed),
    })
}

/// `sup_{v ∈ relaxation} |vᵀXᵀw| + |1ᵀw|` with `w = y − Xθ★ − μ★1`.
pub fn effective_noise_nu(data: &Dataset, blm: &PopulationBlm, t: &TangentBallSpec) -> Result<f64> {
    if data.p() != t.p() {
        return Err(Error::invalid(
            "dataset and tangent ball differ in dimension",
        ));
    }
    let w = residuals(data, blm)?;
    let xtw = data.x.t().dot(&w);
    Ok(t.sup_inner(xtw.view()) + w.sum().abs())
}

/// `ν/n` against `5σ(ω+t)L(n)/√n`, `L = √ln n` (ψ₂) or `ln n` (ψ₁).
pub fn nu_report(
    data: &Dataset,
    blm: &PopulationBlm,
    t: &TangentBallSpec,
    sigma: f64,
    dist: DistributionSpec,
    seed: u64,
) -> Result<TheoryReport> {
    let n = data.n();
    let nf = n as f64;
    let measured = effective_noise_nu(data, blm, t)? / nf;
    let log_factor = match dist.orlicz_index() {
        2 => nf.ln().max(0.0).sqrt(),
        _ => nf.ln().max(0.0),
    };
    let bound =
        NU_C * sigma * (t.width_squared_table()?.sqrt() + T_DEVIATION) * log_factor / nf.sqrt();
    let mut params = base_params(t, n, seed);
    params.dist = Some(dist.as_str().into());
    Ok(TheoryReport {
        quantity: Quantity::Nu,
        measured,
        bound,
        bound_formula: "5*sigma*(omega+3)*L(n)/sqrt(n)".into(),
        satisfied: measured <= bound,
        side: EstimateSide::Exact,
        params,
    })
}

/// Upper estimate of `min_{ṽ ∈ C_ext} ||[X 1]ṽ||²/n`.
///
/// Exact over `FullBall` (zero when `n < p+1`) and `ExactSubspace`; for
/// `DoubledSparsity` the minimum over probed supports of the smallest
/// eigenvalue of the extended restricted Gram block.
pub fn rsv_lower_estimate(
    x: ArrayView2<f64>,
    t: &TangentBallSpec,
    n_dirs: usize,
    seed: u64,
) -> Result<f64> {
    check_design(x, t.p())?;
    let nf = x.nrows() as f64;
    let min_eig = |a: DMatrix<f64>| sym_eigen(a.transpose() * &a).0[0].max(0.0) / nf;
    Ok(match t.relaxation() {
        Relaxation::FullBall => ext_gram_extremes(x)?.0 / nf,
        Relaxation::ExactSubspace => {
            let basis = t.basis().expect("subspace relaxation has a basis");
            min_eig(ext_basis(x, basis.view()))
        }
        Relaxation::DoubledSparsity => probe_supports(x, t, n_dirs, seed)
            .iter()
            .map(|s| min_eig(ext_columns(x, s)))
            .fold(f64::INFINITY, f64::min),
    })
}

pub fn rsv_lower_check(
    x: ArrayView2<f64>,
    t: &TangentBallSpec,
    n_dirs: usize,
    seed: u64,
) -> Result<TheoryReport> {
    let measured = rsv_lower_estimate(x, t, n_dirs, seed)?;
    Ok(TheoryReport {
        quantity: Quantity::RsvLower,
        measured,
        bound: RSV_THRESHOLD,
        bound_formula: "0.25".into(),
        satisfied: measured >= RSV_THRESHOLD,
        side: match t.relaxation() {
            Relaxation::DoubledSparsity => EstimateSide::Upper,
            _ => EstimateSide::Exact,
        },
        params: base_params(t, x.nrows(), seed),
    })
}

/// `||[X 1]ᵀ[X 1]||` by power iteration, checked against `n` from below and
/// `5(n+p)ln³(n+p)` from above.
pub fn spectral_chernoff_check(x: ArrayView2<f64>) -> Result<TheoryReport> {
    let (n, p) = x.dim();
    check_design(x, p)?;
    let measured = power_iteration(
        p + 1,
        |v| ext_gram_apply(x, v),
        0x5EED,
        POWER_TOL,
        POWER_MAX_ITER,
    )?
    .value;
    let q = (n + p) as f64;
    let bound = SPECTRAL_C * q * q.ln().powi(3);
    // The estimate approaches the true norm from below.
    let lower_ok = measured >= n as f64 * (1.0 - 1e-6);
    Ok(TheoryReport {
        quantity: Quantity::SpectralUpper,
        measured,
        bound,
        bound_formula: "n <= measured <= 5(n+p)ln^3(n+p)".into(),
        satisfied: measured <= bound && lower_ok,
        side: EstimateSide::Exact,
        params: ReportParams {
            n,
            p,
            seed: 0,
            ..Default::default()
        },
    })
}

/// Clipping level `B = 3√(ln n)` for ψ₂ data or `3 ln n` for ψ₁ data.
pub fn clip_level(n: usize, a: u8) -> Result<f64> {
    let l = (n.max(1) as f64).ln();
    match a {
        2 => Ok(CLIP_C * l.sqrt()),
        1 => Ok(CLIP_C * l),
        _ => Err(Error::invalid(format!(
            "Orlicz index must be 1 or 2, got {a}"
        ))),
    }
}

/// Fraction of residual entries changed by clipping at `σB`.
pub fn clip_check(w: ArrayView1<f64>, sigma: f64, a: u8) -> Result<TheoryReport> {
    if w.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be nonnegative"));
    }
    let level = sigma * clip_level(w.len(), a)?;
    let clipped = w.iter().filter(|v| v.abs() > level).count();
    let measured = clipped as f64 / w.len() as f64;
    Ok(TheoryReport {
        quantity: Quantity::ClipFraction,
        measured,
        bound: 0.0,
        bound_formula: if a == 2 {
            "B = 3 sqrt(ln n)"
        } else {
            "B = 3 ln n"
        }
        .into(),
        satisfied: clipped == 0,
        side: EstimateSide::Exact,
        params: ReportParams {
            n: w.len(),
            ..Default::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipBiasEstimate {
    /// `||Ê[clip(w, σB)·x]||₂`
    pub norm: f64,
    /// `√(Σⱼ se_j²)`, the Monte Carlo noise level of `norm`.
    pub stderr: f64,
    pub sigma: f64,
}

fn clip_bias_estimate(
    dist: DistributionSpec,
    link: LinkFunction,
    beta: ArrayView1<f64>,
    b: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<ClipBiasEstimate> {
    if mc_samples < 2 {
        return Err(Error::invalid("clip_bias_check needs at least two samples"));
    }
    if !(b >= 0.0) {
        return Err(Error::invalid("clipping level must be nonnegative"));
    }
    let (theta_star, mu_star) = match population_blm_closed_form(beta, dist, link) {
        Some(exact) => exact,
        None => {
            let blm = population_blm(
                beta,
                dist,
                link,
                mc_samples.max(10_000),
                derive_seed(seed, stream::POPULATION),
            )?;
            (blm.theta_star, blm.mu_star)
        }
    };
    let sampler = SupportSampler::new(beta, dist, link)?;
    let k = sampler.support.len();
    let t: Vec<f64> = sampler.support.iter().map(|&i| theta_star[i]).collect();
    let draw_seed = derive_seed(seed, stream::CHECKS);
    let mut xs = vec![0.0; k];
    let residual = |rng: &mut _, xs: &mut [f64]| {
        let y = sampler.draw(rng, xs);
        let fit: f64 = xs.iter().zip(&t).map(|(a, b)| a * b).sum();
        y - fit - mu_star
    };

    // Pass 1: the residual scale σ.
    let mut rng = rng_from_seed(draw_seed);
    let w: Array1<f64> = (0..mc_samples)
        .map(|_| residual(&mut rng, &mut xs))
        .collect();
    let sigma = orlicz_norm_estimate(w.view(), dist.orlicz_index())?;
    drop(w);

    // Pass 2: the same draws, clipped.
    let level = sigma * b;
    let mut rng = rng_from_seed(draw_seed);
    let mut sum = vec![0.0; k];
    let mut sum2 = vec![0.0; k];
    for _ in 0..mc_samples {
        let c = residual(&mut rng, &mut xs).clamp(-level, level);
        for j in 0..k {
            let v = c * xs[j];
            sum[j] += v;
            sum2[j] += v * v;
        }
    }
    let m = mc_samples as f64;
    let mut norm_sq = 0.0;
    let mut var_sum = 0.0;
    for j in 0..k {
        let mean = sum[j] / m;
        norm_sq += mean * mean;
        var_sum += ((sum2[j] / m - mean * mean).max(0.0) * m / (m - 1.0)) / m;
    }
    Ok(ClipBiasEstimate {
        norm: norm_sq.sqrt(),
        stderr: var_sum.sqrt(),
        sigma,
    })
}

/// `||E[clip(w, σB)·x]||₂` by Monte Carlo, satisfied when within 5 standard
/// errors of zero. `σ` is the empirical Orlicz norm of the simulated residuals.
pub fn clip_bias_check(
    dist: DistributionSpec,
    link: LinkFunction,
    beta: ArrayView1<f64>,
    b: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<TheoryReport> {
    let est = clip_bias_estimate(dist, link, beta, b, mc_samples, seed)?;
    let bound = CLIP_BIAS_Z * est.stderr;
    Ok(TheoryReport {
        quantity: Quantity::ClipBias,
        measured: est.norm,
        bound,
        bound_formula: "5*stderr".into(),
        satisfied: est.norm <= bound,
        side: EstimateSide::Exact,
        params: ReportParams {
            n: mc_samples,
            p: beta.len(),
            s: Some(support_of(beta).len()),
            dist: Some(dist.as_str().into()),
            seed,
            relaxation: None,
        },
    })
}

/// `sup_{u ∈ relaxation} uᵀx̄` for the mean `x̄` of `n` fresh rows, against
/// `5(ω+t)/√n`, once per replication.
pub fn empirical_width_check(
    dist: DistributionSpec,
    t: &TangentBallSpec,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<Vec<TheoryReport>> {
    if n == 0 {
        return Err(Error::invalid("empirical width needs n >= 1"));
    }
    let p = t.p();
    let nf = n as f64;
    let bound = WIDTH_C * (t.width_squared_table()?.sqrt() + T_DEVIATION) / nf.sqrt();
    (0..replications)
        .map(|r| {
            let rep_seed = derive_seed(seed, r as u64);
            let mut rng = rng_from_seed(rep_seed);
            let mut xbar = Array1::<f64>::zeros(p);
            for _ in 0..n {
                xbar.iter_mut().for_each(|v| *v += dist.draw(&mut rng));
            }
            xbar /= nf;
            let measured = t.sup_inner(xbar.view());
            let mut params = base_params(t, n, rep_seed);
            params.dist = Some(dist.as_str().into());
            Ok(TheoryReport {
                quantity: Quantity::EmpiricalWidth,
                measured,
                bound,
                bound_formula: "5(omega+3)/sqrt(n)".into(),
                satisfied: measured <= bound,
                side: EstimateSide::Exact,
                params,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;
    use crate::model_sets::ConstraintSpec;
    use crate::synth::{make_ground_truth, sample_design, LinkKind};
    use ndarray::{array, Array2};

    fn sparse_tangent(p: usize, s: usize, seed: u64) -> TangentBallSpec {
        let beta = make_ground_truth(p, s, seed).unwrap();
        TangentBallSpec::new(
            ConstraintSpec::sparsity(p, s),
            beta,
            Relaxation::DoubledSparsity,
        )
        .unwrap()
    }

    #[test]
    fn gram_extremes_match_dense() {
        let x = sample_design(7, 4, DistributionSpec::Gaussian, 1).unwrap();
        let a = ext_columns(x.view(), &[0, 1, 2, 3]);
        let (vals, _) = sym_eigen(a.transpose() * &a);
        let (lmin, lmax) = ext_gram_extremes(x.view()).unwrap();
        assert!((lmin - vals[0]).abs() < 1e-9);
        assert!((lmax - vals[4]).abs() < 1e-9);
        let wide = sample_design(3, 6, DistributionSpec::Gaussian, 1).unwrap();
        assert_eq!(ext_gram_extremes(wide.view()).unwrap().0, 0.0);
    }

    #[test]
    fn rho_at_zero_step_is_one() {
        let x = sample_design(30, 40, DistributionSpec::Gaussian, 2).unwrap();
        for t in [
            sparse_tangent(40, 3, 1),
            TangentBallSpec::new(
                ConstraintSpec::unconstrained(40),
                Array1::zeros(40),
                Relaxation::FullBall,
            )
            .unwrap(),
        ] {
            assert_eq!(
                convergence_rho_estimate(x.view(), &t, 0.0, 8, 3).unwrap(),
                1.0
            );
        }
    }

    #[test]
    fn rho_vanishes_for_scaled_orthogonal_design() {
        // [X 1] with orthogonal columns of squared norm 4: η = 1/4 kills the form.
        let x = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let t = TangentBallSpec::new(
            ConstraintSpec::unconstrained(2),
            Array1::zeros(2),
            Relaxation::FullBall,
        )
        .unwrap();
        assert!(convergence_rho_estimate(x.view(), &t, 0.25, 4, 0).unwrap() < 1e-12);
        assert!((rsv_lower_estimate(x.view(), &t, 4, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rsv_exact_subspace_matches_grid() {
        let x = sample_design(40, 3, DistributionSpec::Gaussian, 5).unwrap();
        let mut basis = Array2::zeros((3, 1));
        basis[[0, 0]] = 1.0;
        let t = TangentBallSpec::new(
            ConstraintSpec::subspace(basis),
            Array1::zeros(3),
            Relaxation::ExactSubspace,
        )
        .unwrap();
        let got = rsv_lower_estimate(x.view(), &t, 4, 0).unwrap();
        let col = x.column(0);
        let grid = (0..200_000)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / 200_000.0;
                let v = &col * a.cos() + a.sin();
                v.dot(&v) / 40.0
            })
            .fold(f64::INFINITY, f64::min);
        assert!(got <= grid + 1e-12 && grid - got < 1e-8, "{got} vs {grid}");
    }

    #[test]
    fn spectral_zero_and_identity_designs() {
        let z = Array2::zeros((6, 4));
        let r = spectral_chernoff_check(z.view()).unwrap();
        assert_eq!(r.measured, 6.0);
        assert!(r.satisfied);
        for n in 2..=8 {
            let x = Array2::eye(n);
            let a = ext_columns(x.view(), &(0..n).collect::<Vec<_>>());
            let want = *sym_eigen(a.transpose() * &a).0.last().unwrap();
            let got = spectral_chernoff_check(x.view()).unwrap().measured;
            assert!((got - want).abs() <= 1e-7 * want, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn clip_fraction_cases() {
        assert_eq!(
            clip_check(Array1::zeros(10).view(), 0.0, 2)
                .unwrap()
                .measured,
            0.0
        );
        let mut w = Array1::zeros(100);
        let level = clip_level(100, 2).unwrap();
        w[17] = 10.0 * level;
        let r = clip_check(w.view(), 1.0, 2).unwrap();
        assert_eq!(r.measured, 0.01);
        assert!(!r.satisfied);
    }

    #[test]
    fn clip_bias_trivial_cases() {
        let beta = make_ground_truth(50, 4, 9).unwrap();
        let lin = LinkFunction::new(LinkKind::Linear);
        let r = clip_bias_check(
            DistributionSpec::CenteredExponential,
            lin,
            beta.view(),
            5.0,
            10_000,
            1,
        )
        .unwrap();
        assert_eq!(r.measured, 0.0);
        assert!(r.satisfied);
        let sign = LinkFunction::new(LinkKind::Sign);
        let r = clip_bias_check(
            DistributionSpec::Gaussian,
            sign,
            beta.view(),
            0.0,
            10_000,
            1,
        )
        .unwrap();
        assert_eq!(r.measured, 0.0);
    }

    #[test]
    fn nu_single_ones_column() {
        let x = Array2::ones((5, 1));
        let w = array![0.5, -1.0, 2.0, 0.25, 1.0];
        let blm = PopulationBlm {
            theta_star: array![0.0],
            mu_star: 0.0,
            mc_samples: 0,
            stderr: 0.0,
            coord_stderr: array![0.0],
            mu_stderr: 0.0,
        };
        let data = Dataset::new(x, w.clone()).unwrap();
        let t = TangentBallSpec::new(
            ConstraintSpec::unconstrained(1),
            array![0.0],
            Relaxation::FullBall,
        )
        .unwrap();
        assert!((effective_noise_nu(&data, &blm, &t).unwrap() - 2.0 * w.sum().abs()).abs() < 1e-15);
    }

    #[test]
    fn nu_doubled_equals_full_when_2s_is_p() {
        let p = 6;
        let beta = array![0.6, 0.0, 0.0, 0.8, 0.0, 0.0];
        let x = sample_design(20, p, DistributionSpec::Gaussian, 4).unwrap();
        let y = x.dot(&beta).mapv(f64::signum);
        let data = Dataset::new(x, y).unwrap();
        let blm = crate::synth::population_blm(
            beta.view(),
            DistributionSpec::Gaussian,
            LinkFunction::new(LinkKind::Sign),
            10_000,
            1,
        )
        .unwrap();
        let anchor = blm.theta_star.clone();
        let ds = TangentBallSpec::new(
            ConstraintSpec::sparsity(p, 3),
            anchor.clone(),
            Relaxation::DoubledSparsity,
        )
        .unwrap();
        let fb = TangentBallSpec::new(ConstraintSpec::sparsity(p, 3), anchor, Relaxation::FullBall)
            .unwrap();
        let (a, b) = (
            effective_noise_nu(&data, &blm, &ds).unwrap(),
            effective_noise_nu(&data, &blm, &fb).unwrap(),
        );
        assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn empirical_width_single_sample() {
        let t = TangentBallSpec::new(
            ConstraintSpec::unconstrained(5),
            Array1::zeros(5),
            Relaxation::FullBall,
        )
        .unwrap();
        let r = empirical_width_check(DistributionSpec::Gaussian, &t, 1, 1, 3).unwrap();
        let mut rng = rng_from_seed(r[0].params.seed);
        let x1: Array1<f64> = (0..5)
            .map(|_| DistributionSpec::Gaussian.draw(&mut rng))
            .collect();
        assert_eq!(r[0].measured, norm2(x1.view()));
    }
}
