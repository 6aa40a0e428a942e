//! Seeded synthetic data: isotropic designs, single-index labels, and the
//! population best linear model `(θ★, μ★) = (E[yx], E[y])` by Monte Carlo.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::rng::{rng_from_seed, Rng};

/// Entry distribution of the design. Both kinds are zero-mean and unit-variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSpec {
    /// `N(0, 1)` entries (ψ₂-bounded).
    Gaussian,
    /// `E − 1` with `E ~ Exp(1)` (ψ₁-bounded).
    CenteredExponential,
}

impl DistributionSpec {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistributionSpec::Gaussian => "gaussian",
            DistributionSpec::CenteredExponential => "centered_exponential",
        }
    }

    /// Orlicz index `a` of the class this distribution belongs to.
    pub fn orlicz_index(&self) -> u8 {
        match self {
            DistributionSpec::Gaussian => 2,
            DistributionSpec::CenteredExponential => 1,
        }
    }

    #[inline]
    pub fn draw(&self, rng: &mut Rng) -> f64 {
        match self {
            DistributionSpec::Gaussian => StandardNormal.sample(rng),
            DistributionSpec::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "centered_exponential" | "exponential" => Ok(Self::CenteredExponential),
            other => Err(Error::Config(format!("unknown distribution `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Linear,
    Sign,
    Relu,
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "sign" => Ok(Self::Sign),
            "relu" => Ok(Self::Relu),
            other => Err(Error::Config(format!("unknown link `{other}`"))),
        }
    }
}

/// Link `φ` of the single-index model `y = φ(βᵀx) + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkFunction {
    pub kind: LinkKind,
    #[serde(default)]
    pub noise_std: f64,
}

impl LinkFunction {
    pub fn new(kind: LinkKind) -> Self {
        Self {
            kind,
            noise_std: 0.0,
        }
    }

    pub fn with_noise(kind: LinkKind, noise_std: f64) -> Self {
        Self { kind, noise_std }
    }

    pub fn as_str(&self) -> &'static str {
        match self.kind {
            LinkKind::Linear => "linear",
            LinkKind::Sign => "sign",
            LinkKind::Relu => "relu",
        }
    }

    /// Noise-free link value. `sign(0)` is taken as `+1`.
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self.kind {
            LinkKind::Linear => z,
            LinkKind::Sign => {
                if z >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            LinkKind::Relu => z.max(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_std must be a nonnegative number, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Design matrix and labels, with no ground truth attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but there are {} labels",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub data: Dataset,
    /// Unit-norm, `s`-sparse ground-truth direction.
    pub beta: Array1<f64>,
    pub dist: DistributionSpec,
    pub link: LinkFunction,
    pub seed: u64,
}

impl SyntheticDataset {
    /// Design from `design_seed`, labels (noise) from `label_seed`.
    pub fn generate(
        n: usize,
        beta: Array1<f64>,
        dist: DistributionSpec,
        link: LinkFunction,
        design_seed: u64,
        label_seed: u64,
    ) -> Result<Self> {
        let x = sample_design(n, beta.len(), dist, design_seed)?;
        let y = apply_link(x.view(), beta.view(), link, label_seed)?;
        Ok(Self {
            data: Dataset { x, y },
            beta,
            dist,
            link,
            seed: design_seed,
        })
    }

    pub fn sparsity(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        support_of(self.beta.view())
    }
}

pub(crate) fn support_of(v: ArrayView1<f64>) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// `n × p` design with i.i.d. entries from `dist`.
pub fn sample_design(n: usize, p: usize, dist: DistributionSpec, seed: u64) -> Result<Array2<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("design dimensions must be positive"));
    }
    let len = n
        .checked_mul(p)
        .filter(|len| {
            len.checked_mul(std::mem::size_of::<f64>())
                .is_some_and(|b| b <= isize::MAX as usize)
        })
        .ok_or_else(|| Error::Resource(format!("design of size {n}x{p} is not addressable")))?;
    let mut rng = rng_from_seed(seed);
    let data: Vec<f64> = (0..len).map(|_| dist.draw(&mut rng)).collect();
    Ok(Array2::from_shape_vec((n, p), data).expect("shape matches length"))
}

/// Unit-norm `s`-sparse vector: uniform support, Gaussian values.
pub fn make_ground_truth(p: usize, s: usize, seed: u64) -> Result<Array1<f64>> {
    if s == 0 || s > p {
        return Err(Error::invalid(format!(
            "sparsity s = {s} must lie in 1..={p}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut support = sample(&mut rng, p, s).into_vec();
    support.sort_unstable();
    let mut beta = Array1::zeros(p);
    loop {
        for &i in &support {
            beta[i] = StandardNormal.sample(&mut rng);
        }
        let nb = norm2(beta.view());
        if nb > 0.0 {
            beta /= nb;
            return Ok(beta);
        }
    }
}

/// `y_i = φ(x_iᵀβ) + ε_i`, `ε_i ~ N(0, noise_std²)`.
pub fn apply_link(
    x: ArrayView2<f64>,
    beta: ArrayView1<f64>,
    link: LinkFunction,
    seed: u64,
) -> Result<Array1<f64>> {
    link.validate()?;
    if x.ncols() != beta.len() {
        return Err(Error::invalid(format!(
            "design has {} columns but beta has length {}",
            x.ncols(),
            beta.len()
        )));
    }
    if x.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("design or beta has non-finite entries"));
    }
    let mut y = x.dot(&beta).mapv(|z| link.eval(z));
    if link.noise_std > 0.0 {
        let mut rng = rng_from_seed(seed);
        let noise = Normal::new(0.0, link.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    Ok(y)
}

/// Population best linear model estimated by Monte Carlo.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationBlm {
    pub theta_star: Array1<f64>,
    pub mu_star: f64,
    pub mc_samples: usize,
    /// Largest per-coordinate standard error of `θ★`.
    pub stderr: f64,
    /// Per-coordinate standard errors of `θ★` (zero off the support).
    pub coord_stderr: Array1<f64>,
    pub mu_stderr: f64,
}

pub const MIN_POPULATION_SAMPLES: usize = 10_000;

/// `(θ★, μ★) = (E[yx], E[y])` for `y = φ(βᵀx) + ε` with i.i.d. isotropic `x`.
///
/// Coordinates off the support of `β` are independent of `y` and zero-mean,
/// so `E[y x_j] = 0` there exactly and only the support is simulated.
pub fn population_blm(
    beta: ArrayView1<f64>,
    dist: DistributionSpec,
    link: LinkFunction,
    mc_samples: usize,
    seed: u64,
) -> Result<PopulationBlm> {
    if mc_samples < MIN_POPULATION_SAMPLES {
        return Err(Error::invalid(format!(
            "population_blm needs at least {MIN_POPULATION_SAMPLES} samples, got {mc_samples}"
        )));
    }
    let sampler = SupportSampler::new(beta, dist, link)?;
    let support = &sampler.support;
    let k = support.len();

    let mut rng = rng_from_seed(seed);
    let mut xs = vec![0.0; k];
    let mut sum_yx = vec![0.0; k];
    let mut sum_yx2 = vec![0.0; k];
    let mut sum_y = 0.0;
    let mut sum_y2 = 0.0;
    for _ in 0..mc_samples {
        let y = sampler.draw(&mut rng, &mut xs);
        sum_y += y;
        sum_y2 += y * y;
        for j in 0..k {
            let v = y * xs[j];
            sum_yx[j] += v;
            sum_yx2[j] += v * v;
        }
    }

    let m = mc_samples as f64;
    let se = |sum: f64, sum2: f64| {
        let mean = sum / m;
        (((sum2 / m - mean * mean).max(0.0)) * m / (m - 1.0) / m).sqrt()
    };
    let mut theta_star = Array1::zeros(beta.len());
    let mut coord_stderr = Array1::zeros(beta.len());
    for (j, &i) in support.iter().enumerate() {
        theta_star[i] = sum_yx[j] / m;
        coord_stderr[i] = se(sum_yx[j], sum_yx2[j]);
    }
    let stderr = coord_stderr.iter().copied().fold(0.0, f64::max);
    Ok(PopulationBlm {
        theta_star,
        mu_star: sum_y / m,
        mc_samples,
        stderr,
        coord_stderr,
        mu_stderr: se(sum_y, sum_y2),
    })
}

/// Draws `(x_S, y)` where `S` is the support of `β`. The remaining
/// coordinates of `x` are independent of `y`, so any statistic that only
/// touches `x_S` can be simulated without them.
pub(crate) struct SupportSampler {
    pub support: Vec<usize>,
    coefs: Vec<f64>,
    dist: DistributionSpec,
    link: LinkFunction,
    noise: Option<Normal<f64>>,
}

impl SupportSampler {
    pub fn new(beta: ArrayView1<f64>, dist: DistributionSpec, link: LinkFunction) -> Result<Self> {
        link.validate()?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("beta has non-finite entries"));
        }
        let support = support_of(beta);
        let coefs = support.iter().map(|&i| beta[i]).collect();
        let noise = if link.noise_std > 0.0 {
            Some(Normal::new(0.0, link.noise_std).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            support,
            coefs,
            dist,
            link,
            noise,
        })
    }

    /// Fills `xs` (length `|S|`) and returns the label.
    #[inline]
    pub fn draw(&self, rng: &mut Rng, xs: &mut [f64]) -> f64 {
        let mut z = 0.0;
        for (xj, cj) in xs.iter_mut().zip(&self.coefs) {
            *xj = self.dist.draw(rng);
            z += *xj * cj;
        }
        let mut y = self.link.eval(z);
        if let Some(noise) = &self.noise {
            y += noise.sample(rng);
        }
        y
    }
}

/// Exact `(θ★, μ★)` where a closed form exists: the linear link under any
/// isotropic design, and sign/ReLU links under a Gaussian design.
pub fn population_blm_closed_form(
    beta: ArrayView1<f64>,
    dist: DistributionSpec,
    link: LinkFunction,
) -> Option<(Array1<f64>, f64)> {
    let nb = norm2(beta);
    match (link.kind, dist) {
        (LinkKind::Linear, _) => Some((beta.to_owned(), 0.0)),
        (LinkKind::Sign, DistributionSpec::Gaussian) if nb > 0.0 => Some((
            beta.to_owned() * ((2.0 / std::f64::consts::PI).sqrt() / nb),
            0.0,
        )),
        (LinkKind::Relu, DistributionSpec::Gaussian) => Some((
            beta.to_owned() * 0.5,
            nb / (2.0 * std::f64::consts::PI).sqrt(),
        )),
        _ => None,
    }
}

/// `n` residuals `w = y − xᵀθ★ − μ★` for fresh draws, assuming `θ★` is
/// supported inside the support of `β` (true for every population parameter
/// of a single-index model with isotropic i.i.d. design).
pub fn sample_residuals(
    beta: ArrayView1<f64>,
    dist: DistributionSpec,
    link: LinkFunction,
    theta_star: ArrayView1<f64>,
    mu_star: f64,
    n: usize,
    seed: u64,
) -> Result<Array1<f64>> {
    if theta_star.len() != beta.len() {
        return Err(Error::invalid("theta_star and beta differ in length"));
    }
    let sampler = SupportSampler::new(beta, dist, link)?;
    if theta_star
        .iter()
        .enumerate()
        .any(|(i, t)| *t != 0.0 && beta[i] == 0.0)
    {
        return Err(Error::invalid(
            "theta_star has entries outside the support of beta",
        ));
    }
    let t: Vec<f64> = sampler.support.iter().map(|&i| theta_star[i]).collect();
    let mut rng = rng_from_seed(seed);
    let mut xs = vec![0.0; t.len()];
    Ok((0..n)
        .map(|_| {
            let y = sampler.draw(&mut rng, &mut xs);
            let fit: f64 = xs.iter().zip(&t).map(|(a, b)| a * b).sum();
            y - fit - mu_star
        })
        .collect())
}

/// Residual at the population parameter, `w = y − Xθ★ − μ★1`.
pub fn residuals(data: &Dataset, blm: &PopulationBlm) -> Result<Array1<f64>> {
    if blm.theta_star.len() != data.p() {
        return Err(Error::invalid(format!(
            "theta_star has length {}, dataset has p = {}",
            blm.theta_star.len(),
            data.p()
        )));
    }
    Ok(&data.y - &data.x.dot(&blm.theta_star) - blm.mu_star)
}

/// Largest moment index used by [`orlicz_norm_estimate`].
pub const ORLICZ_MAX_MOMENT: u32 = 10;

/// Empirical Orlicz-`a` norm: `max_{m=1..10} m^{-1/a} (mean |w|^m)^{1/m}`.
pub fn orlicz_norm_estimate(w: ArrayView1<f64>, a: u8) -> Result<f64> {
    if a != 1 && a != 2 {
        return Err(Error::invalid(format!(
            "Orlicz index must be 1 or 2, got {a}"
        )));
    }
    if w.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = w.len() as f64;
    // Scale out the largest magnitude so high moments stay finite.
    let scale = w.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for m in 1..=ORLICZ_MAX_MOMENT {
        let mi = m as i32;
        let moment = w.iter().map(|v| (v.abs() / scale).powi(mi)).sum::<f64>() / n;
        let norm_m = scale * moment.powf(1.0 / m as f64);
        best = best.max(norm_m * (m as f64).powf(-1.0 / a as f64));
    }
    Ok(best)
}

/// Empirical Orlicz-`a` norm of the residual `y − xᵀθ★ − μ★` on `dataset`.
pub fn residual_sigma_estimate(data: &Dataset, blm: &PopulationBlm, orlicz_a: u8) -> Result<f64> {
    orlicz_norm_estimate(residuals(data, blm)?.view(), orlicz_a)
}

/// Decimal text with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `x_1..x_p,y` CSV.
pub fn write_csv<W: Write>(data: &Dataset, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x_{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(data.p() + 1);
    for (xi, yi) in data.x.outer_iter().zip(data.y.iter()) {
        row.clear();
        row.extend(xi.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(*yi));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Companion metadata of an exported synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub seed: u64,
    pub dist: DistributionSpec,
    pub link: LinkFunction,
    pub beta_support: Vec<usize>,
    pub beta_values: Vec<f64>,
}

impl SyntheticDataset {
    pub fn metadata(&self) -> DatasetMetadata {
        let support = self.support();
        DatasetMetadata {
            n: self.data.n(),
            p: self.data.p(),
            s: support.len(),
            seed: self.seed,
            dist: self.dist,
            link: self.link,
            beta_values: support.iter().map(|&i| self.beta[i]).collect(),
            beta_support: support,
        }
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json` under `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let meta_path = dir.join(format!("{stem}.meta.json"));
        let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        write_csv(&self.data, std::io::BufWriter::new(file))
            .map_err(|e| csv_io_error(&csv_path, e))?;
        let meta = serde_json::to_string_pretty(&self.metadata()).expect("metadata serializes");
        std::fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))?;
        Ok((csv_path, meta_path))
    }
}

pub(crate) fn csv_io_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}
