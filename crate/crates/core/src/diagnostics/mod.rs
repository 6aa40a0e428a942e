//! Per-iteration metrics, replication statistics, and empirical versions of
//! the theoretical quantities (ρ, ν, RSV, spectral norm, clipping) compared
//! against calibrated bounds.

mod checks;
mod theory;

pub use checks::{CheckContext, CheckRegistry, TheoryCheck};
pub use theory::{
    clip_bias_check, clip_check, clip_level, convergence_rho_estimate, effective_noise_nu,
    empirical_width_check, ext_gram_extremes, nu_report, rho_bound, rho_report, rsv_lower_check,
    rsv_lower_estimate, spectral_chernoff_check, ClipBiasEstimate, RSV_THRESHOLD, T_DEVIATION,
};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_sets::Relaxation;
use crate::pgd::ModelParams;
use crate::synth::{fmt_f64, residuals, Dataset, PopulationBlm};

/// `||y − Xθ − μ1||² / ||y||²`
pub fn train_error(params: &ModelParams, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64> {
    if x.nrows() != y.len() || x.ncols() != params.theta.len() {
        return Err(Error::invalid("dimension mismatch in error metric"));
    }
    let yy = y.dot(&y);
    if !(yy > 0.0) {
        return Err(Error::UndefinedMetric("labels are identically zero".into()));
    }
    let r = &y - &params.predict(x);
    Ok(r.dot(&r) / yy)
}

/// Normalized error on a held-out dataset.
pub fn test_error(params: &ModelParams, fresh: &Dataset) -> Result<f64> {
    train_error(params, fresh.x.view(), fresh.y.view())
}

/// Cosine similarity `θᵀβ / (||θ|| ||β||)`.
pub fn correlation(theta: ArrayView1<f64>, beta: ArrayView1<f64>) -> Result<f64> {
    if theta.len() != beta.len() {
        return Err(Error::invalid("dimension mismatch in correlation"));
    }
    let nt = theta.dot(&theta).sqrt();
    let nb = beta.dot(&beta).sqrt();
    if nt == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedMetric(
            "correlation with a zero vector".into(),
        ));
    }
    Ok((theta.dot(&beta) / (nt * nb)).clamp(-1.0, 1.0))
}

/// `w = y − Xθ★ − μ★1`
pub fn residual_vector(data: &Dataset, blm: &PopulationBlm) -> Result<Array1<f64>> {
    residuals(data, blm)
}

/// Values of one metric across replications with their mean and sample std.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricSeries {
    /// Sample std uses `n − 1`; a single value has std 0.
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        Self {
            name: name.into(),
            values,
            mean,
            std,
        }
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Rho,
    Nu,
    RsvLower,
    SpectralUpper,
    ClipFraction,
    ClipBias,
    EmpiricalWidth,
}

impl Quantity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::Rho => "rho",
            Quantity::Nu => "nu",
            Quantity::RsvLower => "rsv_lower",
            Quantity::SpectralUpper => "spectral_upper",
            Quantity::ClipFraction => "clip_fraction",
            Quantity::ClipBias => "clip_bias",
            Quantity::EmpiricalWidth => "empirical_width",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rho" => Quantity::Rho,
            "nu" => Quantity::Nu,
            "rsv_lower" => Quantity::RsvLower,
            "spectral_upper" => Quantity::SpectralUpper,
            "clip_fraction" => Quantity::ClipFraction,
            "clip_bias" => Quantity::ClipBias,
            "empirical_width" => Quantity::EmpiricalWidth,
            other => return Err(Error::Config(format!("unknown quantity `{other}`"))),
        })
    }
}

/// Which side of the true value a sampled estimate lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSide {
    /// Computed exactly over the relaxation.
    Exact,
    /// A sampled supremum: never above the true value.
    Lower,
    /// A sampled infimum: never below the true value.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportParams {
    pub n: usize,
    pub p: usize,
    pub s: Option<usize>,
    pub dist: Option<String>,
    pub seed: u64,
    pub relaxation: Option<Relaxation>,
}

/// A measured quantity next to its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub quantity: Quantity,
    pub measured: f64,
    pub bound: f64,
    pub bound_formula: String,
    pub satisfied: bool,
    pub side: EstimateSide,
    pub params: ReportParams,
}

impl TheoryReport {
    pub const CSV_HEADER: [&'static str; 9] = [
        "quantity",
        "n",
        "p",
        "s",
        "dist",
        "seed",
        "measured",
        "bound",
        "satisfied",
    ];

    pub fn csv_row(&self) -> [String; 9] {
        let p = &self.params;
        [
            self.quantity.as_str().to_string(),
            p.n.to_string(),
            p.p.to_string(),
            p.s.map(|s| s.to_string()).unwrap_or_default(),
            p.dist.clone().unwrap_or_default(),
            p.seed.to_string(),
            fmt_f64(self.measured),
            fmt_f64(self.bound),
            self.satisfied.to_string(),
        ]
    }
}

/// Writes reports as CSV (header always present).
pub fn write_reports_csv<W: Write>(reports: &[TheoryReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TheoryReport::CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}
