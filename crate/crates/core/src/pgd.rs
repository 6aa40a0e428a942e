//! Projected gradient descent on the bias-augmented least-squares loss
//! `½||y − Xθ − μ1||²` over `θ ∈ K`, `μ ∈ R`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diagnostics::{correlation, train_error};
use crate::error::{Error, Result};
use crate::linalg::{ext_mul, norm2};
use crate::model_sets::{ConstraintSpec, ModelSet};
use crate::synth::Dataset;

/// Divergence guard: abort once the iterate norm exceeds `GUARD·(1 + scale)`.
pub const DIVERGENCE_FACTOR: f64 = 1e8;

/// Coefficients and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub theta: Array1<f64>,
    pub mu: f64,
}

impl ModelParams {
    pub fn zeros(p: usize) -> Self {
        Self {
            theta: Array1::zeros(p),
            mu: 0.0,
        }
    }

    pub fn new(theta: Array1<f64>, mu: f64) -> Self {
        Self { theta, mu }
    }

    /// `||[θ; μ]||₂`
    pub fn norm(&self) -> f64 {
        (self.theta.dot(&self.theta) + self.mu * self.mu).sqrt()
    }

    /// `||[θ; μ] − [θ'; μ']||₂`
    pub fn distance(&self, other: &ModelParams) -> f64 {
        let d = &self.theta - &other.theta;
        (d.dot(&d) + (self.mu - other.mu).powi(2)).sqrt()
    }

    /// Predictions `Xθ + μ1`.
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        ext_mul(x, self.theta.view(), self.mu)
    }
}

/// Learning-rate rule, resolved against `(n, p)` at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EtaPolicy {
    Fixed(f64),
    /// `1/n`
    OneOverN,
    /// `1/(5n)`
    #[default]
    OneOverFiveN,
    /// `c₀ / ((n+p)·ln³(n+p))`
    Subexponential {
        c0: f64,
    },
}

impl EtaPolicy {
    fn validate(&self) -> Result<()> {
        let v = match self {
            EtaPolicy::Fixed(v) => *v,
            EtaPolicy::Subexponential { c0 } => *c0,
            _ => return Ok(()),
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "learning rate parameter must be positive, got {v}"
            )))
        }
    }
}

impl fmt::Display for EtaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaPolicy::Fixed(v) => write!(f, "{v}"),
            EtaPolicy::OneOverN => f.write_str("1/n"),
            EtaPolicy::OneOverFiveN => f.write_str("1/(5n)"),
            EtaPolicy::Subexponential { c0 } => write!(f, "subexp:{c0}"),
        }
    }
}

impl FromStr for EtaPolicy {
    type Err = Error;

    /// Accepts `1/n`, `1/5n`, `1/(5n)`, `subexp`, `subexp:<c0>` or a positive number.
    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let policy = match t.as_str() {
            "1/n" => EtaPolicy::OneOverN,
            "1/5n" | "1/(5n)" => EtaPolicy::OneOverFiveN,
            "subexp" | "subexponential" => EtaPolicy::Subexponential { c0: 1.0 },
            other => {
                if let Some(c) = other
                    .strip_prefix("subexp:")
                    .or_else(|| other.strip_prefix("subexponential:"))
                {
                    let c0 = c
                        .parse()
                        .map_err(|_| Error::Config(format!("bad c0 in learning rate `{s}`")))?;
                    EtaPolicy::Subexponential { c0 }
                } else {
                    let v = other
                        .parse()
                        .map_err(|_| Error::Config(format!("unknown learning rate `{s}`")))?;
                    EtaPolicy::Fixed(v)
                }
            }
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl Serialize for EtaPolicy {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EtaPolicy::Fixed(v) => ser.serialize_f64(*v),
            other => ser.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for EtaPolicy {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
            Sub { subexponential: f64 },
        }
        let policy = match Repr::deserialize(de)? {
            Repr::Num(v) => EtaPolicy::Fixed(v),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom)?,
            Repr::Sub { subexponential } => EtaPolicy::Subexponential { c0: subexponential },
        };
        policy.validate().map_err(serde::de::Error::custom)?;
        Ok(policy)
    }
}

/// Concrete step size for a policy. Logarithms are natural.
pub fn resolve_eta(policy: EtaPolicy, n: usize, p: usize) -> Result<f64> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("n and p must be positive"));
    }
    policy.validate()?;
    let n = n as f64;
    Ok(match policy {
        EtaPolicy::Fixed(v) => v,
        EtaPolicy::OneOverN => 1.0 / n,
        EtaPolicy::OneOverFiveN => 1.0 / (5.0 * n),
        EtaPolicy::Subexponential { c0 } => {
            let q = n + p as f64;
            c0 / (q * q.ln().powi(3))
        }
    })
}

#[derive(Debug, Clone)]
pub struct PgdConfig {
    pub constraint: ConstraintSpec,
    pub eta: EtaPolicy,
    pub max_iters: usize,
    /// Stop once `||[θ⁺;μ⁺] − [θ;μ]||₂ ≤ tol`.
    pub tol: f64,
    pub fit_bias: bool,
    /// Starting point; zeros when absent.
    pub init: Option<ModelParams>,
}

impl PgdConfig {
    pub fn new(constraint: ConstraintSpec, eta: EtaPolicy, max_iters: usize) -> Self {
        Self {
            constraint,
            eta,
            max_iters,
            tol: 0.0,
            fit_bias: true,
            init: None,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_fit_bias(mut self, fit_bias: bool) -> Self {
        self.fit_bias = fit_bias;
        self
    }

    pub fn with_init(mut self, init: ModelParams) -> Self {
        self.init = Some(init);
        self
    }

    fn initial(&self) -> Result<ModelParams> {
        match &self.init {
            None => Ok(ModelParams::zeros(self.constraint.p)),
            Some(init) => {
                if init.theta.len() != self.constraint.p {
                    return Err(Error::invalid(format!(
                        "init has length {}, constraint has p = {}",
                        init.theta.len(),
                        self.constraint.p
                    )));
                }
                if !init.mu.is_finite() || init.theta.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("init has non-finite entries"));
                }
                Ok(init.clone())
            }
        }
    }
}

/// Oracle quantities for tracing; any subset may be known.
#[derive(Debug, Clone, Copy, Default)]
pub struct Oracle<'a> {
    /// Population parameter `(θ★, μ★)`.
    pub target: Option<(ArrayView1<'a, f64>, f64)>,
    /// Ground-truth direction.
    pub beta: Option<ArrayView1<'a, f64>>,
}

/// One row of the trace. `None` fields are metrics that are unavailable or undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub est_err: Option<f64>,
    pub train_err: Option<f64>,
    pub test_err: Option<f64>,
    pub corr: Option<f64>,
    pub displacement: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateTrace {
    pub records: Vec<TraceRecord>,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Values of `est_err` in iteration order (`None` where unavailable).
    pub fn est_errors(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.est_err).collect()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Failed fit: the error plus the trace recorded before it.
#[derive(Debug)]
pub struct FitError {
    pub error: Error,
    pub trace: IterateTrace,
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (after {} trace records)",
            self.error,
            self.trace.len()
        )
    }
}

impl std::error::Error for FitError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<FitError> for Error {
    fn from(e: FitError) -> Self {
        e.error
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub params: ModelParams,
    pub trace: IterateTrace,
    pub eta: f64,
    /// True when the displacement tolerance stopped the run.
    pub converged: bool,
}

/// Solver state with the projection strategy and step size fixed.
struct Stepper<'a> {
    set: Arc<dyn ModelSet>,
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    eta: f64,
    fit_bias: bool,
    guard: f64,
}

impl Stepper<'_> {
    fn step(&self, cur: &ModelParams, iter: usize) -> Result<ModelParams> {
        let resid = &self.y - &cur.predict(self.x);
        let mut theta = cur.theta.clone();
        theta.scaled_add(self.eta, &self.x.t().dot(&resid));
        let mu = if self.fit_bias {
            cur.mu + self.eta * resid.sum()
        } else {
            cur.mu
        };
        let norm = (theta.dot(&theta) + mu * mu).sqrt();
        if !norm.is_finite() || norm > self.guard {
            return Err(Error::Diverged { iter, norm });
        }
        Ok(ModelParams {
            theta: self.set.project_unchecked(theta.view()),
            mu,
        })
    }
}

fn check_data(x: ArrayView2<f64>, y: ArrayView1<f64>, p: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "X has {} rows, y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.ncols() != p {
        return Err(Error::invalid(format!(
            "X has {} columns, constraint has p = {p}",
            x.ncols()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("data has non-finite entries"));
    }
    Ok(())
}

fn guard_for(y: ArrayView1<f64>, target: Option<(ArrayView1<f64>, f64)>) -> f64 {
    let scale = match target {
        Some((t, m)) => (t.dot(&t) + m * m).sqrt(),
        None => norm2(y) / (y.len() as f64).sqrt(),
    };
    DIVERGENCE_FACTOR * (1.0 + scale)
}

/// One PGD update.
pub fn pgd_step(
    current: &ModelParams,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    config: &PgdConfig,
) -> Result<ModelParams> {
    let p = config.constraint.p;
    check_data(x, y, p)?;
    if current.theta.len() != p
        || !current.mu.is_finite()
        || current.theta.iter().any(|v| !v.is_finite())
    {
        return Err(Error::invalid(
            "current iterate has wrong length or non-finite entries",
        ));
    }
    let stepper = Stepper {
        set: config.constraint.build()?,
        x,
        y,
        eta: resolve_eta(config.eta, x.nrows(), p)?,
        fit_bias: config.fit_bias,
        guard: f64::INFINITY,
    };
    stepper.step(current, 1)
}

fn record(
    iter: usize,
    params: &ModelParams,
    data: &Dataset,
    oracle: &Oracle,
    test: Option<&Dataset>,
    displacement: Option<f64>,
) -> TraceRecord {
    let est_err = oracle.target.map(|(t, m)| {
        let d = &params.theta - &t;
        (d.dot(&d) + (params.mu - m).powi(2)).sqrt()
    });
    TraceRecord {
        iter,
        est_err,
        train_err: train_error(params, data.x.view(), data.y.view()).ok(),
        test_err: test.and_then(|t| train_error(params, t.x.view(), t.y.view()).ok()),
        corr: oracle
            .beta
            .and_then(|b| correlation(params.theta.view(), b).ok()),
        displacement,
    }
}

/// Runs PGD from `config.init` until the displacement tolerance or the
/// iteration cap, tracing every iterate. `observe` sees each iterate
/// (including the initialization) in order.
pub fn pgd_fit_observed(
    data: &Dataset,
    config: &PgdConfig,
    oracle: Oracle,
    test: Option<&Dataset>,
    observe: &mut dyn FnMut(usize, &ModelParams),
) -> std::result::Result<FitOutput, FitError> {
    let empty = |error| FitError {
        error,
        trace: IterateTrace::default(),
    };
    let p = config.constraint.p;
    check_data(data.x.view(), data.y.view(), p).map_err(empty)?;
    if let Some(t) = test {
        check_data(t.x.view(), t.y.view(), p).map_err(empty)?;
    }
    if !(config.tol >= 0.0) {
        return Err(empty(Error::invalid("tol must be nonnegative")));
    }
    let set = config.constraint.build().map_err(empty)?;
    let eta = resolve_eta(config.eta, data.n(), p).map_err(empty)?;
    let mut params = config.initial().map_err(empty)?;
    let stepper = Stepper {
        set,
        x: data.x.view(),
        y: data.y.view(),
        eta,
        fit_bias: config.fit_bias,
        guard: guard_for(data.y.view(), oracle.target),
    };

    let mut trace = IterateTrace {
        records: Vec::with_capacity(config.max_iters.min(100_000) + 1),
    };
    trace
        .records
        .push(record(0, &params, data, &oracle, test, None));
    observe(0, &params);
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let next = match stepper.step(&params, iter) {
            Ok(next) => next,
            Err(error) => return Err(FitError { error, trace }),
        };
        let disp = next.distance(&params);
        params = next;
        trace
            .records
            .push(record(iter, &params, data, &oracle, test, Some(disp)));
        observe(iter, &params);
        if disp <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(FitOutput {
        params,
        trace,
        eta,
        converged,
    })
}

pub fn pgd_fit(
    data: &Dataset,
    config: &PgdConfig,
    oracle: Oracle,
    test: Option<&Dataset>,
) -> std::result::Result<FitOutput, FitError> {
    pgd_fit_observed(data, config, oracle, test, &mut |_, _| {})
}

/// `γβ` baseline: `γ = ȳᵀXβ / ||Xβ||²` with centered labels `ȳ`.
pub fn gamma_baseline(data: &Dataset, beta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
    if beta.len() != data.p() {
        return Err(Error::invalid(format!(
            "beta has length {}, dataset has p = {}",
            beta.len(),
            data.p()
        )));
    }
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let xb = data.x.dot(&beta);
    let denom = xb.dot(&xb);
    if !(denom > 0.0) {
        return Err(Error::DegenerateBaseline("Xβ is zero".into()));
    }
    let ybar = data.y.mean().unwrap_or(0.0);
    let num: f64 = data
        .y
        .iter()
        .zip(xb.iter())
        .map(|(y, z)| (y - ybar) * z)
        .sum();
    let gamma = num / denom;
    Ok((gamma, xb * gamma))
}
