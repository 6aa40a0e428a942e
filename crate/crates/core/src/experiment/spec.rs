use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pgd::EtaPolicy;
use crate::synth::{DistributionSpec, LinkFunction, LinkKind};

/// Which PGD arms to run on each replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitBiasMode {
    /// Paired runs with and without the bias on identical data.
    #[default]
    Both,
    True,
    False,
}

impl FitBiasMode {
    pub fn arms(&self) -> Vec<Arm> {
        match self {
            FitBiasMode::Both => vec![Arm::WithBias, Arm::NoBias],
            FitBiasMode::True => vec![Arm::WithBias],
            FitBiasMode::False => vec![Arm::NoBias],
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            FitBiasMode::Both => "both",
            FitBiasMode::True => "true",
            FitBiasMode::False => "false",
        }
    }
}

impl std::str::FromStr for FitBiasMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Self::Both),
            "true" => Ok(Self::True),
            "false" => Ok(Self::False),
            other => Err(Error::Config(format!(
                "fit_bias must be both, true or false, got `{other}`"
            ))),
        }
    }
}

impl Serialize for FitBiasMode {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for FitBiasMode {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Bool(bool),
            Text(String),
        }
        match Repr::deserialize(de)? {
            Repr::Bool(true) => Ok(Self::True),
            Repr::Bool(false) => Ok(Self::False),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One PGD arm of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Design `[X 1]`.
    WithBias,
    /// Design `X` alone.
    NoBias,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::WithBias => "with_bias",
            Arm::NoBias => "no_bias",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Arm::WithBias => "[X 1]",
            Arm::NoBias => "X",
        }
    }

    pub fn fit_bias(&self) -> bool {
        matches!(self, Arm::WithBias)
    }
}

/// Constraint-set selection. `kind` is a set-registry name; fields the
/// family does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    #[serde(default = "default_kind")]
    pub kind: String,
    /// Sparsity level; defaults to the experiment's `s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    /// ℓ1 radius; defaults to `||θ★||₁` of each replication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
}

fn default_kind() -> String {
    "sparsity".into()
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            s: None,
            radius: None,
            rank: None,
            rows: None,
            cols: None,
        }
    }
}

fn deserialize_link<'de, D: Deserializer<'de>>(
    de: D,
) -> std::result::Result<LinkFunction, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(LinkKind),
        Full(LinkFunction),
    }
    let link = match Repr::deserialize(de)? {
        Repr::Name(kind) => LinkFunction::new(kind),
        Repr::Full(link) => link,
    };
    if !(link.noise_std >= 0.0 && link.noise_std.is_finite()) {
        return Err(serde::de::Error::custom(
            "noise_std must be a nonnegative number",
        ));
    }
    Ok(link)
}

/// A replicated experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_dist")]
    pub dist: DistributionSpec,
    #[serde(default = "default_link", deserialize_with = "deserialize_link")]
    pub link: LinkFunction,
    #[serde(default)]
    pub eta: EtaPolicy,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub tol: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub fit_bias: FitBiasMode,
    #[serde(default)]
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Monte Carlo draws for the population parameter of each replication.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    /// Supports probed by sampled ρ/RSV estimates.
    #[serde(default = "default_n_dirs")]
    pub n_dirs: usize,
    /// Monte Carlo draws for the clip-bias check.
    #[serde(default = "default_mc")]
    pub clip_mc_samples: usize,
    /// Replications inside the empirical-width check.
    #[serde(default = "default_width_reps")]
    pub width_reps: usize,
    /// Write one JSON-lines trace per replication and arm.
    #[serde(default = "default_true")]
    pub write_traces: bool,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_n() -> usize {
    500
}
fn default_p() -> usize {
    800
}
fn default_s() -> usize {
    20
}
fn default_dist() -> DistributionSpec {
    DistributionSpec::CenteredExponential
}
fn default_link() -> LinkFunction {
    LinkFunction::new(LinkKind::Relu)
}
fn default_max_iters() -> usize {
    300
}
fn default_replications() -> usize {
    10
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_mc() -> usize {
    200_000
}
fn default_n_dirs() -> usize {
    32
}
fn default_width_reps() -> usize {
    10
}
fn default_true() -> bool {
    true
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.p == 0 {
            return bad("n and p must be positive".into());
        }
        if self.s == 0 || self.s > self.p {
            return bad(format!("s = {} must lie in 1..={}", self.s, self.p));
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be nonnegative".into());
        }
        if self.mc_samples < crate::synth::MIN_POPULATION_SAMPLES {
            return bad(format!(
                "mc_samples must be at least {}",
                crate::synth::MIN_POPULATION_SAMPLES
            ));
        }
        if self.clip_mc_samples < 2 {
            return bad("clip_mc_samples must be at least 2".into());
        }
        if self.n_dirs == 0 {
            return bad("n_dirs must be positive".into());
        }
        let registry = crate::diagnostics::CheckRegistry::with_builtins();
        for c in &self.checks {
            if !registry.contains(c) {
                return bad(format!(
                    "unknown check `{c}` (known: {})",
                    registry.names().join(", ")
                ));
            }
        }
        let sets = crate::model_sets::SetRegistry::with_builtins();
        if !sets.names().contains(&self.constraint.kind.as_str()) {
            return bad(format!(
                "unknown constraint `{}` (known: {})",
                self.constraint.kind,
                sets.names().join(", ")
            ));
        }
        if let Some(r) = self.constraint.radius {
            if !(r > 0.0) {
                return bad("constraint radius must be positive".into());
            }
        }
        Ok(())
    }

    /// Seed of replication `r`.
    pub fn replication_seed(&self, r: usize) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }
}
