use std::collections::BTreeMap;

use ndarray::ArrayView1;

use super::theory::{
    clip_bias_check, clip_check, clip_level, empirical_width_check, nu_report, rho_report,
    rsv_lower_check, spectral_chernoff_check,
};
use super::TheoryReport;
use crate::error::{Error, Result};
use crate::model_sets::TangentBallSpec;
use crate::rng::derive_seed;
use crate::synth::{
    residual_sigma_estimate, residuals, Dataset, DistributionSpec, LinkFunction, PopulationBlm,
};

/// Inputs shared by every theory check of one replication.
#[derive(Debug, Clone, Copy)]
pub struct CheckContext<'a> {
    pub data: &'a Dataset,
    pub blm: &'a PopulationBlm,
    pub tangent: &'a TangentBallSpec,
    pub beta: ArrayView1<'a, f64>,
    pub dist: DistributionSpec,
    pub link: LinkFunction,
    /// Resolved step size.
    pub eta: f64,
    pub seed: u64,
    /// Supports probed by the sampled ρ and RSV estimators.
    pub n_dirs: usize,
    /// Monte Carlo draws for `clip_bias`.
    pub mc_samples: usize,
    /// Replications for `empirical_width`.
    pub width_reps: usize,
}

impl CheckContext<'_> {
    fn sigma(&self) -> Result<f64> {
        residual_sigma_estimate(self.data, self.blm, self.dist.orlicz_index())
    }
}

/// A named theory check producing one or more reports.
pub trait TheoryCheck: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &CheckContext) -> Result<Vec<TheoryReport>>;
}

struct Rho;
struct Nu;
struct Rsv;
struct Spectral;
struct Clip;
struct ClipBias;
struct EmpiricalWidth;

impl TheoryCheck for Rho {
    fn name(&self) -> &'static str {
        "rho"
    }
    fn run(&self, ctx: &CheckContext) -> Result<Vec<TheoryReport>> {
        Ok(vec![rho_report(
            ctx.data.x.view(),
            ctx.tangent,
            ctx.eta,
            ctx.n_dirs,
            derive_seed(ctx.seed, 11),
        )?])
    }
}

impl TheoryCheck for Nu {
    fn name(&self) -> &'static str {
        "nu"
    }
    fn run(&self, ctx: &CheckContext) -> Result<Vec<TheoryReport>> {
        Ok(vec![nu_report(
            ctx.data,
            ctx.blm,
            ctx.tangent,
            ctx.sigma()?,
            ctx.dist,
            ctx.seed,
        )?])
    }
}

impl TheoryCheck for Rsv {
    fn name(&self) -> &'static str {
        "rsv"
    }
    fn run(&self, ctx: &CheckContext) -> Result<Vec<TheoryReport>> {
        Ok(vec![rsv_lower_check(
            ctx.data.x.view(),
            ctx.tangent,
            ctx.n_dirs,
            derive_seed(ctx.seed, 12),
        )?])
    }
}

impl TheoryCheck for Spectral {
    fn name(&self) -> &'static str {
        "spectral"
    }
    fn run(&self, ctx: &CheckContext) -> Result<Vec<TheoryReport>> {
        Ok(vec![spectral_chernoff_check(ctx.data.x.view())?])
    }
}

impl TheoryCheck for Clip {
    fn name(&self) -> &'static str {
        "clip"
    }
    fn run(&self, ctx: &CheckContext) -> Result<Vec<TheoryReport>> {
        let w = residuals(ctx.data, ctx.blm)?;
        Ok(vec![clip_check(
            w.view(),
            ctx.sigma()?,
            ctx.dist.orlicz_index(),
        )?])
    }
}

impl TheoryCheck for ClipBias {
    fn name(&self) -> &'static str {
        "clip_bias"
    }
    fn run(&self, ctx: &CheckContext) -> Result<Vec<TheoryReport>> {
        let b = clip_level(ctx.data.n(), ctx.dist.orlicz_index())?;
        Ok(vec![clip_bias_check(
            ctx.dist,
            ctx.link,
            ctx.beta,
            b,
            ctx.mc_samples,
            derive_seed(ctx.seed, 13),
        )?])
    }
}

impl TheoryCheck for EmpiricalWidth {
    fn name(&self) -> &'static str {
        "empirical_width"
    }
    fn run(&self, ctx: &CheckContext) -> Result<Vec<TheoryReport>> {
        empirical_width_check(
            ctx.dist,
            ctx.tangent,
            ctx.data.n(),
            ctx.width_reps,
            derive_seed(ctx.seed, 14),
        )
    }
}

/// Name → check table.
pub struct CheckRegistry {
    checks: BTreeMap<&'static str, Box<dyn TheoryCheck>>,
}

impl CheckRegistry {
    pub fn empty() -> Self {
        Self {
            checks: BTreeMap::new(),
        }
    }

    /// `rho`, `nu`, `rsv`, `spectral`, `clip`, `clip_bias`, `empirical_width`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(Rho));
        reg.register(Box::new(Nu));
        reg.register(Box::new(Rsv));
        reg.register(Box::new(Spectral));
        reg.register(Box::new(Clip));
        reg.register(Box::new(ClipBias));
        reg.register(Box::new(EmpiricalWidth));
        reg
    }

    pub fn register(&mut self, check: Box<dyn TheoryCheck>) {
        self.checks.insert(check.name(), check);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.checks.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.checks.contains_key(name)
    }

    /// Runs `name` and stamps the replication's `s`, distribution and seed
    /// onto the reports that lack them.
    pub fn run(&self, name: &str, ctx: &CheckContext) -> Result<Vec<TheoryReport>> {
        let check = self.checks.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown check `{name}` (known: {})",
                self.names().join(", ")
            ))
        })?;
        let s = ctx.beta.iter().filter(|b| **b != 0.0).count();
        let mut reports = check.run(ctx)?;
        for r in &mut reports {
            r.params.s.get_or_insert(s);
            r.params
                .dist
                .get_or_insert_with(|| ctx.dist.as_str().to_string());
            if r.params.p == 0 {
                r.params.p = ctx.data.p();
            }
            if r.params.seed == 0 {
                r.params.seed = ctx.seed;
            }
        }
        Ok(reports)
    }
}

impl Default for CheckRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
