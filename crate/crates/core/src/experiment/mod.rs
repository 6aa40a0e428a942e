//! Replicated experiments: synthetic data, paired PGD arms, the `γβ`
//! baseline, theory checks, aggregation and output files.

mod ingest;
mod output;
mod spec;
mod svg;

pub use ingest::{ingest_csv, read_csv};
pub use output::{emit_outputs, emit_scaling, write_summary_csv, SUMMARY_HEADER};
pub use spec::{Arm, ConstraintConfig, ExperimentSpec, FitBiasMode};
pub use svg::{render_chart, Band, Chart};

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{
    correlation, mean_std, median, train_error, CheckContext, CheckRegistry, TheoryReport,
};
use crate::error::{Error, Result};
use crate::model_sets::{ConstraintSpec, SetParams, SetRegistry, TangentBallSpec};
use crate::pgd::{
    gamma_baseline, pgd_fit, resolve_eta, IterateTrace, ModelParams, Oracle, PgdConfig, TraceRecord,
};
use crate::rng::{derive_seed, stream};
use crate::synth::{make_ground_truth, population_blm, PopulationBlm, SyntheticDataset};

/// Metrics traced per iteration, in output order.
pub const METRICS: [&str; 4] = ["train_err", "test_err", "corr", "est_err"];

fn metric_of(r: &TraceRecord, metric: &str) -> Option<f64> {
    match metric {
        "train_err" => r.train_err,
        "test_err" => r.test_err,
        "corr" => r.corr,
        "est_err" => r.est_err,
        _ => None,
    }
}

/// Every seed used by one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplicationSeeds {
    pub replication: usize,
    pub seed: u64,
    pub ground_truth: u64,
    pub train_design: u64,
    pub train_labels: u64,
    pub test_design: u64,
    pub test_labels: u64,
    pub population: u64,
    pub checks: u64,
}

impl ReplicationSeeds {
    pub fn derive(replication: usize, seed: u64) -> Self {
        Self {
            replication,
            seed,
            ground_truth: derive_seed(seed, stream::GROUND_TRUTH),
            train_design: derive_seed(seed, stream::TRAIN_DESIGN),
            train_labels: derive_seed(seed, stream::TRAIN_LABELS),
            test_design: derive_seed(seed, stream::TEST_DESIGN),
            test_labels: derive_seed(seed, stream::TEST_LABELS),
            population: derive_seed(seed, stream::POPULATION),
            checks: derive_seed(seed, stream::CHECKS),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArmRun {
    pub arm: Arm,
    pub trace: IterateTrace,
    /// Final iterate; `None` when the solver failed.
    pub params: Option<ModelParams>,
    pub converged: bool,
    pub error: Option<String>,
}

impl ArmRun {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn final_record(&self) -> Option<&TraceRecord> {
        if self.ok() {
            self.trace.last()
        } else {
            None
        }
    }
}

/// Metrics of the `γβ` model on one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineMetrics {
    pub gamma: f64,
    pub train_err: Option<f64>,
    pub test_err: Option<f64>,
    pub corr: Option<f64>,
    pub est_err: Option<f64>,
}

impl BaselineMetrics {
    pub fn metric(&self, m: &str) -> Option<f64> {
        match m {
            "train_err" => self.train_err,
            "test_err" => self.test_err,
            "corr" => self.corr,
            "est_err" => self.est_err,
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub seeds: ReplicationSeeds,
    pub beta: Array1<f64>,
    pub blm: PopulationBlm,
    pub arms: Vec<ArmRun>,
    pub baseline: Option<BaselineMetrics>,
    pub reports: Vec<TheoryReport>,
}

impl ReplicationResult {
    pub fn arm(&self, arm: Arm) -> Option<&ArmRun> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

/// Mean and std of one metric at one iteration over the replications that report it.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iter: usize,
    pub arm: Arm,
    pub metric: &'static str,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSummary {
    pub metric: &'static str,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub generate: Duration,
    pub fit: Duration,
    pub checks: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub replications: Vec<ReplicationResult>,
    pub summary: Vec<SummaryRow>,
    pub baseline: Vec<BaselineSummary>,
    pub reports: Vec<TheoryReport>,
    /// Wall-clock time summed over replications; never written to files.
    pub timings: PhaseTimings,
}

impl ExperimentResult {
    /// Final value of `metric` for `arm`, one entry per successful replication.
    pub fn finals(&self, arm: Arm, metric: &str) -> Vec<f64> {
        self.replications
            .iter()
            .filter_map(|r| {
                r.arm(arm)?
                    .final_record()
                    .and_then(|rec| metric_of(rec, metric))
            })
            .collect()
    }

    /// Final value of `metric` for `arm`, per replication (`None` for failures).
    pub fn finals_by_replication(&self, arm: Arm, metric: &str) -> Vec<Option<f64>> {
        self.replications
            .iter()
            .map(|r| {
                r.arm(arm)?
                    .final_record()
                    .and_then(|rec| metric_of(rec, metric))
            })
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.replications
            .iter()
            .flat_map(|r| &r.arms)
            .filter(|a| !a.ok())
            .count()
    }
}

/// Constraint for one replication. Defaults: sparsity level `s`, ℓ1 radius
/// `||θ★||₁`, subspace spanned by the coordinates of `supp(β)`.
pub fn build_constraint(
    spec: &ExperimentSpec,
    theta_star: ArrayView1<f64>,
    beta: ArrayView1<f64>,
) -> Result<ConstraintSpec> {
    let c = &spec.constraint;
    let basis = (c.kind == "subspace").then(|| {
        let support: Vec<usize> = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(i, _)| i)
            .collect();
        let mut b = Array2::zeros((spec.p, support.len()));
        for (j, &i) in support.iter().enumerate() {
            b[[i, j]] = 1.0;
        }
        b
    });
    let params = SetParams {
        p: spec.p,
        s: Some(c.s.unwrap_or(spec.s)),
        radius: Some(
            c.radius
                .unwrap_or_else(|| theta_star.iter().map(|v| v.abs()).sum()),
        ),
        rank: c.rank,
        rows: c.rows,
        cols: c.cols,
        basis,
    };
    Ok(SetRegistry::with_builtins().build(&c.kind, &params)?.spec())
}

#[derive(Default)]
struct RepTimings {
    generate: Duration,
    fit: Duration,
    checks: Duration,
}

fn run_replication(
    spec: &ExperimentSpec,
    r: usize,
    checks: &CheckRegistry,
) -> Result<(ReplicationResult, RepTimings)> {
    let mut timings = RepTimings::default();
    let t0 = Instant::now();
    let seeds = ReplicationSeeds::derive(r, spec.replication_seed(r));
    let beta = make_ground_truth(spec.p, spec.s, seeds.ground_truth)?;
    let train = SyntheticDataset::generate(
        spec.n,
        beta.clone(),
        spec.dist,
        spec.link,
        seeds.train_design,
        seeds.train_labels,
    )?;
    let test = SyntheticDataset::generate(
        spec.n,
        beta.clone(),
        spec.dist,
        spec.link,
        seeds.test_design,
        seeds.test_labels,
    )?;
    let blm = population_blm(
        beta.view(),
        spec.dist,
        spec.link,
        spec.mc_samples,
        seeds.population,
    )?;
    let constraint = build_constraint(spec, blm.theta_star.view(), beta.view())?;
    timings.generate = t0.elapsed();

    let t1 = Instant::now();
    let oracle = Oracle {
        target: Some((blm.theta_star.view(), blm.mu_star)),
        beta: Some(beta.view()),
    };
    let arms = spec
        .fit_bias
        .arms()
        .into_iter()
        .map(|arm| {
            let cfg = PgdConfig::new(constraint.clone(), spec.eta, spec.max_iters)
                .with_tol(spec.tol)
                .with_fit_bias(arm.fit_bias());
            run_arm(arm, pgd_fit(&train.data, &cfg, oracle, Some(&test.data)))
        })
        .collect::<Result<Vec<_>>>()?;

    let baseline = gamma_baseline(&train.data, beta.view())
        .ok()
        .map(|(gamma, _)| {
            let model = ModelParams::new(&beta * gamma, 0.0);
            BaselineMetrics {
                gamma,
                train_err: train_error(&model, train.data.x.view(), train.data.y.view()).ok(),
                test_err: train_error(&model, test.data.x.view(), test.data.y.view()).ok(),
                corr: correlation(model.theta.view(), beta.view()).ok(),
                est_err: Some(
                    model.distance(&ModelParams::new(blm.theta_star.clone(), blm.mu_star)),
                ),
            }
        });
    timings.fit = t1.elapsed();

    let t2 = Instant::now();
    let mut reports = Vec::new();
    if !spec.checks.is_empty() {
        let set = constraint.build()?;
        let anchor = set.project(blm.theta_star.view())?;
        let tangent = TangentBallSpec::with_default_relaxation(constraint.clone(), anchor)?;
        let ctx = CheckContext {
            data: &train.data,
            blm: &blm,
            tangent: &tangent,
            beta: beta.view(),
            dist: spec.dist,
            link: spec.link,
            eta: resolve_eta(spec.eta, spec.n, spec.p)?,
            seed: seeds.checks,
            n_dirs: spec.n_dirs,
            mc_samples: spec.clip_mc_samples,
            width_reps: spec.width_reps,
        };
        for name in &spec.checks {
            reports.extend(checks.run(name, &ctx)?);
        }
        // Inner check seeds are derived from this one.
        for r in &mut reports {
            r.params.seed = seeds.seed;
        }
    }
    timings.checks = t2.elapsed();

    Ok((
        ReplicationResult {
            seeds,
            beta,
            blm,
            arms,
            baseline,
            reports,
        },
        timings,
    ))
}

/// Solver blow-ups are kept as failed runs; anything else aborts the experiment.
fn run_arm(
    arm: Arm,
    fit: std::result::Result<crate::pgd::FitOutput, crate::pgd::FitError>,
) -> Result<ArmRun> {
    match fit {
        Ok(out) => Ok(ArmRun {
            arm,
            trace: out.trace,
            params: Some(out.params),
            converged: out.converged,
            error: None,
        }),
        Err(e) => match e.error {
            Error::Diverged { .. } | Error::Numeric(_) => Ok(ArmRun {
                arm,
                trace: e.trace,
                params: None,
                converged: false,
                error: Some(e.error.to_string()),
            }),
            other => Err(other),
        },
    }
}

fn aggregate(
    spec: &ExperimentSpec,
    reps: &[ReplicationResult],
) -> (Vec<SummaryRow>, Vec<BaselineSummary>) {
    let mut rows = Vec::new();
    for metric in METRICS {
        for arm in spec.fit_bias.arms() {
            let traces: Vec<&IterateTrace> = reps
                .iter()
                .filter_map(|r| r.arm(arm))
                .filter(|a| a.ok())
                .map(|a| &a.trace)
                .collect();
            let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
            for iter in 0..len {
                // Runs that stopped early hold their final iterate.
                let values: Vec<f64> = traces
                    .iter()
                    .filter_map(|t| t.records.get(iter).or(t.records.last()))
                    .filter_map(|rec| metric_of(rec, metric))
                    .collect();
                let (mean, std) = if values.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_std(&values);
                    (Some(m), Some(s))
                };
                rows.push(SummaryRow {
                    iter,
                    arm,
                    metric,
                    mean,
                    std,
                    count: values.len(),
                });
            }
        }
    }
    let baseline = METRICS
        .iter()
        .map(|&metric| {
            let values: Vec<f64> = reps
                .iter()
                .filter_map(|r| r.baseline?.metric(metric))
                .collect();
            let (mean, std) = if values.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&values);
                (Some(m), Some(s))
            };
            BaselineSummary { metric, mean, std }
        })
        .collect();
    (rows, baseline)
}

/// Runs every replication (in parallel on up to `jobs` threads) and
/// aggregates. Performs no file I/O. Results do not depend on `jobs`.
pub fn execute(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<ExperimentResult> {
    spec.validate()?;
    let start = Instant::now();
    let checks = CheckRegistry::with_builtins();
    let work = || -> Result<Vec<(ReplicationResult, RepTimings)>> {
        (0..spec.replications)
            .into_par_iter()
            .map(|r| run_replication(spec, r, &checks))
            .collect()
    };
    let outcomes = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Resource(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut timings = PhaseTimings::default();
    let mut replications = Vec::with_capacity(outcomes.len());
    for (rep, t) in outcomes {
        timings.generate += t.generate;
        timings.fit += t.fit;
        timings.checks += t.checks;
        replications.push(rep);
    }
    let (summary, baseline) = aggregate(spec, &replications);
    let reports = replications
        .iter()
        .flat_map(|r| r.reports.iter().cloned())
        .collect();
    timings.total = start.elapsed();
    Ok(ExperimentResult {
        spec: spec.clone(),
        replications,
        summary,
        baseline,
        reports,
        timings,
    })
}

/// [`execute`] followed by [`emit_outputs`] into `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<ExperimentResult> {
    let result = execute(spec, jobs)?;
    emit_outputs(&result, &spec.output_dir)?;
    Ok(result)
}

/// One line of the error-versus-n table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub arm: Arm,
    pub median_est_err: f64,
    pub median_test_err: f64,
    pub median_corr: f64,
    pub std_corr: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    pub experiments: Vec<ExperimentResult>,
}

impl ScalingResult {
    pub fn row(&self, n: usize, arm: Arm) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.n == n && r.arm == arm)
    }
}

fn scaling_rows(result: &ExperimentResult) -> Vec<ScalingRow> {
    result
        .spec
        .fit_bias
        .arms()
        .into_iter()
        .map(|arm| {
            let corr = result.finals(arm, "corr");
            ScalingRow {
                n: result.spec.n,
                arm,
                median_est_err: median(&result.finals(arm, "est_err")),
                median_test_err: median(&result.finals(arm, "test_err")),
                median_corr: median(&corr),
                std_corr: mean_std(&corr).1,
            }
        })
        .collect()
}

/// One experiment per sample size, all sharing `base_seed`; no file I/O.
pub fn execute_scaling(
    spec: &ExperimentSpec,
    n_values: &[usize],
    jobs: Option<usize>,
) -> Result<ScalingResult> {
    if n_values.is_empty() {
        return Err(Error::Config("scaling study needs at least one n".into()));
    }
    let mut rows = Vec::new();
    let mut experiments = Vec::new();
    for &n in n_values {
        let mut s = spec.clone();
        s.n = n;
        s.output_dir = spec.output_dir.join(format!("n_{n}"));
        let result = execute(&s, jobs)?;
        rows.extend(scaling_rows(&result));
        experiments.push(result);
    }
    Ok(ScalingResult { rows, experiments })
}

/// [`execute_scaling`] plus per-n outputs and `scaling.csv` under `spec.output_dir`.
pub fn run_scaling_study(
    spec: &ExperimentSpec,
    n_values: &[usize],
    jobs: Option<usize>,
) -> Result<ScalingResult> {
    let result = execute_scaling(spec, n_values, jobs)?;
    for e in &result.experiments {
        emit_outputs(e, &e.spec.output_dir)?;
    }
    emit_scaling(&result, &spec.output_dir)?;
    Ok(result)
}
