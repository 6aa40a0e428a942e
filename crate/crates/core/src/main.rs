use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use blm_pgd::diagnostics::{mean_std, write_reports_csv, CheckRegistry};
use blm_pgd::experiment::{
    build_constraint, execute, ingest_csv, run_experiment, run_scaling_study, ExperimentSpec,
    ReplicationSeeds,
};
use blm_pgd::model_sets::{width_mc, Relaxation, TangentBallSpec};
use blm_pgd::pgd::{pgd_fit, EtaPolicy, FitError, IterateTrace, Oracle, PgdConfig};
use blm_pgd::rng::{derive_seed, stream};
use blm_pgd::synth::{
    make_ground_truth, population_blm, DistributionSpec, LinkFunction, LinkKind, SyntheticDataset,
};
use blm_pgd::{Error, Result};

/// Projected gradient descent for best-linear-model estimation, with seeded
/// experiment and diagnostic tooling.
#[derive(Parser)]
#[command(name = "blm-pgd", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Base seed; overrides `base_seed` of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Experiment spec (TOML). Flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct ProblemArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    /// gaussian | centered_exponential
    #[arg(long)]
    dist: Option<DistributionSpec>,
    /// linear | sign | relu
    #[arg(long)]
    link: Option<LinkKind>,
    /// Standard deviation of additive Gaussian label noise.
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Args, Default)]
struct ConstraintArgs {
    /// Constraint family: sparsity, l1, subspace, lowrank or unconstrained.
    #[arg(long)]
    constraint: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV plus a metadata file.
    Synth {
        #[command(flatten)]
        problem: ProblemArgs,
        /// File stem of the outputs.
        #[arg(long, default_value = "dataset")]
        stem: String,
    },
    /// Run one PGD solve and write its trace as JSON lines.
    Fit {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        constraint: ConstraintArgs,
        /// Fit an ingested CSV instead of synthetic data; oracle metrics are then null.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Step size: a number, 1/n, 1/5n, subexp or subexp:<c0>.
        #[arg(long)]
        eta: Option<EtaPolicy>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Keep the bias at zero.
        #[arg(long)]
        no_bias: bool,
    },
    /// Run a replicated experiment and write summaries, charts and a manifest.
    Experiment,
    /// Run one experiment per sample size and tabulate final errors.
    Scaling {
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        n_values: Vec<usize>,
    },
    /// Run the theory-check battery; exits with 3 if any check is unsatisfied.
    Check {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        constraint: ConstraintArgs,
        /// Checks to run (default: the config's list, else all).
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
    },
    /// Compare the tabulated Gaussian width with a Monte Carlo estimate.
    Width {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        constraint: ConstraintArgs,
        /// exact_subspace | doubled_sparsity | full_ball (default: tightest for the set).
        #[arg(long, value_parser = parse_relaxation)]
        relaxation: Option<Relaxation>,
        /// Monte Carlo draws.
        #[arg(long, default_value_t = 2000)]
        n_mc: usize,
    },
}

fn parse_relaxation(s: &str) -> std::result::Result<Relaxation, String> {
    [
        Relaxation::ExactSubspace,
        Relaxation::DoubledSparsity,
        Relaxation::FullBall,
    ]
    .into_iter()
    .find(|r| r.as_str() == s)
    .ok_or_else(|| format!("unknown relaxation `{s}`"))
}

fn load_spec(global: &GlobalArgs) -> Result<ExperimentSpec> {
    let mut spec = match &global.config {
        Some(path) => ExperimentSpec::from_file(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = global.seed {
        spec.base_seed = seed;
    }
    if let Some(dir) = &global.output_dir {
        spec.output_dir = dir.clone();
    }
    Ok(spec)
}

fn apply_problem(spec: &mut ExperimentSpec, a: &ProblemArgs) {
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(p) = a.p {
        spec.p = p;
    }
    if let Some(s) = a.s {
        spec.s = s;
    }
    if let Some(d) = a.dist {
        spec.dist = d;
    }
    if let Some(k) = a.link {
        spec.link = LinkFunction::with_noise(k, spec.link.noise_std);
    }
    if let Some(sd) = a.noise_std {
        spec.link.noise_std = sd;
    }
    if let Some(r) = a.replications {
        spec.replications = r;
    }
}

fn apply_constraint(spec: &mut ExperimentSpec, a: &ConstraintArgs) {
    let c = &mut spec.constraint;
    if let Some(kind) = &a.constraint {
        c.kind = kind.clone();
    }
    c.radius = a.radius.or(c.radius);
    c.rank = a.rank.or(c.rank);
    c.rows = a.rows.or(c.rows);
    c.cols = a.cols.or(c.cols);
}

fn write_trace(trace: &IterateTrace, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    trace
        .write_jsonl(std::io::BufWriter::new(file))
        .map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })
}

fn cmd_synth(spec: ExperimentSpec, stem: &str) -> Result<()> {
    spec.validate()?;
    let seeds = ReplicationSeeds::derive(0, spec.base_seed);
    let beta = make_ground_truth(spec.p, spec.s, seeds.ground_truth)?;
    let data = SyntheticDataset::generate(
        spec.n,
        beta,
        spec.dist,
        spec.link,
        seeds.train_design,
        seeds.train_labels,
    )?;
    let (csv, meta) = data.export(&spec.output_dir, stem)?;
    println!("{}", csv.display());
    println!("{}", meta.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct FitSummary<'a> {
    n: usize,
    p: usize,
    eta: f64,
    iterations: usize,
    converged: bool,
    mu: f64,
    theta: &'a [f64],
}

fn cmd_fit(
    mut spec: ExperimentSpec,
    data_path: Option<&Path>,
    eta: Option<EtaPolicy>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    fit_bias: bool,
) -> Result<()> {
    if let Some(e) = eta {
        spec.eta = e;
    }
    spec.max_iters = max_iters.unwrap_or(spec.max_iters);
    spec.tol = tol.unwrap_or(spec.tol);
    let seeds = ReplicationSeeds::derive(0, spec.base_seed);

    let (train, test, beta, blm) = match data_path {
        Some(path) => {
            let data = ingest_csv(path)?;
            spec.n = data.n();
            spec.p = data.p();
            spec.s = spec.s.min(spec.p);
            (data, None, None, None)
        }
        None => {
            spec.validate()?;
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
            (train.data, Some(test.data), Some(beta), Some(blm))
        }
    };
    spec.validate()?;

    let constraint = match (&beta, &blm) {
        (Some(beta), Some(blm)) => build_constraint(&spec, blm.theta_star.view(), beta.view())?,
        _ => {
            if spec.constraint.kind == "subspace" {
                return Err(Error::Config(
                    "a subspace constraint needs synthetic ground truth".into(),
                ));
            }
            if spec.constraint.kind == "l1" && spec.constraint.radius.is_none() {
                return Err(Error::Config(
                    "an l1 constraint on ingested data needs --radius".into(),
                ));
            }
            let zeros = Array1::zeros(spec.p);
            build_constraint(&spec, zeros.view(), zeros.view())?
        }
    };

    let oracle = Oracle {
        target: blm.as_ref().map(|b| (b.theta_star.view(), b.mu_star)),
        beta: beta.as_ref().map(|b| b.view()),
    };
    let cfg = PgdConfig::new(constraint, spec.eta, spec.max_iters)
        .with_tol(spec.tol)
        .with_fit_bias(fit_bias);
    let trace_path = spec.output_dir.join("trace.jsonl");
    let out = match pgd_fit(&train, &cfg, oracle, test.as_ref()) {
        Ok(out) => out,
        Err(FitError { error, trace }) => {
            write_trace(&trace, &trace_path)?;
            return Err(error);
        }
    };
    write_trace(&out.trace, &trace_path)?;

    let theta = out.params.theta.to_vec();
    let summary = FitSummary {
        n: spec.n,
        p: spec.p,
        eta: out.eta,
        iterations: out.trace.len() - 1,
        converged: out.converged,
        mu: out.params.mu,
        theta: &theta,
    };
    let fit_path = spec.output_dir.join("fit.json");
    let text = serde_json::to_string_pretty(&summary).expect("fit summary serializes");
    std::fs::write(&fit_path, text + "\n").map_err(|e| Error::Io {
        path: fit_path.clone(),
        source: e,
    })?;

    let last = out.trace.last().expect("trace holds the initial record");
    let show = |v: Option<f64>| v.map_or("null".to_string(), |v| format!("{v:.6e}"));
    println!(
        "iterations={} converged={} eta={:.6e} train_err={} test_err={} corr={} est_err={}",
        summary.iterations,
        out.converged,
        out.eta,
        show(last.train_err),
        show(last.test_err),
        show(last.corr),
        show(last.est_err)
    );
    println!("{}", trace_path.display());
    println!("{}", fit_path.display());
    Ok(())
}

fn print_finals(result: &blm_pgd::experiment::ExperimentResult) {
    for arm in result.spec.fit_bias.arms() {
        let cells: Vec<String> = blm_pgd::experiment::METRICS
            .iter()
            .map(|m| {
                let v = result.finals(arm, m);
                if v.is_empty() {
                    format!("{m}=n/a")
                } else {
                    let (mean, std) = mean_std(&v);
                    format!("{m}={mean:.4e}±{std:.1e}")
                }
            })
            .collect();
        println!("{:<9} {}", arm.as_str(), cells.join(" "));
    }
    if result.failures() > 0 {
        println!("failed arms: {}", result.failures());
    }
}

fn cmd_experiment(spec: ExperimentSpec, jobs: Option<usize>) -> Result<()> {
    let result = run_experiment(&spec, jobs)?;
    print_finals(&result);
    println!("{}", spec.output_dir.display());
    Ok(())
}

fn cmd_scaling(spec: ExperimentSpec, n_values: &[usize], jobs: Option<usize>) -> Result<()> {
    let result = run_scaling_study(&spec, n_values, jobs)?;
    println!("n,arm,median_est_err,median_test_err,median_corr,std_corr");
    for r in &result.rows {
        println!(
            "{},{},{:.6e},{:.6e},{:.6e},{:.6e}",
            r.n,
            r.arm.as_str(),
            r.median_est_err,
            r.median_test_err,
            r.median_corr,
            r.std_corr
        );
    }
    println!("{}", spec.output_dir.join("scaling.csv").display());
    Ok(())
}

fn cmd_check(mut spec: ExperimentSpec, checks: Vec<String>, jobs: Option<usize>) -> Result<bool> {
    if !checks.is_empty() {
        spec.checks = checks;
    } else if spec.checks.is_empty() {
        spec.checks = CheckRegistry::with_builtins()
            .names()
            .into_iter()
            .map(String::from)
            .collect();
    }
    spec.max_iters = 0;
    spec.fit_bias = blm_pgd::experiment::FitBiasMode::True;
    spec.validate()?;
    let result = execute(&spec, jobs)?;

    let dir = &spec.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let path = dir.join("theory.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    write_reports_csv(&result.reports, std::io::BufWriter::new(file)).map_err(|e| Error::Io {
        path: path.clone(),
        source: std::io::Error::other(e),
    })?;

    let mut stdout = std::io::stdout().lock();
    let mut all = true;
    for r in &result.reports {
        all &= r.satisfied;
        let _ = writeln!(
            stdout,
            "{} {:<16} seed={:<6} measured={:.6e} bound={:.6e}  [{}]",
            if r.satisfied { "ok  " } else { "FAIL" },
            r.quantity.as_str(),
            r.params.seed,
            r.measured,
            r.bound,
            r.bound_formula
        );
    }
    let failed = result.reports.iter().filter(|r| !r.satisfied).count();
    let _ = writeln!(
        stdout,
        "{} reports, {failed} unsatisfied; {}",
        result.reports.len(),
        path.display()
    );
    Ok(all)
}

fn cmd_width(
    spec: ExperimentSpec,
    relaxation: Option<Relaxation>,
    n_mc: usize,
    write: bool,
) -> Result<()> {
    if spec.s == 0 || spec.s > spec.p {
        return Err(Error::Config(format!(
            "s = {} must lie in 1..={}",
            spec.s, spec.p
        )));
    }
    let beta = make_ground_truth(
        spec.p,
        spec.s,
        derive_seed(spec.base_seed, stream::GROUND_TRUTH),
    )?;
    let constraint = build_constraint(&spec, beta.view(), beta.view())?;
    let anchor = constraint.build()?.project(beta.view())?;
    let tangent = match relaxation {
        Some(r) => TangentBallSpec::new(constraint, anchor, r)?,
        None => TangentBallSpec::with_default_relaxation(constraint, anchor)?,
    };
    let table_sq = tangent.width_squared_table()?;
    let mc = width_mc(&tangent, n_mc, derive_seed(spec.base_seed, stream::CHECKS))?;
    let header = "constraint,relaxation,p,s,table_width_sq,table_width,mc_width,mc_stderr,ratio";
    let row = format!(
        "{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6}",
        spec.constraint.kind,
        tangent.relaxation().as_str(),
        spec.p,
        spec.s,
        table_sq,
        table_sq.sqrt(),
        mc.estimate,
        mc.stderr,
        mc.estimate / table_sq.sqrt()
    );
    println!("{header}\n{row}");
    if write {
        let dir = &spec.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let path = dir.join("width.csv");
        std::fs::write(&path, format!("{header}\n{row}\n"))
            .map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut spec = load_spec(&cli.global)?;
    let jobs = cli.global.jobs;
    if jobs == Some(0) {
        return Err(Error::Config("--jobs must be positive".into()));
    }
    match cli.command {
        Command::Synth { problem, stem } => {
            apply_problem(&mut spec, &problem);
            cmd_synth(spec, &stem)?;
        }
        Command::Fit {
            problem,
            constraint,
            data,
            eta,
            max_iters,
            tol,
            no_bias,
        } => {
            apply_problem(&mut spec, &problem);
            apply_constraint(&mut spec, &constraint);
            cmd_fit(spec, data.as_deref(), eta, max_iters, tol, !no_bias)?;
        }
        Command::Experiment => cmd_experiment(spec, jobs)?,
        Command::Scaling { n_values } => cmd_scaling(spec, &n_values, jobs)?,
        Command::Check {
            problem,
            constraint,
            checks,
        } => {
            apply_problem(&mut spec, &problem);
            apply_constraint(&mut spec, &constraint);
            if !cmd_check(spec, checks, jobs)? {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Width {
            problem,
            constraint,
            relaxation,
            n_mc,
        } => {
            apply_problem(&mut spec, &problem);
            apply_constraint(&mut spec, &constraint);
            cmd_width(spec, relaxation, n_mc, cli.global.output_dir.is_some())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as invalid configuration.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
