//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView1};
use rand::Rng as _;
use rand_distr::StandardNormal;

use blm_pgd::diagnostics::{
    clip_bias_check, clip_check, clip_level, median, rsv_lower_check, spectral_chernoff_check,
};
use blm_pgd::experiment::{
    emit_outputs, execute, execute_scaling, ingest_csv, Arm, ExperimentSpec, FitBiasMode,
};
use blm_pgd::model_sets::{project, width_mc, ConstraintSpec, Relaxation, TangentBallSpec};
use blm_pgd::pgd::{pgd_fit, EtaPolicy, Oracle, PgdConfig};
use blm_pgd::rng::{derive_seed, rng_from_seed, stream};
use blm_pgd::synth::{
    make_ground_truth, orlicz_norm_estimate, population_blm, sample_design, sample_residuals,
    DistributionSpec, LinkFunction, LinkKind, SyntheticDataset,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn count(flags: impl IntoIterator<Item = bool>) -> (usize, usize) {
    flags
        .into_iter()
        .fold((0, 0), |(k, n), f| (k + f as usize, n + 1))
}

// 1 and 2 share their runs.
struct RecoveryRuns {
    final_rel: Vec<f64>,
    ratios: Vec<f64>,
}

fn recovery_runs() -> RecoveryRuns {
    let (n, p, s) = (100, 200, 5);
    let mut final_rel = Vec::new();
    let mut ratios = Vec::new();
    for seed in 0..20u64 {
        let beta = make_ground_truth(p, s, derive_seed(seed, stream::GROUND_TRUTH)).unwrap();
        let ds = SyntheticDataset::generate(
            n,
            beta.clone(),
            DistributionSpec::Gaussian,
            LinkFunction::new(LinkKind::Linear),
            derive_seed(seed, stream::TRAIN_DESIGN),
            derive_seed(seed, stream::TRAIN_LABELS),
        )
        .unwrap();
        let cfg = PgdConfig::new(ConstraintSpec::sparsity(p, s), EtaPolicy::OneOverN, 500);
        let oracle = Oracle {
            target: Some((beta.view(), 0.0)),
            beta: Some(beta.view()),
        };
        // A diverged solve counts as a failed recovery; its trace still feeds criterion 2.
        let (trace, diverged) = match pgd_fit(&ds.data, &cfg, oracle, None) {
            Ok(out) => (out.trace, false),
            Err(e) => (e.trace, true),
        };
        let nb = beta.dot(&beta).sqrt();
        let errs: Vec<f64> = trace
            .est_errors()
            .into_iter()
            .map(|e| e.unwrap() / nb)
            .collect();
        final_rel.push(if diverged {
            f64::INFINITY
        } else {
            *errs.last().unwrap()
        });
        for t in 1..=50.min(errs.len().saturating_sub(2)) {
            // Past machine precision the ratio is rounding noise.
            if errs[t] > 1e-13 {
                ratios.push(errs[t + 1] / errs[t]);
            }
        }
    }
    RecoveryRuns { final_rel, ratios }
}

fn crit1(runs: &RecoveryRuns) -> Outcome {
    let (k, n) = count(runs.final_rel.iter().map(|e| *e <= 1e-6));
    let worst = runs.final_rel.iter().copied().fold(0.0, f64::max);
    outcome(
        k * 100 >= 95 * n,
        format!("{k}/{n} seeds with relative error <= 1e-6 (worst {worst:.2e})"),
    )
}

fn crit2(runs: &RecoveryRuns) -> Outcome {
    let m = median(&runs.ratios);
    outcome(
        m <= 0.95,
        format!(
            "median successive-error ratio {m:.4} over {} steps",
            runs.ratios.len()
        ),
    )
}

fn base_spec() -> ExperimentSpec {
    ExperimentSpec {
        write_traces: false,
        ..ExperimentSpec::default()
    }
}

fn crit3() -> Outcome {
    let mut spec = base_spec();
    spec.link = LinkFunction::new(LinkKind::Sign);
    spec.dist = DistributionSpec::CenteredExponential;
    spec.fit_bias = FitBiasMode::True;
    spec.replications = 20;
    let res = execute_scaling(&spec, &[250, 1000], None).unwrap();
    let e250 = res.row(250, Arm::WithBias).unwrap().median_est_err;
    let e1000 = res.row(1000, Arm::WithBias).unwrap().median_est_err;
    let ratio = e250 / e1000;
    outcome(
        (1.4..=2.9).contains(&ratio),
        format!("median est_err {e250:.4} (n=250) / {e1000:.4} (n=1000) = {ratio:.3}"),
    )
}

fn paired(with: &[Option<f64>], without: &[Option<f64>]) -> Vec<(f64, f64)> {
    with.iter()
        .zip(without)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect()
}

fn crit4() -> Outcome {
    let mut relu = base_spec();
    relu.link = LinkFunction::new(LinkKind::Relu);
    relu.replications = 20;
    let r = execute(&relu, None).unwrap();
    let test = paired(
        &r.finals_by_replication(Arm::WithBias, "test_err"),
        &r.finals_by_replication(Arm::NoBias, "test_err"),
    );
    let corr = paired(
        &r.finals_by_replication(Arm::WithBias, "corr"),
        &r.finals_by_replication(Arm::NoBias, "corr"),
    );
    let (wins, total) = count(test.iter().zip(&corr).map(|(t, c)| t.0 < t.1 && c.0 > c.1));
    let relu_ok = total == relu.replications && wins * 10 >= 9 * total;

    let mut sign = relu.clone();
    sign.link = LinkFunction::new(LinkKind::Sign);
    let r = execute(&sign, None).unwrap();
    let mut sign_ok = true;
    let mut notes = Vec::new();
    for metric in ["test_err", "corr"] {
        let d: Vec<f64> = paired(
            &r.finals_by_replication(Arm::WithBias, metric),
            &r.finals_by_replication(Arm::NoBias, metric),
        )
        .into_iter()
        .map(|(a, b)| a - b)
        .collect();
        let (mean, std) = blm_pgd::diagnostics::mean_std(&d);
        sign_ok &= d.len() == sign.replications && mean.abs() <= std;
        notes.push(format!("{metric} diff {mean:+.2e}±{std:.2e}"));
    }
    outcome(
        relu_ok && sign_ok,
        format!(
            "relu: [X 1] wins both metrics in {wins}/{total}; sign: {}",
            notes.join(", ")
        ),
    )
}

fn crit5() -> Outcome {
    let mut spec = base_spec();
    spec.link = LinkFunction::new(LinkKind::Sign);
    spec.fit_bias = FitBiasMode::True;
    spec.replications = 10;
    let mut stable = 0;
    let mut notes = Vec::new();
    for battery in 0..10u64 {
        spec.base_seed = 1_000 * (battery + 1);
        let res = execute_scaling(&spec, &[250, 500], None).unwrap();
        let s250 = res.row(250, Arm::WithBias).unwrap().std_corr;
        let s500 = res.row(500, Arm::WithBias).unwrap().std_corr;
        stable += (s500 <= s250) as usize;
        notes.push(format!("{:.3}", s500 / s250));
    }
    outcome(
        stable >= 8,
        format!(
            "{stable}/10 batteries with std(corr) n=500 <= n=250 (ratios {})",
            notes.join(" ")
        ),
    )
}

fn crit6() -> Outcome {
    let beta = make_ground_truth(100, 10, 6).unwrap();
    let sign = population_blm(
        beta.view(),
        DistributionSpec::Gaussian,
        LinkFunction::new(LinkKind::Sign),
        1_000_000,
        61,
    )
    .unwrap();
    let sign_dev = (&sign.theta_star - &(&beta * (2.0 / PI).sqrt()))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let relu = population_blm(
        beta.view(),
        DistributionSpec::Gaussian,
        LinkFunction::new(LinkKind::Relu),
        1_000_000,
        62,
    )
    .unwrap();
    let relu_dev = (&relu.theta_star - &(&beta * 0.5))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mu_dev = (relu.mu_star - 1.0 / (2.0 * PI).sqrt()).abs();
    let ok = sign_dev <= 3.0 * sign.stderr
        && relu_dev <= 3.0 * relu.stderr
        && mu_dev <= 3.0 * relu.mu_stderr;
    outcome(
        ok,
        format!(
            "sign {:.2}se, relu theta {:.2}se, relu mu {:.2}se (mu={:.5})",
            sign_dev / sign.stderr,
            relu_dev / relu.stderr,
            mu_dev / relu.mu_stderr,
            relu.mu_star
        ),
    )
}

fn brute_sparsity(v: &[f64], s: usize) -> Vec<f64> {
    let p = v.len();
    let mut best: Option<(f64, u32)> = None;
    for mask in 0u32..(1 << p) {
        if mask.count_ones() as usize != s {
            continue;
        }
        let kept: f64 = (0..p)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| v[i] * v[i])
            .sum();
        if best.is_none_or(|(b, _)| kept > b) {
            best = Some((kept, mask));
        }
    }
    let mask = best.unwrap().1;
    (0..p)
        .map(|i| if mask >> i & 1 == 1 { v[i] } else { 0.0 })
        .collect()
}

/// Unique KKT point of `min ||x − v||² s.t. ||x||₁ ≤ R`, found by enumerating supports.
fn brute_l1(v: &[f64], radius: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= radius {
        return v.to_vec();
    }
    let p = v.len();
    for mask in 1u32..(1 << p) {
        let inside: Vec<usize> = (0..p).filter(|i| mask >> i & 1 == 1).collect();
        let lam = (inside.iter().map(|&i| v[i].abs()).sum::<f64>() - radius) / inside.len() as f64;
        let valid = lam >= 0.0
            && (0..p).all(|i| {
                if mask >> i & 1 == 1 {
                    v[i].abs() > lam
                } else {
                    v[i].abs() <= lam
                }
            });
        if valid {
            return (0..p)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        v[i].signum() * (v[i].abs() - lam)
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }
    unreachable!("the l1 projection has a KKT support")
}

/// Rank-r truncation via the eigendecomposition of `AᵀA`: `A V_r V_rᵀ`.
fn eigen_truncation(a: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let eig = (a.transpose() * a).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vr = DMatrix::from_fn(a.ncols(), r, |i, k| eig.eigenvectors[(i, order[k])]);
    a * &vr * vr.transpose()
}

fn crit7() -> Outcome {
    let mut rng = rng_from_seed(7);
    let normal = |rng: &mut blm_pgd::rng::Rng, p: usize| -> Vec<f64> {
        (0..p)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let (mut sparse_bad, mut l1_worst, mut lr_worst) = (0usize, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let p = rng.random_range(1..=10);
        let v = normal(&mut rng, p);
        let s = rng.random_range(1..=p);
        let got = project(ArrayView1::from(&v), &ConstraintSpec::sparsity(p, s)).unwrap();
        sparse_bad += (got.to_vec() != brute_sparsity(&v, s)) as usize;

        let l1: f64 = v.iter().map(|x| x.abs()).sum();
        let radius = rng.random_range(0.05..1.5) * l1;
        let got = project(ArrayView1::from(&v), &ConstraintSpec::l1_ball(p, radius)).unwrap();
        let want = brute_l1(&v, radius);
        l1_worst = got
            .iter()
            .zip(&want)
            .fold(l1_worst, |m, (a, b)| m.max((a - b).abs()));

        let r = rng.random_range(1..=7);
        let flat = normal(&mut rng, 64);
        let got = project(ArrayView1::from(&flat), &ConstraintSpec::low_rank(8, 8, r)).unwrap();
        let want = eigen_truncation(&DMatrix::from_row_slice(8, 8, &flat), r);
        lr_worst = (0..64).fold(lr_worst, |m, k| {
            m.max((got[k] - want[(k / 8, k % 8)]).abs())
        });
    }
    outcome(
        sparse_bad == 0 && l1_worst <= 1e-10 && lr_worst <= 1e-10,
        format!("sparsity mismatches {sparse_bad}, l1 max dev {l1_worst:.1e}, low-rank max dev {lr_worst:.1e}"),
    )
}

fn crit8() -> Outcome {
    let (n, p) = (200, 300);
    let mut ok = 0;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut bound = 0.0;
    for seed in 0..50u64 {
        let x = sample_design(
            n,
            p,
            DistributionSpec::CenteredExponential,
            derive_seed(seed, stream::TRAIN_DESIGN),
        )
        .unwrap();
        let r = spectral_chernoff_check(x.view()).unwrap();
        ok += (r.measured <= r.bound && r.measured >= n as f64) as usize;
        lo = lo.min(r.measured);
        hi = hi.max(r.measured);
        bound = r.bound;
    }
    outcome(
        ok == 50,
        format!("{ok}/50 within [n, bound]; measured {lo:.1}..{hi:.1}, n={n}, bound {bound:.3e}"),
    )
}

fn crit9() -> Outcome {
    let (n, p, s) = (500, 800, 20);
    let mut pass = true;
    let mut notes = Vec::new();
    for dist in [
        DistributionSpec::Gaussian,
        DistributionSpec::CenteredExponential,
    ] {
        let mut vals = Vec::new();
        for seed in 0..20u64 {
            let beta = make_ground_truth(p, s, derive_seed(seed, stream::GROUND_TRUTH)).unwrap();
            let blm = population_blm(
                beta.view(),
                dist,
                LinkFunction::new(LinkKind::Relu),
                200_000,
                derive_seed(seed, stream::POPULATION),
            )
            .unwrap();
            let sparsity = ConstraintSpec::sparsity(p, s);
            let anchor = project(blm.theta_star.view(), &sparsity).unwrap();
            let t = TangentBallSpec::new(sparsity, anchor, Relaxation::DoubledSparsity).unwrap();
            let x = sample_design(n, p, dist, derive_seed(seed, stream::TRAIN_DESIGN)).unwrap();
            vals.push(
                rsv_lower_check(x.view(), &t, 32, derive_seed(seed, stream::CHECKS)).unwrap(),
            );
        }
        let (k, total) = count(vals.iter().map(|r| r.satisfied));
        let min = vals
            .iter()
            .map(|r| r.measured)
            .fold(f64::INFINITY, f64::min);
        pass &= k * 100 >= 95 * total;
        notes.push(format!("{}: {k}/{total} (min {min:.3})", dist.as_str()));
    }
    outcome(pass, notes.join(", "))
}

fn crit10() -> Outcome {
    let (n, p, s) = (10_000, 800, 20);
    let link = LinkFunction::new(LinkKind::Sign);
    let mut pass = true;
    let mut notes = Vec::new();
    for dist in [
        DistributionSpec::Gaussian,
        DistributionSpec::CenteredExponential,
    ] {
        let a = dist.orlicz_index();
        let beta = make_ground_truth(p, s, 10).unwrap();
        let blm = population_blm(beta.view(), dist, link, 1_000_000, 11).unwrap();
        let mut clean = 0;
        for seed in 0..100u64 {
            let w = sample_residuals(
                beta.view(),
                dist,
                link,
                blm.theta_star.view(),
                blm.mu_star,
                n,
                1_000 + seed,
            )
            .unwrap();
            let sigma = orlicz_norm_estimate(w.view(), a).unwrap();
            clean += clip_check(w.view(), sigma, a).unwrap().satisfied as usize;
        }
        let b = clip_level(n, a).unwrap();
        let bias = clip_bias_check(dist, link, beta.view(), b, 1_000_000, 12).unwrap();
        pass &= clean >= 99 && bias.satisfied;
        notes.push(format!(
            "{}: {clean}/100 unclipped, bias {:.2e} vs {:.2e}",
            dist.as_str(),
            bias.measured,
            bias.bound
        ));
    }
    outcome(pass, notes.join("; "))
}

fn crit11() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (s, p) in [(5usize, 200usize), (20, 800)] {
        let beta = make_ground_truth(p, s, 11).unwrap();
        let t = TangentBallSpec::new(
            ConstraintSpec::sparsity(p, s),
            beta,
            Relaxation::DoubledSparsity,
        )
        .unwrap();
        let est = width_mc(&t, 4000, 111).unwrap();
        let table = (s as f64 * (6.0 * p as f64 / s as f64).ln()).sqrt();
        let ratio = est.estimate / table;
        pass &= (0.5..=2.0).contains(&ratio);
        notes.push(format!("s={s},p={p}: ratio {ratio:.3}"));
    }
    for p in [4usize, 64, 256] {
        let t = TangentBallSpec::new(
            ConstraintSpec::unconstrained(p),
            Array1::zeros(p),
            Relaxation::FullBall,
        )
        .unwrap();
        let est = width_mc(&t, 4000, 112 + p as u64).unwrap();
        let lo = (p as f64 - 1.0).sqrt() - 3.0 * est.stderr;
        let hi = (p as f64).sqrt() + 3.0 * est.stderr;
        pass &= (lo..=hi).contains(&est.estimate);
        notes.push(format!(
            "full p={p}: {:.3} in [{lo:.3}, {hi:.3}]",
            est.estimate
        ));
    }
    outcome(pass, notes.join("; "))
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn crit12() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::from_toml(
        r#"
        n = 80
        p = 120
        s = 5
        max_iters = 60
        replications = 4
        mc_samples = 20000
        clip_mc_samples = 5000
        width_reps = 2
        checks = ["rho", "nu", "rsv", "spectral", "clip", "clip_bias", "empirical_width"]
        "#,
    )
    .unwrap();
    spec.output_dir = tmp.path().join("shared");
    let runs: Vec<_> = [Some(1), Some(1), Some(3)]
        .into_iter()
        .enumerate()
        .map(|(i, jobs)| {
            let dir = tmp.path().join(format!("run{i}"));
            emit_outputs(&execute(&spec, jobs).unwrap(), &dir).unwrap();
            read_tree(&dir)
        })
        .collect();
    let identical = runs[0] == runs[1] && runs[0] == runs[2];

    let beta = make_ground_truth(40, 4, 3).unwrap();
    let ds = SyntheticDataset::generate(
        50,
        beta,
        DistributionSpec::CenteredExponential,
        LinkFunction::with_noise(LinkKind::Relu, 0.3),
        4,
        5,
    )
    .unwrap();
    let (csv, _) = ds.export(tmp.path(), "roundtrip").unwrap();
    let back = ingest_csv(&csv).unwrap();
    let lossless = back.x == ds.data.x && back.y == ds.data.y;
    outcome(
        identical && lossless,
        format!("{} files byte-identical across runs/thread counts: {identical}; CSV round-trip exact: {lossless}", runs[0].len()),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let dt: Duration = start.elapsed();
        failures += (!o.pass) as usize;
        println!(
            "{} criterion {id:>2} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            dt.as_secs_f64()
        );
    };
    let start = Instant::now();
    let t = Instant::now();
    let runs = recovery_runs();
    let shared = t.elapsed().as_secs_f64();
    println!("(criteria 1-2 share 20 solves: {shared:.1}s)");
    report(1, "exact recovery", &mut || crit1(&runs));
    report(2, "linear convergence", &mut || crit2(&runs));
    report(3, "1/sqrt(n) error", &mut crit3);
    report(4, "bias benefit", &mut crit4);
    report(5, "sample-size stability", &mut crit5);
    report(6, "population oracle", &mut crit6);
    report(7, "projection oracles", &mut crit7);
    report(8, "spectral bound", &mut crit8);
    report(9, "rsv lower bound", &mut crit9);
    report(10, "clipping", &mut crit10);
    report(11, "width sanity", &mut crit11);
    report(12, "determinism and round-trip", &mut crit12);
    println!(
        "acceptance: {} failed, total {:.1}s",
        failures,
        start.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
