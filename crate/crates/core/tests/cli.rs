use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blm-pgd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const PROBLEM: [&str; 10] = [
    "--n", "40", "--p", "12", "--s", "2", "--dist", "gaussian", "--link", "sign",
];

#[test]
fn synth_then_fit_reproduces_the_synthetic_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let out = run(&[&["synth"][..], &PROBLEM, &["--output-dir", path(&data_dir)]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(data_dir.join("dataset.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<String> = (1..=12)
        .map(|j| format!("x_{j}"))
        .chain(["y".into()])
        .collect();
    assert_eq!(lines.next().unwrap(), header.join(","));
    assert_eq!(lines.count(), 40);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data_dir.join("dataset.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["n"], 40);
    assert_eq!(meta["beta_support"].as_array().unwrap().len(), 2);

    let fit_args = ["--constraint", "sparsity", "--max-iters", "25"];
    let ingested = dir.path().join("ingested");
    let out = run(&[
        &["fit"][..],
        &PROBLEM,
        &fit_args,
        &[
            "--data",
            path(&data_dir.join("dataset.csv")),
            "--output-dir",
            path(&ingested),
        ],
    ]
    .concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let synthetic = dir.path().join("synthetic");
    let out = run(&[
        &["fit"][..],
        &PROBLEM,
        &fit_args,
        &["--output-dir", path(&synthetic)],
    ]
    .concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // The CSV carries enough digits that both routes see the same numbers.
    let read = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.join("fit.json")).unwrap()).unwrap()
    };
    assert_eq!(read(&ingested)["theta"], read(&synthetic)["theta"]);
    assert_eq!(read(&ingested)["mu"], read(&synthetic)["mu"]);

    let trace = fs::read_to_string(ingested.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 26);
    for line in trace.lines() {
        let rec: serde_json::Map<String, serde_json::Value> = serde_json::from_str(line).unwrap();
        let keys: Vec<&str> = rec.keys().map(String::as_str).collect();
        let mut want = vec![
            "iter",
            "est_err",
            "train_err",
            "test_err",
            "corr",
            "displacement",
        ];
        want.sort_unstable();
        let mut keys = keys;
        keys.sort_unstable();
        assert_eq!(keys, want);
        // No oracle for ingested data.
        assert!(rec["est_err"].is_null() && rec["corr"].is_null());
    }
    let synthetic_trace = fs::read_to_string(synthetic.join("trace.jsonl")).unwrap();
    assert!(synthetic_trace
        .lines()
        .last()
        .unwrap()
        .contains("\"corr\":0."));
}

const SMALL_CONFIG: &str = r#"
name = "smoke"
n = 60
p = 40
s = 3
dist = "centered_exponential"
link = "relu"
max_iters = 30
replications = 3
base_seed = 5
mc_samples = 10000
clip_mc_samples = 20000
width_reps = 2
"#;

#[test]
fn experiment_outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("smoke.toml");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out_dir, jobs) in [(&a, "1"), (&b, "2")] {
        let out = run(&[
            "experiment",
            "--config",
            path(&cfg),
            "--jobs",
            jobs,
            "--output-dir",
            path(out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }

    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(summary.starts_with("iter,arm,metric,mean,std\n"));
    let theory = fs::read_to_string(a.join("theory.csv")).unwrap();
    assert!(theory.starts_with("quantity,n,p,s,dist,seed,measured,bound,satisfied\n"));
    for metric in ["train_err", "test_err", "corr", "est_err"] {
        assert!(fs::read_to_string(a.join(format!("{metric}.svg")))
            .unwrap()
            .starts_with("<svg"));
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.len() > 8);
    for f in files {
        let rel = f.as_str().unwrap();
        let left = fs::read(a.join(rel)).unwrap();
        let right = fs::read(b.join(rel)).unwrap();
        if rel == "manifest.json" {
            // Only the echoed output directory differs.
            let strip = |bytes: Vec<u8>| {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v["spec"]["output_dir"] = serde_json::Value::Null;
                v
            };
            assert_eq!(strip(left), strip(right));
        } else {
            assert!(left == right, "{rel} differs");
        }
    }
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["fit", "--eta", "bogus"])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(
        code(&run(&[
            "synth",
            "--s",
            "0",
            "--output-dir",
            path(dir.path())
        ])),
        1
    );
    assert_eq!(
        code(&run(&[
            "experiment",
            "--jobs",
            "0",
            "--output-dir",
            path(dir.path())
        ])),
        1
    );

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "unknown_key = 3\n").unwrap();
    let out = run(&["experiment", "--config", path(&cfg)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_key"));

    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "x_1,x_2,y\n1,2,3\n4,oops,6\n").unwrap();
    let out = run(&[
        "fit",
        "--data",
        path(&csv),
        "--constraint",
        "unconstrained",
        "--output-dir",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = run(&[
        "fit",
        "--data",
        path(&missing),
        "--constraint",
        "unconstrained",
        "--output-dir",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);

    // A step this large blows up; the partial trace is still written.
    let out = run(&[
        &["fit"][..],
        &PROBLEM,
        &[
            "--constraint",
            "unconstrained",
            "--eta",
            "10",
            "--max-iters",
            "200",
            "--output-dir",
            path(dir.path()),
        ],
    ]
    .concat());
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(
        fs::read_to_string(dir.path().join("trace.jsonl"))
            .unwrap()
            .lines()
            .count()
            >= 1
    );
}

#[test]
fn failed_checks_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // Far fewer samples than dimensions: the restricted eigenvalue check fails.
    let out = run(&[
        "check",
        "--n",
        "8",
        "--p",
        "40",
        "--s",
        "3",
        "--replications",
        "1",
        "--output-dir",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let theory = fs::read_to_string(dir.path().join("theory.csv")).unwrap();
    assert!(theory
        .lines()
        .skip(1)
        .any(|l| l.starts_with("rsv_lower,") && l.ends_with(",false")));

    let out = run(&[
        "check",
        "--n",
        "400",
        "--p",
        "20",
        "--s",
        "2",
        "--replications",
        "1",
        "--checks",
        "spectral",
        "--output-dir",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn width_prints_table_and_monte_carlo_values() {
    let out = run(&[
        "width",
        "--p",
        "200",
        "--s",
        "5",
        "--constraint",
        "sparsity",
        "--n-mc",
        "500",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let row = text.lines().last().unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[0], "sparsity");
    let table: f64 = cells[4].parse().unwrap();
    let want = 5.0 * 240.0f64.ln();
    assert!((table - want).abs() < 1e-6 * want, "{row}");
}
