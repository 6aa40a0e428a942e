use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::svg::{render_chart, Band, Chart};
use super::{Arm, ExperimentResult, ReplicationSeeds, ScalingResult, SummaryRow, METRICS};
use crate::diagnostics::write_reports_csv;
use crate::error::{Error, Result};
use crate::synth::{csv_io_error, fmt_f64};

pub const SUMMARY_HEADER: [&str; 5] = ["iter", "arm", "metric", "mean", "std"];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.arm.as_str().into(),
            r.metric.into(),
            opt(r.mean),
            opt(r.std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn metric_title(metric: &str) -> &'static str {
    match metric {
        "train_err" => "normalized training error",
        "test_err" => "normalized test error",
        "corr" => "correlation to beta",
        "est_err" => "estimation error",
        _ => "value",
    }
}

fn arm_color(arm: Arm) -> &'static str {
    match arm {
        Arm::WithBias => "#1f77b4",
        Arm::NoBias => "#d62728",
    }
}

fn chart_for(result: &ExperimentResult, metric: &'static str) -> Chart {
    let bands = result
        .spec
        .fit_bias
        .arms()
        .into_iter()
        .map(|arm| Band {
            label: arm.label().into(),
            color: arm_color(arm).into(),
            points: result
                .summary
                .iter()
                .filter(|r| r.arm == arm && r.metric == metric)
                .filter_map(|r| Some((r.iter as f64, r.mean?, r.std?)))
                .collect(),
        })
        .collect();
    let reference = result
        .baseline
        .iter()
        .find(|b| b.metric == metric)
        .and_then(|b| b.mean)
        .map(|m| ("γβ".to_string(), m));
    Chart {
        title: format!("{}: {}", result.spec.name, metric_title(metric)),
        x_label: "iteration".into(),
        y_label: metric_title(metric).into(),
        bands,
        reference,
    }
}

#[derive(Serialize)]
struct ArmOutcome<'a> {
    replication: usize,
    arm: &'a str,
    status: &'a str,
    iterations: usize,
    converged: bool,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    name: &'a str,
    spec: &'a super::ExperimentSpec,
    seeds: Vec<ReplicationSeeds>,
    gamma: Vec<Option<f64>>,
    outcomes: Vec<ArmOutcome<'a>>,
    files: Vec<String>,
}

/// Writes `summary.csv`, `baseline.csv`, `replications.csv`, `theory.csv`,
/// one SVG per metric, optional traces, and `manifest.json`. Output bytes
/// depend only on the `ExperimentSpec`.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let path = dir.join("summary.csv");
    write_summary_csv(&result.summary, create(&path)?).map_err(|e| csv_io_error(&path, e))?;
    files.push(path);

    let path = dir.join("baseline.csv");
    {
        let mut w = csv::Writer::from_writer(create(&path)?);
        let mut write = || -> csv::Result<()> {
            w.write_record(["metric", "mean", "std"])?;
            for b in &result.baseline {
                w.write_record([b.metric.to_string(), opt(b.mean), opt(b.std)])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| csv_io_error(&path, e))?;
    }
    files.push(path);

    let path = dir.join("replications.csv");
    {
        let mut w = csv::Writer::from_writer(create(&path)?);
        let mut write = || -> csv::Result<()> {
            let mut header = vec!["replication", "seed", "arm", "status", "iterations"];
            let finals: Vec<String> = METRICS.iter().map(|m| format!("final_{m}")).collect();
            header.extend(finals.iter().map(String::as_str));
            w.write_record(&header)?;
            for rep in &result.replications {
                for arm in &rep.arms {
                    let last = arm.final_record();
                    let mut row = vec![
                        rep.seeds.replication.to_string(),
                        rep.seeds.seed.to_string(),
                        arm.arm.as_str().to_string(),
                        if arm.ok() { "ok" } else { "failed" }.to_string(),
                        arm.trace.len().saturating_sub(1).to_string(),
                    ];
                    for m in METRICS {
                        row.push(opt(last.and_then(|r| super::metric_of(r, m))));
                    }
                    w.write_record(&row)?;
                }
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| csv_io_error(&path, e))?;
    }
    files.push(path);

    let path = dir.join("theory.csv");
    write_reports_csv(&result.reports, create(&path)?).map_err(|e| csv_io_error(&path, e))?;
    files.push(path);

    for metric in METRICS {
        let path = dir.join(format!("{metric}.svg"));
        fs::write(&path, render_chart(&chart_for(result, metric)))
            .map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }

    if result.spec.write_traces {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        for rep in &result.replications {
            for arm in &rep.arms {
                let path = tdir.join(format!(
                    "rep{:03}_{}.jsonl",
                    rep.seeds.replication,
                    arm.arm.as_str()
                ));
                arm.trace
                    .write_jsonl(create(&path)?)
                    .map_err(|e| Error::io(&path, e))?;
                files.push(path);
            }
        }
    }

    let path = dir.join("manifest.json");
    let rel = |p: &PathBuf| {
        p.strip_prefix(dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    };
    let mut listed: Vec<String> = files.iter().map(rel).collect();
    listed.push("manifest.json".into());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        name: &result.spec.name,
        spec: &result.spec,
        seeds: result.replications.iter().map(|r| r.seeds).collect(),
        gamma: result
            .replications
            .iter()
            .map(|r| r.baseline.map(|b| b.gamma))
            .collect(),
        outcomes: result
            .replications
            .iter()
            .flat_map(|r| {
                r.arms.iter().map(|a| ArmOutcome {
                    replication: r.seeds.replication,
                    arm: a.arm.as_str(),
                    status: if a.ok() { "ok" } else { "failed" },
                    iterations: a.trace.len().saturating_sub(1),
                    converged: a.converged,
                    error: a.error.as_deref(),
                })
            })
            .collect(),
        files: listed,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(files)
}

/// Writes `scaling.csv`: one row per sample size and arm.
pub fn emit_scaling(result: &ScalingResult, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("scaling.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut write = || -> csv::Result<()> {
        w.write_record([
            "n",
            "arm",
            "median_est_err",
            "median_test_err",
            "median_corr",
            "std_corr",
        ])?;
        for r in &result.rows {
            w.write_record([
                r.n.to_string(),
                r.arm.as_str().to_string(),
                fmt_f64(r.median_est_err),
                fmt_f64(r.median_test_err),
                fmt_f64(r.median_corr),
                fmt_f64(r.std_corr),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| csv_io_error(&path, e))?;
    Ok(path)
}
