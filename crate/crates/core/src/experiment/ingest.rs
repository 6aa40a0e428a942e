use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::synth::Dataset;

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn check_header(header: &csv::StringRecord) -> Result<usize> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let joined = cols.join(",");
    match cols.last() {
        Some(&"y") => {}
        _ => {
            return Err(parse_err(
                1,
                format!("header `{joined}` has no trailing `y` column"),
            ))
        }
    }
    let p = cols.len() - 1;
    if p == 0 {
        return Err(parse_err(
            1,
            format!("header `{joined}` has no feature columns"),
        ));
    }
    for (j, c) in cols[..p].iter().enumerate() {
        if *c != format!("x_{}", j + 1) {
            return Err(parse_err(
                1,
                format!("header `{joined}`: expected `x_{}`, found `{c}`", j + 1),
            ));
        }
    }
    Ok(p)
}

/// Reads `x_1..x_p,y` CSV from any reader.
pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let p = check_header(&header)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|pos| pos.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|pos| pos.line()).unwrap_or(0);
        if rec.len() != p + 1 {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", p + 1, rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(line, format!("column {}: `{cell}` is not a number", j + 1))
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    line,
                    format!("column {}: `{cell}` is not finite", j + 1),
                ));
            }
            if j < p {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ys.len();
    let x = Array2::from_shape_vec((n, p), xs).expect("row lengths checked");
    Dataset::new(x, Array1::from(ys))
}

/// Loads a dataset written by the synthetic exporter (or any file in that format).
pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}
