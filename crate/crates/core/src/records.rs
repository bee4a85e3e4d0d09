//! CSV encoding of summaries and per-step traces.
//!
//! Floats are written with 17 significant digits so that a round trip through
//! text is exact. Undefined metrics are written as `NaN`.

use std::io::Write;

use crate::bench::{MetricStat, RunResult, SummaryRow, TraceRecord};
use crate::error::{Error, Result};
use crate::ssm::{StateVec, StructureId, MAX_DIM};

pub const SUMMARY_HEADER: [&str; 10] = [
    "experiment",
    "method",
    "runs",
    "rmse_mean",
    "rmse_se",
    "phi_bar_mean",
    "phi_bar_se",
    "switch_rate_mean",
    "switch_rate_se",
    "seed",
];

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{what}: not a number: {s:?}")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("{what}: not a non-negative integer: {s:?}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("write failed: {e}"))
}

fn stat_fields(s: Option<MetricStat>) -> [String; 2] {
    match s {
        Some(s) => [fmt_f64(s.mean), fmt_f64(s.se)],
        None => [fmt_f64(f64::NAN), fmt_f64(f64::NAN)],
    }
}

fn parse_stat(mean: &str, se: &str, what: &str) -> Result<Option<MetricStat>> {
    let mean = parse_f64(mean, what)?;
    let se = parse_f64(se, what)?;
    Ok(if mean.is_nan() { None } else { Some(MetricStat { mean, se }) })
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        let [rm, rs] = stat_fields(Some(r.rmse));
        let [pm, ps] = stat_fields(r.phi_bar);
        let [sm, ss] = stat_fields(r.switch_rate);
        w.write_record([
            r.experiment.clone(),
            r.method.clone(),
            r.runs.to_string(),
            rm,
            rs,
            pm,
            ps,
            sm,
            ss,
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn summary_to_string(rows: &[SummaryRow]) -> String {
    let mut buf = Vec::new();
    write_summary(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Parse(format!(
            "unexpected summary header: {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(Error::Parse(format!("expected 10 fields, got {}", rec.len())));
        }
        let rmse = parse_stat(&rec[3], &rec[4], "rmse")?
            .ok_or_else(|| Error::Parse("rmse_mean must be a number".into()))?;
        rows.push(SummaryRow {
            experiment: rec[0].to_string(),
            method: rec[1].to_string(),
            runs: parse_usize(&rec[2], "runs")?,
            rmse,
            phi_bar: parse_stat(&rec[5], &rec[6], "phi_bar")?,
            switch_rate: parse_stat(&rec[7], &rec[8], "switch_rate")?,
            seed: rec[9]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("seed: {:?}", &rec[9])))?,
        });
    }
    Ok(rows)
}

pub fn trace_header(dim: usize, n_structures: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=dim).map(|i| format!("z_true_{i}")));
    h.extend((1..=dim).map(|i| format!("z_hat_{i}")));
    h.push("s_t".into());
    h.extend((0..n_structures).map(|s| format!("phi_s{s}")));
    h.push("loglik".into());
    h.push("ess".into());
    h
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let first = trace
        .first()
        .ok_or_else(|| Error::InvalidInput("empty trace".into()))?;
    let dim = first.z_true.dim();
    let n = first.scores.len();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(dim, n)).map_err(csv_err)?;
    for r in trace {
        let mut row = vec![r.t.to_string()];
        row.extend(r.z_true.as_slice().iter().map(|x| fmt_f64(*x)));
        row.extend(r.z_hat.as_slice().iter().map(|x| fmt_f64(*x)));
        row.push(r.structure.0.to_string());
        row.extend(r.scores.iter().map(|x| fmt_f64(*x)));
        row.push(fmt_f64(r.loglik));
        row.push(fmt_f64(r.ess));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn trace_file_name(method_label: &str, run: &RunResult) -> String {
    format!("trace_{method_label}_{}.csv", run.run_index)
}

/// Parses a trace, inferring the state dimension and structure count from the header.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let dim = header.iter().filter(|h| h.starts_with("z_true_")).count();
    let n = header.iter().filter(|h| h.starts_with("phi_s")).count();
    if dim == 0 || dim > MAX_DIM || n == 0 || header != trace_header(dim, n) {
        return Err(Error::Parse(format!("unexpected trace header: {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "expected {} fields, got {}",
                header.len(),
                rec.len()
            )));
        }
        let num = |i: usize| parse_f64(&rec[i], &header[i]);
        let coords = |start: usize| -> Result<StateVec> {
            let v = (start..start + dim).map(num).collect::<Result<Vec<_>>>()?;
            StateVec::from_slice(&v)
        };
        let s = parse_usize(&rec[1 + 2 * dim], "s_t")?;
        if s >= n {
            return Err(Error::Parse(format!("s_t = {s} out of range")));
        }
        let score_start = 2 + 2 * dim;
        out.push(TraceRecord {
            t: parse_usize(&rec[0], "t")?,
            z_true: coords(1)?,
            z_hat: coords(1 + dim)?,
            structure: StructureId(s),
            scores: (score_start..score_start + n).map(num).collect::<Result<_>>()?,
            loglik: num(score_start + n)?,
            ess: num(score_start + n + 1)?,
        });
    }
    Ok(out)
}
