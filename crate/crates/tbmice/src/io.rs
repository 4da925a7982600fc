//! CSV loading and the output file formats. Every writer goes through
//! [`write_atomic`], so readers never observe a half-written file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use nalgebra::DMatrix;
use tbmice_core::diagnostics::{DiagnosticsSummary, SUMMARY_HEADER};
use tbmice_core::imputation::PooledCell;
use tbmice_core::metrics::MetricsReport;
use tbmice_core::missingness::{GroundTruthMask, InjectedCell, MaskDescriptor};
use tbmice_core::samplers::PosteriorDraws;
use tbmice_core::TimeSeriesDataset;

/// Where row timestamps come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TimestampSource {
    /// No timestamps.
    None,
    /// Use a column named `timestamp` if present.
    #[default]
    Auto,
    /// ISO-8601 date-time or integer seconds in the named column.
    Column(String),
    /// Separate date and time columns with `chrono` formats.
    DateTime {
        date: String,
        time: String,
        date_format: String,
        time_format: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Values use `,` as the decimal separator.
    pub decimal_comma: bool,
    /// A numeric code meaning "missing" (e.g. `-200`).
    pub sentinel: Option<f64>,
    /// Fields treated as missing, compared after trimming.
    pub na_tokens: Vec<String>,
    /// Keep only these value columns, in this order.
    pub columns: Option<Vec<String>>,
    pub timestamp: TimestampSource,
    /// Drop rows with any missing value among the kept columns.
    pub complete_cases: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            decimal_comma: false,
            sentinel: None,
            na_tokens: ["", "NA", "NaN", "nan", "null", "NULL"].map(String::from).to_vec(),
            columns: None,
            timestamp: TimestampSource::Auto,
            complete_cases: false,
        }
    }
}

const ISO_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"];

/// Integer seconds, an ISO-8601 date-time, or a bare date (midnight).
pub fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    for f in ISO_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_time(NaiveTime::MIN).and_utc().timestamp());
    }
    bail!("unrecognised timestamp `{s}`")
}

pub fn format_timestamp(secs: i64) -> String {
    match chrono::DateTime::from_timestamp(secs, 0) {
        Some(dt) => dt.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string(),
        None => secs.to_string(),
    }
}

fn parse_value(raw: &str, opts: &LoadOptions) -> Result<Option<f64>> {
    let s = raw.trim();
    if opts.na_tokens.iter().any(|t| t == s) {
        return Ok(None);
    }
    let v: f64 = if opts.decimal_comma {
        s.replace(',', ".").parse()
    } else {
        s.parse()
    }
    .map_err(|_| anyhow!("not a number: `{s}`"))?;
    if !v.is_finite() || opts.sentinel == Some(v) {
        return Ok(None);
    }
    Ok(Some(v))
}

/// Loads a numeric table. Header fields that are empty are ignored. A record
/// whose every field is empty is an all-missing row, except in files with a
/// timestamp, where it carries no time and is skipped as padding.
pub fn load_csv(path: &Path, opts: &LoadOptions) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("column `{name}` not found in {}", path.display()))
    };
    let (ts_cols, ts_kind): (Vec<usize>, &TimestampSource) = match &opts.timestamp {
        TimestampSource::None => (vec![], &opts.timestamp),
        TimestampSource::Auto => match header.iter().position(|h| h.eq_ignore_ascii_case("timestamp")) {
            Some(i) => (vec![i], &opts.timestamp),
            None => (vec![], &TimestampSource::None),
        },
        TimestampSource::Column(c) => (vec![find(c)?], &opts.timestamp),
        TimestampSource::DateTime { date, time, .. } => (vec![find(date)?, find(time)?], &opts.timestamp),
    };
    let value_cols: Vec<usize> = match &opts.columns {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|i| !header[*i].is_empty() && !ts_cols.contains(i))
            .collect(),
    };
    if value_cols.is_empty() {
        bail!("{} has no value columns", path.display());
    }
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut stamps: Vec<i64> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        if !ts_cols.is_empty() && rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let ctx = || format!("{} data row {}", path.display(), line + 1);
        let row = value_cols
            .iter()
            .map(|&c| parse_value(field(c), opts))
            .collect::<Result<Vec<_>>>()
            .with_context(ctx)?;
        if opts.complete_cases && row.iter().any(Option::is_none) {
            continue;
        }
        match ts_kind {
            TimestampSource::None => {}
            TimestampSource::Auto | TimestampSource::Column(_) => {
                stamps.push(parse_timestamp(field(ts_cols[0])).with_context(ctx)?)
            }
            TimestampSource::DateTime {
                date_format,
                time_format,
                ..
            } => {
                let d = NaiveDate::parse_from_str(field(ts_cols[0]).trim(), date_format).with_context(ctx)?;
                let t = NaiveTime::parse_from_str(field(ts_cols[1]).trim(), time_format).with_context(ctx)?;
                stamps.push(d.and_time(t).and_utc().timestamp());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} has no usable rows", path.display());
    }
    let names: Vec<String> = value_cols.iter().map(|&c| header[c].clone()).collect();
    let values = DMatrix::from_fn(rows.len(), names.len(), |t, j| rows[t][j].unwrap_or(f64::NAN));
    let mask = tbmice_core::MissingnessMask::from_non_finite(&values);
    let timestamps = if matches!(ts_kind, TimestampSource::None) { None } else { Some(stamps) };
    TimeSeriesDataset::new(values, timestamps, names, mask).with_context(|| format!("loading {}", path.display()))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| anyhow!("{} is not a file path", path.display()))?
        .to_string_lossy();
    let tmp: PathBuf = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

fn csv_bytes<R>(header: &[&str], rows: R) -> Result<Vec<u8>>
where
    R: IntoIterator,
    R::Item: IntoIterator,
    <R::Item as IntoIterator>::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

/// Dataset as CSV: optional `timestamp` column, then one column per variable;
/// missing cells are empty.
pub fn write_dataset(path: &Path, ds: &TimeSeriesDataset) -> Result<()> {
    let mut header: Vec<&str> = Vec::new();
    if ds.timestamps().is_some() {
        header.push("timestamp");
    }
    header.extend(ds.names().iter().map(String::as_str));
    let rows = (0..ds.nrows()).map(|t| {
        let mut row = Vec::with_capacity(header.len());
        if let Some(ts) = ds.timestamps() {
            row.push(format_timestamp(ts[t]));
        }
        row.extend((0..ds.ncols()).map(|j| ds.get(t, j).map(|v| v.to_string()).unwrap_or_default()));
        row
    });
    write_atomic(path, &csv_bytes(&header, rows)?)
}

pub const GROUND_TRUTH_HEADER: [&str; 3] = ["row", "column", "true_value"];

pub fn write_ground_truth(path: &Path, truth: &GroundTruthMask, names: &[String]) -> Result<()> {
    let rows = truth
        .cells()
        .iter()
        .map(|c| [c.row.to_string(), names[c.col].clone(), c.value.to_string()]);
    write_atomic(path, &csv_bytes(&GROUND_TRUTH_HEADER, rows)?)
}

/// Reads a ground-truth file written by [`write_ground_truth`] against the
/// masked dataset it belongs to.
pub fn read_ground_truth(path: &Path, masked: &TimeSeriesDataset, descriptor: MaskDescriptor) -> Result<GroundTruthMask> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut cells = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row: usize = rec.get(0).unwrap_or("").parse().context("ground-truth row")?;
        let name = rec.get(1).unwrap_or("");
        let col = masked
            .column_index(name)
            .ok_or_else(|| anyhow!("ground truth names unknown column `{name}`"))?;
        let value: f64 = rec.get(2).unwrap_or("").parse().context("ground-truth value")?;
        if row >= masked.nrows() || !masked.mask().is_missing(row, col) {
            bail!("ground-truth cell ({row}, {name}) is not missing in the masked data");
        }
        cells.push(InjectedCell { row, col, value });
    }
    Ok(GroundTruthMask::from_cells(masked.nrows(), masked.ncols(), cells, descriptor)?)
}

pub const REPORT_HEADER: [&str; 7] = ["variable", "method", "sampler", "metric", "mean", "sd", "runs"];

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let rows = report.rows.iter().map(|r| {
        [
            r.variable.clone(),
            r.method.clone(),
            r.sampler.clone(),
            r.metric.name().to_string(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.runs.to_string(),
        ]
    });
    write_atomic(path, &csv_bytes(&REPORT_HEADER, rows)?)
}

pub const PER_RUN_HEADER: [&str; 6] = ["run", "variable", "method", "sampler", "metric", "value"];

/// One row per (run, variable, method, metric).
pub fn write_per_run(path: &Path, runs: &[(usize, MetricsReport)]) -> Result<()> {
    let rows = runs.iter().flat_map(|(r, rep)| {
        rep.rows.iter().map(move |m| {
            [
                r.to_string(),
                m.variable.clone(),
                m.method.clone(),
                m.sampler.clone(),
                m.metric.name().to_string(),
                m.mean.to_string(),
            ]
        })
    });
    write_atomic(path, &csv_bytes(&PER_RUN_HEADER, rows)?)
}

pub const UNCERTAINTY_HEADER: [&str; 7] = ["row", "column", "predictive_mean", "predictive_sd", "within", "between", "total"];

pub fn write_uncertainty(path: &Path, cells: &[PooledCell], names: &[String]) -> Result<()> {
    let rows = cells.iter().map(|c| {
        [
            c.row.to_string(),
            names[c.col].clone(),
            c.predictive_mean.to_string(),
            c.predictive_sd.to_string(),
            c.within.to_string(),
            c.between.to_string(),
            c.total.to_string(),
        ]
    });
    write_atomic(path, &csv_bytes(&UNCERTAINTY_HEADER, rows)?)
}

/// Post-burn-in trace: `iteration, <params…>, tau2, log_posterior, accepted`.
pub fn write_trace(path: &Path, draws: &PosteriorDraws, params: &[String]) -> Result<()> {
    let mut header: Vec<&str> = vec!["iteration"];
    header.extend(params.iter().map(String::as_str));
    header.extend(["tau2", "log_posterior", "accepted"]);
    let rows = (0..draws.len()).map(|s| {
        let mut row = Vec::with_capacity(header.len());
        row.push((draws.first_iteration + s).to_string());
        row.extend(draws.draw(s).iter().map(f64::to_string));
        row.push(draws.log_post(s).to_string());
        row.push(u8::from(draws.accepted(s)).to_string());
        row
    });
    write_atomic(path, &csv_bytes(&header, rows)?)
}

pub fn write_summary(path: &Path, summary: &DiagnosticsSummary) -> Result<()> {
    let rows = summary.rows.iter().map(|r| r.cells());
    write_atomic(path, &csv_bytes(&SUMMARY_HEADER, rows)?)
}

/// `param, predictor` pairs naming what each coefficient multiplies.
pub fn write_param_labels(path: &Path, params: &[String], predictors: &[String]) -> Result<()> {
    let rows = params.iter().zip(predictors).map(|(p, l)| [p.clone(), l.clone()]);
    write_atomic(path, &csv_bytes(&["param", "predictor"], rows)?)
}
