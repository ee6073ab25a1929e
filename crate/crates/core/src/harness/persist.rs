//! On-disk run records and their aggregates.
//!
//! Each run writes three files under `<out>/<objective>_<D>D/<method>/`:
//! `seed_<s>.csv` (`step, x0.., y, incumbent, ni`), `seed_<s>.timing.csv`
//! (`step, seconds`) and `seed_<s>.json` (manifest). Wall times live in the
//! sidecar so that the main CSV is bit-identical across repeated runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::metrics::{mean_std, quantile, run_mean_ni};
use super::{Method, RunConfig, RunRecord, StepRecord};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    objective: String,
    dim: usize,
    method: Method,
    seed: u64,
    n0: usize,
    budget: usize,
    config_hash: String,
    ni_degenerate: bool,
    csv: String,
    timing: String,
    config: Option<RunConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordPaths {
    pub csv: PathBuf,
    pub timing: PathBuf,
    pub manifest: PathBuf,
}

/// `<out>/<objective>_<D>D/<method>`.
pub fn run_dir(out: &Path, objective: &str, dim: usize, method: &Method) -> PathBuf {
    out.join(format!("{objective}_{dim}D")).join(method.to_string())
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Writes the run's CSV, timing sidecar and manifest under `out`.
pub fn write_record(record: &RunRecord, config: Option<&RunConfig>, out: &Path) -> Result<RecordPaths> {
    let dir = run_dir(out, &record.objective, record.dim, &record.method);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let stem = format!("seed_{}", record.seed);
    let paths = RecordPaths {
        csv: dir.join(format!("{stem}.csv")),
        timing: dir.join(format!("{stem}.timing.csv")),
        manifest: dir.join(format!("{stem}.json")),
    };

    let mut w = csv::Writer::from_path(&paths.csv).map_err(|e| csv_err(&paths.csv, e))?;
    let mut header = vec!["step".to_string()];
    header.extend((0..record.dim).map(|i| format!("x{i}")));
    header.extend(["y", "incumbent", "ni"].map(String::from));
    w.write_record(&header).map_err(|e| csv_err(&paths.csv, e))?;
    for (i, s) in record.steps.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.x.iter().map(|v| num(*v)));
        row.push(num(s.y));
        row.push(num(s.incumbent));
        row.push(s.ni.map(num).unwrap_or_default());
        w.write_record(&row).map_err(|e| csv_err(&paths.csv, e))?;
    }
    w.flush().map_err(|e| Error::io(&paths.csv, e))?;

    let mut w = csv::Writer::from_path(&paths.timing).map_err(|e| csv_err(&paths.timing, e))?;
    w.write_record(["step", "seconds"]).map_err(|e| csv_err(&paths.timing, e))?;
    for (i, s) in record.steps.iter().enumerate() {
        w.write_record([i.to_string(), num(s.seconds)])
            .map_err(|e| csv_err(&paths.timing, e))?;
    }
    w.flush().map_err(|e| Error::io(&paths.timing, e))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        objective: record.objective.clone(),
        dim: record.dim,
        method: record.method,
        seed: record.seed,
        n0: record.n0,
        budget: record.budget(),
        config_hash: record.config_hash.clone(),
        ni_degenerate: record.ni_degenerate,
        csv: file_name(&paths.csv),
        timing: file_name(&paths.timing),
        config: config.cloned(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&paths.manifest, json).map_err(|e| Error::io(&paths.manifest, e))?;
    Ok(paths)
}

fn file_name(p: &Path) -> String {
    p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::format(path, format!("not a number: `{s}`")))
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != width {
            return Err(Error::format(path, format!("expected {width} columns, found {}", rec.len())));
        }
        rows.push(rec);
    }
    Ok(rows)
}

/// Reads a run back from its manifest.
pub fn load_record(manifest_path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(manifest_path, e))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::format(manifest_path, format!("unsupported format version {}", m.format_version)));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let csv_path = dir.join(&m.csv);
    let timing_path = dir.join(&m.timing);
    let rows = read_rows(&csv_path, m.dim + 4)?;
    let times = read_rows(&timing_path, 2)?;
    if rows.len() != m.n0 + m.budget || times.len() != rows.len() {
        return Err(Error::format(&csv_path, "row count does not match the manifest"));
    }
    let mut steps = Vec::with_capacity(rows.len());
    for (row, t) in rows.iter().zip(&times) {
        let x = (1..=m.dim)
            .map(|i| parse_f64(&csv_path, &row[i]))
            .collect::<Result<Vec<_>>>()?;
        let ni = match &row[m.dim + 3] {
            "" => None,
            s => Some(parse_f64(&csv_path, s)?),
        };
        steps.push(StepRecord {
            x,
            y: parse_f64(&csv_path, &row[m.dim + 1])?,
            incumbent: parse_f64(&csv_path, &row[m.dim + 2])?,
            ni,
            seconds: parse_f64(&timing_path, &t[1])?,
        });
    }
    Ok(RunRecord {
        objective: m.objective,
        dim: m.dim,
        method: m.method,
        seed: m.seed,
        config_hash: m.config_hash,
        n0: m.n0,
        steps,
        ni_degenerate: m.ni_degenerate,
    })
}

/// Loads every run found below `dir`, ordered by path.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut manifests = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        let name = entry.file_name().to_string_lossy();
        if entry.file_type().is_file() && name.starts_with("seed_") && name.ends_with(".json") {
            manifests.push(entry.into_path());
        }
    }
    manifests.iter().map(|p| load_record(p)).collect()
}

type GroupKey = (String, usize, String);

fn group(records: &[RunRecord]) -> BTreeMap<GroupKey, Vec<(u64, Vec<f64>)>> {
    let mut groups: BTreeMap<GroupKey, Vec<(u64, Vec<f64>)>> = BTreeMap::new();
    for r in records {
        let Some(ni) = r.ni() else {
            log::warn!("{} {} seed {}: no known optimum, skipped", r.objective, r.method, r.seed);
            continue;
        };
        groups
            .entry((r.objective.clone(), r.dim, r.method.to_string()))
            .or_default()
            .push((r.seed, ni));
    }
    groups
}

/// Mean NI over seeds for one (objective, dimension, method).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub objective: String,
    pub dim: usize,
    pub method: String,
    pub runs: usize,
    pub mean_ni: f64,
    /// Sample standard deviation of the per-run mean NI.
    pub std_ni: f64,
}

pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for ((objective, dim, method), runs) in group(records) {
        let budget = runs[0].1.len();
        if runs.iter().any(|r| r.1.len() != budget) {
            return Err(Error::Precondition(format!(
                "{objective} {dim}D {method}: runs have different budgets"
            )));
        }
        let per_run = runs
            .iter()
            .map(|r| run_mean_ni(&r.1))
            .collect::<Result<Vec<_>>>()?;
        let (mean_ni, std_ni) = mean_std(&per_run);
        out.push(SummaryRow {
            objective,
            dim,
            method,
            runs: per_run.len(),
            mean_ni,
            std_ni,
        });
    }
    Ok(out)
}

/// Per-step NI statistics across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub objective: String,
    pub dim: usize,
    pub method: String,
    pub step: usize,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn plot_data(records: &[RunRecord]) -> Vec<PlotRow> {
    let mut out = Vec::new();
    for ((objective, dim, method), runs) in group(records) {
        let steps = runs.iter().map(|r| r.1.len()).min().unwrap_or(0);
        for step in 0..steps {
            let v: Vec<f64> = runs.iter().map(|r| r.1[step]).collect();
            let (mean, std) = mean_std(&v);
            out.push(PlotRow {
                objective: objective.clone(),
                dim,
                method: method.clone(),
                step,
                runs: v.len(),
                mean,
                std,
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
            });
        }
    }
    out
}

/// Writes rows with a header through serde.
pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Methods as rows, `<objective> <D>D` as columns, cells `mean ± std`.
pub fn write_table(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut columns: Vec<(String, usize)> = rows.iter().map(|r| (r.objective.clone(), r.dim)).collect();
    columns.sort();
    columns.dedup();
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort();
    methods.dedup();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["method".to_string()];
    header.extend(columns.iter().map(|(o, d)| format!("{o} {d}D")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for m in methods {
        let mut line = vec![m.to_string()];
        for (o, d) in &columns {
            let cell = rows
                .iter()
                .find(|r| r.method == m && &r.objective == o && r.dim == *d)
                .map(|r| format!("{:.3} ± {:.3}", r.mean_ni, r.std_ni))
                .unwrap_or_default();
            line.push(cell);
        }
        w.write_record(&line).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
