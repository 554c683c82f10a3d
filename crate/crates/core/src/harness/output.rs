//! Result files: per-cell CSV/JSONL, aggregation, floors, conditions and metadata.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::run::{CellRecord, Experiment, FloorRecord, SweepOutput};

/// Per-(method, N) summary over conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub n_particles: usize,
    pub n_conditions: usize,
    pub mean_swd: f64,
    pub se_swd: f64,
    pub mean_mean_swd: f64,
    pub se_mean_swd: f64,
    pub failed_cells: usize,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Average repetitions within a condition, then mean and standard error across
/// conditions. Methods keep their first-appearance order; N ascends.
pub fn aggregate(records: &[CellRecord]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    // (method, N) -> condition -> (swd values, mean_swd values)
    let mut groups: BTreeMap<(usize, usize), BTreeMap<usize, (Vec<f64>, Vec<f64>)>> = BTreeMap::new();
    let mut failed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in records {
        let mi = match order.iter().position(|m| *m == r.method) {
            Some(i) => i,
            None => {
                order.push(&r.method);
                order.len() - 1
            }
        };
        let key = (mi, r.n_particles);
        let slot = groups.entry(key).or_default();
        if r.status == "ok" && r.swd.is_finite() {
            let e = slot.entry(r.condition_id).or_default();
            e.0.push(r.swd);
            e.1.push(r.mean_swd);
        } else {
            *failed.entry(key).or_default() += 1;
        }
    }
    groups
        .into_iter()
        .map(|((mi, n), per_cond)| {
            let avg = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            let swd: Vec<f64> = per_cond.values().map(|(a, _)| avg(a)).collect();
            let msw: Vec<f64> = per_cond.values().map(|(_, b)| avg(b)).collect();
            let (mean_swd, se_swd) = mean_se(&swd);
            let (mean_mean_swd, se_mean_swd) = mean_se(&msw);
            AggregateRow {
                method: order[mi].to_string(),
                n_particles: n,
                n_conditions: swd.len(),
                mean_swd,
                se_swd,
                mean_mean_swd,
                se_mean_swd,
                failed_cells: failed.get(&(mi, n)).copied().unwrap_or(0),
            }
        })
        .collect()
}

fn write_csv<T: Serialize, I: IntoIterator<Item = T>>(path: &Path, header: &[&str], rows: I) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULT_COLUMNS: [&str; 12] = [
    "condition_id",
    "method",
    "n_particles",
    "repetition",
    "swd",
    "mean_swd",
    "ess_final",
    "samples_pooled",
    "wall_ms",
    "seed",
    "config_hash",
    "status",
];

pub fn write_results_csv(path: &Path, records: &[CellRecord]) -> Result<()> {
    write_csv(path, &RESULT_COLUMNS, records)
}

pub fn write_results_jsonl(path: &Path, records: &[CellRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<CellRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "method",
            "n_particles",
            "n_conditions",
            "mean_swd",
            "se_swd",
            "mean_mean_swd",
            "se_mean_swd",
            "failed_cells",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_floor_csv(path: &Path, floors: &[FloorRecord]) -> Result<()> {
    write_csv(path, &["condition_id", "floor_swd", "floor_mean_swd"], floors)
}

pub fn read_floor_csv(path: &Path) -> Result<Vec<FloorRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_conditions_csv(path: &Path, exp: &Experiment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = exp.prior().dim();
    let mut header = vec!["condition_id".to_string()];
    header.extend((0..d).map(|j| format!("x0_{j}")));
    header.extend((0..d).map(|j| format!("y_{j}")));
    w.write_record(&header)?;
    for c in exp.conditions() {
        let mut row = vec![c.id.to_string()];
        row.extend(c.x0.iter().map(|v| format!("{v:e}")));
        row.extend(c.obs.y().iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Run description written next to the results. Contains nothing that varies
/// between runs of the same config.
pub fn metadata(exp: &Experiment) -> serde_json::Value {
    let cfg = exp.config();
    serde_json::json!({
        "experiment": cfg.experiment,
        "config_hash": exp.config_hash(),
        "seed": cfg.seed,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "conditions": cfg.conditions,
        "repetitions": cfg.repetitions,
        "particles": cfg.particles,
        "methods": cfg.methods,
        "schedule": cfg.schedule,
        "metric": cfg.metric,
        "prior": {
            "shared_across_conditions": true,
            "tau": exp.prior().tau(),
            "means": exp.prior().mixture().means(),
        },
        "observation": cfg.observation,
        "pooling": "each run is resampled to equal weights (systematic) and the pooled set is truncated to metric.pooled_target",
        "floor": "max-sliced distance between two independent oracle sets of metric.oracle_samples points",
    })
}

/// Write every result file for a finished sweep into `dir`.
pub fn emit_all(dir: &Path, exp: &Experiment, sweep: &SweepOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results_csv(&dir.join("results.csv"), &sweep.records)?;
    if exp.config().output.jsonl {
        write_results_jsonl(&dir.join("results.jsonl"), &sweep.records)?;
    }
    write_aggregate_csv(File::create(dir.join("aggregate.csv"))?, &aggregate(&sweep.records))?;
    write_floor_csv(&dir.join("floor.csv"), &sweep.floors)?;
    write_conditions_csv(&dir.join("conditions.csv"), exp)?;
    let mut f = File::create(dir.join("metadata.json"))?;
    serde_json::to_writer_pretty(&mut f, &metadata(exp))?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Bytes of a results CSV with the `wall_ms` column blanked, for comparing runs.
pub fn results_without_timing(path: &Path) -> Result<String> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let col = RESULT_COLUMNS.iter().position(|c| *c == "wall_ms").expect("column exists");
    Ok(text
        .lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            if fields.len() > col {
                fields[col] = "";
            }
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n"))
}
