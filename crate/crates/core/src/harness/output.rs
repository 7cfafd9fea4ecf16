//! CSV / JSON writers. Every file is written to a temporary sibling and
//! renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::{HarnessError, ResultBundle};
use crate::affinity::Heatmap;
use crate::metrics::{AblationRow, StepRecord};

pub const CSV_HEADER: &str =
    "frame,method,trial,raw_error,corrected_error,subspace_residual,se_residual";

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const RUN_META_JSON: &str = "run_meta.json";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e| HarnessError::io(path, e);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// One parsed line of the per-frame CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub method: String,
    pub trial: usize,
    pub record: StepRecord,
}

pub fn csv_text(bundle: &ResultBundle) -> String {
    let mut s = String::with_capacity(64 * 1024);
    s.push_str(CSV_HEADER);
    s.push('\n');
    // bundle.methods is already sorted by name, trials by index, records by frame
    for m in &bundle.methods {
        for t in &m.trials {
            for r in &t.records {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.frame,
                    m.method.name(),
                    t.trial,
                    num(r.raw_error),
                    num(r.corrected_error),
                    num(r.subspace_residual),
                    num(r.se_residual)
                );
            }
        }
    }
    s
}

pub fn dump_csv(bundle: &ResultBundle, path: &Path) -> Result<(), HarnessError> {
    write_atomic(path, csv_text(bundle).as_bytes())
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, HarnessError> {
    let bad = |line: usize, msg: String| HarnessError::Config {
        path: format!("csv line {line}"),
        message: msg,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(bad(1, format!("unexpected header {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let lineno = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(lineno, format!("expected 7 fields, got {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(lineno, e.to_string()));
            let real = |s: &str| s.parse::<f64>().map_err(|e| bad(lineno, e.to_string()));
            Ok(CsvRow {
                method: f[1].to_string(),
                trial: int(f[2])?,
                record: StepRecord {
                    frame: int(f[0])?,
                    raw_error: real(f[3])?,
                    corrected_error: real(f[4])?,
                    subspace_residual: real(f[5])?,
                    se_residual: real(f[6])?,
                },
            })
        })
        .collect()
}

/// Canonical JSON payload: keys sorted, no wall-clock data.
pub fn summary_json(bundle: &ResultBundle) -> Value {
    // serde_json's default map is a BTreeMap, so objects come out key-sorted
    let methods: serde_json::Map<String, Value> = bundle
        .methods
        .iter()
        .map(|m| {
            let seeds: Vec<u64> = m.trials.iter().map(|t| t.seed).collect();
            (
                m.method.name().to_string(),
                json!({
                    "summary": m.aggregate.mean,
                    "std": m.aggregate.std,
                    "trial_seeds": seeds,
                }),
            )
        })
        .collect();
    let heatmaps: Vec<Value> = bundle
        .heatmaps
        .iter()
        .map(|(frame, h)| {
            json!({
                "frame": frame,
                "file": heatmap_file_name(*frame),
                "rows": h.rows,
                "cols": h.cols,
                "min": h.min,
                "max": h.max,
            })
        })
        .collect();
    json!({
        "config": bundle.config,
        "methods": methods,
        "heatmaps": heatmaps,
        "provenance": bundle.provenance,
    })
}

pub fn dump_summary_json(bundle: &ResultBundle, path: &Path) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(&summary_json(bundle))
        .expect("summary values are always serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn heatmap_file_name(frame: usize) -> String {
    format!("affinity_f{frame:05}.csv")
}

fn heatmap_text(h: &Heatmap) -> String {
    let mut s = String::new();
    for i in 0..h.rows {
        let row: Vec<String> = h.row(i).iter().map(|&x| num(x)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Parses a heatmap grid back into rows.
pub fn parse_heatmap_csv(text: &str) -> Result<Vec<Vec<f64>>, HarnessError> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.parse::<f64>().map_err(|e| HarnessError::Config {
                        path: "heatmap".into(),
                        message: e.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

/// Writes one grid per frame; returns the paths in frame order.
pub fn dump_heatmaps(
    heatmaps: &BTreeMap<usize, Heatmap>,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    heatmaps
        .iter()
        .map(|(frame, h)| {
            let p = dir.join(heatmap_file_name(*frame));
            write_atomic(&p, heatmap_text(h).as_bytes())?;
            Ok(p)
        })
        .collect()
}

pub fn dump_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<(), HarnessError> {
    let mut s = String::from("k,mean_improvement_ratio,std\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{}",
            r.k,
            num(r.mean_improvement_ratio),
            num(r.std)
        );
    }
    write_atomic(path, s.as_bytes())
}

/// Writes `results.csv`, `summary.json`, heatmaps (if any) and
/// `run_meta.json` into `dir`. Only `run_meta.json` carries a timestamp.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let csv = dir.join(RESULTS_CSV);
    dump_csv(bundle, &csv)?;
    let summary = dir.join(SUMMARY_JSON);
    dump_summary_json(bundle, &summary)?;
    let mut written = vec![csv, summary];
    written.extend(dump_heatmaps(&bundle.heatmaps, dir)?);

    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let meta = json!({
        "tool": bundle.provenance.tool,
        "version": bundle.provenance.version,
        "seed": bundle.provenance.seed,
        "unix_time": secs,
    });
    let meta_path = dir.join(RUN_META_JSON);
    let mut text = serde_json::to_string_pretty(&meta).expect("plain json");
    text.push('\n');
    write_atomic(&meta_path, text.as_bytes())?;
    written.push(meta_path);
    Ok(written)
}
