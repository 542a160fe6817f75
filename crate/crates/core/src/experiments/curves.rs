//! Training curves as plain csv, one file per (policy, metric, split).

use std::fs;
use std::path::{Path, PathBuf};

use super::run::METRICS;
use crate::error::{Error, Result};
use crate::policies::PolicyKind;
use crate::train::{MetricRecord, MetricsLog};

pub const CURVES_DIR: &str = "curves";

type Column = fn(&MetricRecord) -> f64;

const SERIES: [(&str, &str, Column); 4] = [
    ("loss", "train", |r| r.train_loss),
    ("accuracy", "train", |r| r.train_accuracy),
    ("loss", "validation", |r| r.validation_loss),
    ("accuracy", "validation", |r| r.validation_accuracy),
];

/// Writes `curves/{policy}_{metric}_{split}.csv` with columns
/// `cycle,epoch,value` for every policy in `run_dir`, returning the paths.
pub fn export_curves(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let out_dir = run_dir.join(CURVES_DIR);
    let mut written = Vec::new();
    for kind in [PolicyKind::WeightReset, PolicyKind::StructureGrowing] {
        let path = run_dir.join(kind.as_str()).join(METRICS);
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let log = MetricsLog::from_csv(&text).map_err(|e| Error::Export(e.to_string()))?;
        if log.is_empty() {
            return Err(Error::Export(format!("{} has no records", path.display())));
        }
        fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        for (metric, split, column) in SERIES {
            let file = out_dir.join(format!("{}_{metric}_{split}.csv", kind.as_str()));
            let mut w = csv::Writer::from_path(&file).map_err(|e| Error::Export(e.to_string()))?;
            w.write_record(["cycle", "epoch", "value"])
                .map_err(|e| Error::Export(e.to_string()))?;
            for r in log.records() {
                w.write_record([r.cycle.to_string(), r.epoch.to_string(), column(r).to_string()])
                    .map_err(|e| Error::Export(e.to_string()))?;
            }
            w.flush().map_err(|e| Error::io(&file, e))?;
            written.push(file);
        }
    }
    if written.is_empty() {
        return Err(Error::Export(format!("no metrics logs under {}", run_dir.display())));
    }
    Ok(written)
}
