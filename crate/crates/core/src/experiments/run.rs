//! Executing a configured run and writing its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::compare::{compare, Comparison};
use super::config::{DatasetKind, RunConfig};
use crate::data::{load_cifar10_with, load_mnist, Dataset};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, INIT_SCHEME};
use crate::parallel;
use crate::policies::{
    run_policy, verify_winning_ticket, CycleObserver, CycleReport, NoObserver, PolicyKind, PolicyOutcome, Verification,
};
use crate::rng::{self, streams, SeededRng};

pub const MANIFEST: &str = "manifest.toml";
pub const RUN_INFO: &str = "run_info.json";
pub const COMPARISON: &str = "comparison.json";
pub const METRICS: &str = "metrics.csv";
pub const TIMING: &str = "timing.csv";
pub const CYCLES: &str = "cycles.json";
pub const FINAL_CKPT: &str = "final.ckpt";
pub const CANDIDATE_CKPT: &str = "candidate.ckpt";
pub const VERIFY_METRICS: &str = "verify_metrics.csv";
pub const CONTROL_METRICS: &str = "control_metrics.csv";

/// `cycles.json`: everything about a policy run except per-epoch metrics,
/// which live in the csv files next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclesFile {
    pub policy: PolicyKind,
    pub reference_accuracy: f64,
    pub reports: Vec<CycleReport>,
    pub verification: Option<Verification>,
    pub control_accuracy: Option<f64>,
}

impl CyclesFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            file: path.display().to_string(),
            detail: e.to_string(),
        })
    }
}

pub struct RunSummary {
    pub output_dir: PathBuf,
    pub outcomes: Vec<PolicyOutcome>,
    pub comparison: Option<Comparison>,
}

impl RunSummary {
    /// False if any enabled verification failed.
    pub fn verified(&self) -> bool {
        self.outcomes
            .iter()
            .all(|o| o.verification.as_ref().is_none_or(|v| v.passed))
    }
}

/// Loads the dataset named by `config`, applying its training subset.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let dir = config.resolved_dataset_dir();
    match config.dataset {
        DatasetKind::Mnist => {
            let mut ds = load_mnist(&dir)?;
            ds.subset_train(
                config.subset_fraction,
                &mut SeededRng::substream(config.seed, streams::SUBSET),
            )?;
            Ok(ds)
        }
        DatasetKind::Cifar10 => load_cifar10_with(&dir, config.subset_fraction, config.seed),
    }
}

pub fn run(config: &RunConfig) -> Result<RunSummary> {
    run_observed(config, &mut NoObserver, &mut NoObserver)
}

/// [`run`] with observers for the weight-reset and structure-growing runs.
pub fn run_observed(
    config: &RunConfig,
    reset_observer: &mut (dyn CycleObserver + Send),
    growing_observer: &mut (dyn CycleObserver + Send),
) -> Result<RunSummary> {
    let kinds = config.policy.kinds();
    // Everything that can be rejected is rejected before the data is read.
    let mut plans = Vec::new();
    for &kind in &kinds {
        let arch = config.starting_architecture(kind)?;
        let cfg = config.policy_config(kind);
        cfg.validate()?;
        plans.push((kind, arch, cfg));
    }
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write(&out.join(MANIFEST), config.to_toml().as_bytes())?;

    let started = Instant::now();
    let data = load_dataset(config)?;
    log::info!(
        "{}: {} training / {} validation samples",
        data.name,
        data.len(crate::data::Split::Train),
        data.len(crate::data::Split::Test)
    );

    let execute = |kind: PolicyKind, observer: &mut (dyn CycleObserver + Send)| -> Result<(PolicyOutcome, f64)> {
        let (_, arch, cfg) = plans.iter().find(|p| p.0 == kind).expect("planned");
        let t = Instant::now();
        let outcome = run_policy(kind, arch, cfg, &data, observer)?;
        write_policy(&out, &outcome)?;
        Ok((outcome, t.elapsed().as_secs_f64()))
    };
    let results = match kinds.as_slice() {
        [a, b] => {
            let (ra, rb) = parallel::join(
                config.execution,
                || execute(*a, reset_observer),
                || execute(*b, growing_observer),
            );
            vec![ra?, rb?]
        }
        [PolicyKind::WeightReset] => vec![execute(PolicyKind::WeightReset, reset_observer)?],
        [_] => vec![execute(PolicyKind::StructureGrowing, growing_observer)?],
        _ => unreachable!("one or two policies"),
    };

    let info = json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "rng_algorithm": rng::ALGORITHM,
        "init_scheme": INIT_SCHEME,
        "dataset": data.name,
        "image_shape": data.image_shape,
        "normalization": { "mean": data.normalization.mean, "std": data.normalization.std },
        "train_samples": data.len(crate::data::Split::Train),
        "validation_samples": data.len(crate::data::Split::Test),
        "checksums": data.checksums.iter().map(|(f, h)| json!({ "file": f, "sha256": h })).collect::<Vec<_>>(),
        "policy_seconds": results.iter().map(|(o, s)| (o.policy.as_str().to_string(), json!(s))).collect::<serde_json::Map<_, _>>(),
        "total_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&out.join(RUN_INFO), &info)?;

    let outcomes: Vec<PolicyOutcome> = results.into_iter().map(|(o, _)| o).collect();
    let comparison = if outcomes.len() == 2 {
        let c = compare(&out, &out)?;
        write_json(&out.join(COMPARISON), &serde_json::to_value(&c).expect("serializable"))?;
        Some(c)
    } else {
        None
    };
    Ok(RunSummary {
        output_dir: out,
        outcomes,
        comparison,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write(path, text.as_bytes())
}

fn write_policy(out: &Path, outcome: &PolicyOutcome) -> Result<()> {
    let dir = out.join(outcome.policy.as_str());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join(METRICS), outcome.metrics.to_csv().as_bytes())?;
    write(&dir.join(TIMING), outcome.metrics.timing_csv().as_bytes())?;
    save_checkpoint(&outcome.final_checkpoint, &dir.join(FINAL_CKPT))?;
    save_checkpoint(&outcome.candidate, &dir.join(CANDIDATE_CKPT))?;
    if let Some(v) = &outcome.verification {
        write(&dir.join(VERIFY_METRICS), v.metrics.to_csv().as_bytes())?;
    }
    if let Some(c) = &outcome.control {
        write(&dir.join(CONTROL_METRICS), c.metrics.to_csv().as_bytes())?;
    }
    let file = CyclesFile {
        policy: outcome.policy,
        reference_accuracy: outcome.reference_accuracy,
        reports: outcome.reports.clone(),
        verification: outcome.verification.clone(),
        control_accuracy: outcome.control.as_ref().map(|c| c.retrained_accuracy),
    };
    let mut value = serde_json::to_value(&file).expect("serializable");
    strip_metrics(&mut value);
    write_json(&dir.join(CYCLES), &value)
}

/// Replaces embedded metric logs with empty ones so the file carries no
/// wall-clock data.
fn strip_metrics(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                match (k.as_str(), &*v) {
                    ("metrics", Value::Array(_)) => *v = json!([]),
                    ("metrics", Value::Object(_)) => *v = json!({ "records": [] }),
                    _ => strip_metrics(v),
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(strip_metrics),
        _ => {}
    }
}

/// Re-runs winning-ticket verification on a saved checkpoint. Without an
/// explicit reference accuracy, the `cycles.json` beside the checkpoint
/// supplies it.
pub fn verify_checkpoint(
    config: &RunConfig,
    policy: PolicyKind,
    checkpoint: &Path,
    reference_accuracy: Option<f64>,
) -> Result<Verification> {
    let reference = match reference_accuracy {
        Some(r) => r,
        None => {
            let path = checkpoint.parent().unwrap_or(Path::new(".")).join(CYCLES);
            CyclesFile::read(&path)?.reference_accuracy
        }
    };
    let cfg = config.policy_config(policy);
    cfg.validate()?;
    let candidate = load_checkpoint(checkpoint)?;
    let data = load_dataset(config)?;
    verify_winning_ticket(&candidate, reference, &cfg, &data)
}
