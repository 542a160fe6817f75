//! Side-by-side summary of two run directories.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{CyclesFile, CYCLES, MANIFEST};
use crate::error::{Error, Result};
use crate::policies::PolicyKind;

/// Per-cycle numbers of one policy in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySeries {
    pub run: String,
    pub policy: PolicyKind,
    /// Validation accuracy at the end of each cycle's training.
    pub final_accuracy: Vec<f64>,
    /// Accuracy drop across each reset or growth event, in points.
    pub event_drop_pp: Vec<f64>,
    pub compression_ratio: Vec<f64>,
}

impl PolicySeries {
    pub fn last_accuracy(&self) -> f64 {
        self.final_accuracy.last().copied().unwrap_or(0.0)
    }
}

/// Per-cycle accuracy of run b minus run a for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDifference {
    pub policy: PolicyKind,
    pub accuracy_delta: Vec<f64>,
    pub event_drop_delta_pp: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leader {
    WeightReset,
    StructureGrowing,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyVerdict {
    pub higher_final_accuracy: Leader,
    pub weight_reset_final: f64,
    pub structure_growing_final: f64,
    /// Growing minus reset, in points.
    pub gap_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset: String,
    pub seed: u64,
    pub series: Vec<PolicySeries>,
    pub differences: Vec<SeriesDifference>,
    /// Present when both policies appear across the two runs.
    pub verdict: Option<PolicyVerdict>,
}

fn read_series(dir: &Path, label: &str) -> Result<Vec<PolicySeries>> {
    let mut out = Vec::new();
    for kind in [PolicyKind::WeightReset, PolicyKind::StructureGrowing] {
        let path = dir.join(kind.as_str()).join(CYCLES);
        if !path.exists() {
            continue;
        }
        let file = CyclesFile::read(&path)?;
        out.push(PolicySeries {
            run: label.to_string(),
            policy: kind,
            final_accuracy: file.reports.iter().map(|r| r.pre_prune_accuracy).collect(),
            event_drop_pp: file.reports.iter().map(|r| r.event_drop_pp).collect(),
            compression_ratio: file.reports.iter().map(|r| r.compression_ratio).collect(),
        });
    }
    if out.is_empty() {
        return Err(Error::Comparison(format!("{} holds no policy results", dir.display())));
    }
    Ok(out)
}

fn delta(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| y - x).collect()
}

pub fn compare(run_a: &Path, run_b: &Path) -> Result<Comparison> {
    let manifest = |dir: &Path| {
        RunConfig::from_file(&dir.join(MANIFEST), &[]).map_err(|e| Error::Comparison(format!("{}: {e}", dir.display())))
    };
    let (ca, cb) = (manifest(run_a)?, manifest(run_b)?);
    if ca.preset != cb.preset || ca.dataset != cb.dataset {
        return Err(Error::Comparison(format!(
            "presets differ: {:?}/{:?} vs {:?}/{:?}",
            ca.preset, ca.dataset, cb.preset, cb.dataset
        )));
    }
    if ca.seed != cb.seed {
        return Err(Error::Comparison(format!("seeds differ: {} vs {}", ca.seed, cb.seed)));
    }
    let sa = read_series(run_a, &run_a.display().to_string())?;
    let sb = read_series(run_b, &run_b.display().to_string())?;

    let differences = sa
        .iter()
        .filter_map(|a| {
            let b = sb.iter().find(|b| b.policy == a.policy)?;
            Some(SeriesDifference {
                policy: a.policy,
                accuracy_delta: delta(&a.final_accuracy, &b.final_accuracy),
                event_drop_delta_pp: delta(&a.event_drop_pp, &b.event_drop_pp),
            })
        })
        .collect();

    let find = |k: PolicyKind| sa.iter().chain(&sb).find(|s| s.policy == k);
    let verdict = match (find(PolicyKind::WeightReset), find(PolicyKind::StructureGrowing)) {
        (Some(r), Some(g)) => {
            let (rf, gf) = (r.last_accuracy(), g.last_accuracy());
            let higher = if gf > rf {
                Leader::StructureGrowing
            } else if rf > gf {
                Leader::WeightReset
            } else {
                Leader::Tie
            };
            Some(PolicyVerdict {
                higher_final_accuracy: higher,
                weight_reset_final: rf,
                structure_growing_final: gf,
                gap_pp: (gf - rf) * 100.0,
            })
        }
        _ => None,
    };

    let mut series = sa;
    if run_a != run_b {
        series.extend(sb);
    }
    Ok(Comparison {
        dataset: format!("{:?}", ca.dataset).to_lowercase(),
        seed: ca.seed,
        series,
        differences,
        verdict,
    })
}
