//! The weight-reset and structure-growing policies, and winning-ticket
//! verification.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{
    build_network, grow_network, is_spanning_subnetwork, Architecture, Checkpoint, GrowthOptions, LayerSpec,
};
use crate::optim::AdamConfig;
use crate::pruner::{apply_masks, level_prune, PruneSpec};
use crate::rng::{streams, RngState, SeededRng};
use crate::train::{evaluate, evaluate_with_logits, train_cycle, MetricRecord, MetricsLog, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    WeightReset,
    StructureGrowing,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::WeightReset => "weight_reset",
            PolicyKind::StructureGrowing => "structure_growing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub seed: u64,
    /// `j`, the number of train/prune cycles.
    pub cycles: usize,
    /// Per-layer sparsity applied to every prunable layer each cycle.
    pub sparsity: f64,
    pub train: TrainConfig,
    pub adam: AdamConfig,
    /// Layers inserted by each growth step, placed before the output head.
    pub growth_unit: Vec<LayerSpec>,
    pub growth: GrowthOptions,
    /// `r*_comp`; `None` derives it from the prune arithmetic.
    pub target_compression: Option<f64>,
    /// `eps_acc`, in percentage points.
    pub accuracy_tolerance_pp: f64,
    pub verify: bool,
    /// Also train a randomly re-initialized network with the ticket's masks.
    pub control: bool,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.cycles == 0 {
            errors.push("cycles must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            errors.push(format!("sparsity must lie in [0, 1), got {}", self.sparsity));
        }
        if self.accuracy_tolerance_pp.is_nan() || self.accuracy_tolerance_pp <= 0.0 {
            errors.push(format!(
                "accuracy tolerance must be positive, got {}",
                self.accuracy_tolerance_pp
            ));
        }
        if self.train.epochs == 0 {
            errors.push("epochs per cycle must be at least 1".to_string());
        }
        if self.train.batch_size == 0 {
            errors.push("batch size must be at least 1".to_string());
        }
        if let Some(r) = self.target_compression {
            if !(r > 0.0 && r <= 1.0) {
                errors.push(format!("target compression must lie in (0, 1], got {r}"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of one train/prune/event cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    /// Validation accuracy of the trained network before pruning.
    pub pre_prune_accuracy: f64,
    /// Validation accuracy after pruning, before the reset or growth event.
    pub post_prune_accuracy: f64,
    /// Validation accuracy right after the reset or growth event.
    pub post_event_accuracy: f64,
    /// `post_prune_accuracy - post_event_accuracy`, in percentage points.
    pub event_drop_pp: f64,
    pub compression_ratio: f64,
    pub surviving_parameters: usize,
    pub dense_parameters: usize,
    pub pruned_layers: Vec<usize>,
    pub hidden_units: usize,
    pub spanning_ok: bool,
    /// Largest validation-logit change across a growth step.
    pub growth_max_logit_change: Option<f64>,
    /// Present iff verification is enabled; `Skipped` except on the cycle
    /// that produced the verified candidate.
    pub verdict: Option<Verdict>,
    pub metrics: Vec<MetricRecord>,
    pub shuffle_state: RngState,
}

/// Retraining result of a winning-ticket check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub compression_ratio: f64,
    pub target_compression: f64,
    pub compression_ok: bool,
    pub reference_accuracy: f64,
    pub retrained_accuracy: f64,
    pub tolerance_pp: f64,
    pub accuracy_ok: bool,
    pub passed: bool,
    pub metrics: MetricsLog,
}

/// The same masks on freshly drawn weights, trained with the same budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    pub retrained_accuracy: f64,
    pub metrics: MetricsLog,
}

#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub policy: PolicyKind,
    pub reports: Vec<CycleReport>,
    pub metrics: MetricsLog,
    pub final_checkpoint: Checkpoint,
    /// The network offered as the winning ticket.
    pub candidate: Checkpoint,
    /// `Acc*`, the accuracy the candidate is verified against.
    pub reference_accuracy: f64,
    pub verification: Option<Verification>,
    pub control: Option<ControlResult>,
}

/// Hooks for inspecting intermediate networks; all methods default to no-ops.
pub trait CycleObserver {
    /// `parent` is the trained network, `pruned` the same after pruning.
    fn after_prune(&mut self, _cycle: usize, _parent: &Checkpoint, _pruned: &Checkpoint) {}
    /// `before` is the pruned network, `after` the rewound or grown one.
    fn after_event(&mut self, _cycle: usize, _before: &Checkpoint, _after: &Checkpoint) {}
}

pub struct NoObserver;

impl CycleObserver for NoObserver {}

/// Expected `r*_comp` after pruning every prunable layer of `arch` at
/// `sparsity`: `(kept scoped weights + everything else) / dense count`.
pub fn derived_target_compression(arch: &Architecture, sparsity: f64) -> f64 {
    let spec = PruneSpec {
        sparsity,
        scope: Vec::new(),
    };
    let dense = arch.parameter_count();
    let removed: usize = arch
        .layers
        .iter()
        .filter(|l| l.prunable)
        .flat_map(|l| {
            l.param_shapes()
                .into_iter()
                .enumerate()
                .filter(|&(j, _)| l.is_masked(j))
                .map(|(_, s)| spec.removal_count(s.iter().product()))
                .collect::<Vec<_>>()
        })
        .sum();
    (dense - removed) as f64 / dense as f64
}

struct Pruned {
    ckpt: Checkpoint,
    scope: Vec<usize>,
    spanning_ok: bool,
}

fn prune_step(ckpt: &Checkpoint, cfg: &PolicyConfig) -> Result<Pruned> {
    let spec = PruneSpec::hidden_layers(cfg.sparsity, &ckpt.architecture);
    let mut pruned = ckpt.clone();
    if !spec.scope.is_empty() {
        pruned.masks = level_prune(
            cfg.train.execution,
            &pruned.architecture,
            &mut pruned.weights,
            &ckpt.masks,
            &spec,
        )?;
    }
    let spanning_ok = is_spanning_subnetwork((&pruned.architecture, &pruned.masks), (&ckpt.architecture, &ckpt.masks));
    Ok(Pruned {
        ckpt: pruned,
        scope: spec.scope,
        spanning_ok,
    })
}

fn last_accuracy(log: &MetricsLog) -> f64 {
    log.last().map_or(0.0, |r| r.validation_accuracy)
}

/// Algorithm 1: train, prune, rewind surviving weights to `omega^0`.
pub fn run_weight_reset_policy(
    arch: &Architecture,
    cfg: &PolicyConfig,
    data: &Dataset,
    observer: &mut dyn CycleObserver,
) -> Result<PolicyOutcome> {
    cfg.validate()?;
    let mut ckpt = Checkpoint::initialize(arch, cfg.seed, cfg.adam)?;
    let mut shuffle = SeededRng::from_state(ckpt.rng);
    let mut metrics = MetricsLog::new();
    let mut reports = Vec::new();
    let mut reference_accuracy = 0.0;

    for cycle in 1..=cfg.cycles {
        let mut step = || -> Result<CycleReport> {
            ckpt.cycle = cycle;
            let log = train_cycle(&mut ckpt, data, &cfg.train, &mut shuffle, cycle)?;
            let pre = last_accuracy(&log);
            if cycle == 1 {
                reference_accuracy = pre;
            }
            let pruned = prune_step(&ckpt, cfg)?;
            observer.after_prune(cycle, &ckpt, &pruned.ckpt);
            let post_prune = evaluate(&pruned.ckpt, data, Split::Test, cfg.train.execution)?;

            let mut rewound = pruned.ckpt.clone();
            rewound.weights = ckpt
                .initial_weights
                .clone()
                .ok_or_else(|| Error::Precondition("weight reset needs the omega^0 record".into()))?;
            apply_masks(&mut rewound.weights, &rewound.masks)?;
            rewound.optimizer.reset();
            observer.after_event(cycle, &pruned.ckpt, &rewound);
            let post_event = evaluate(&rewound, data, Split::Test, cfg.train.execution)?;

            let report = CycleReport {
                cycle,
                pre_prune_accuracy: pre,
                post_prune_accuracy: post_prune.accuracy,
                post_event_accuracy: post_event.accuracy,
                event_drop_pp: (post_prune.accuracy - post_event.accuracy) * 100.0,
                compression_ratio: rewound.compression_ratio(),
                surviving_parameters: rewound.surviving_parameters(),
                dense_parameters: rewound.dense_parameter_count(),
                pruned_layers: pruned.scope,
                hidden_units: rewound.architecture.hidden_units(),
                spanning_ok: pruned.spanning_ok,
                growth_max_logit_change: None,
                verdict: cfg.verify.then_some(Verdict::Skipped),
                metrics: log.records().to_vec(),
                shuffle_state: shuffle.state(),
            };
            metrics.extend(&log)?;
            ckpt = rewound;
            Ok(report)
        };
        reports.push(step().map_err(|e| e.in_cycle(cycle))?);
        log_cycle(PolicyKind::WeightReset, reports.last().expect("just pushed"));
    }

    let candidate = ckpt.clone();
    finish(
        PolicyKind::WeightReset,
        cfg,
        data,
        reports,
        metrics,
        ckpt,
        candidate,
        reference_accuracy,
    )
}

/// Algorithm 2: train, prune, insert an identity-initialized unit, and keep
/// training without any reset.
pub fn run_structure_growing_policy(
    arch: &Architecture,
    cfg: &PolicyConfig,
    data: &Dataset,
    observer: &mut dyn CycleObserver,
) -> Result<PolicyOutcome> {
    cfg.validate()?;
    if cfg.growth_unit.is_empty() {
        return Err(Error::Config(vec!["structure growing needs a growth unit".into()]));
    }
    let mut ckpt = Checkpoint::initialize(arch, cfg.seed, cfg.adam)?;
    let mut shuffle = SeededRng::from_state(ckpt.rng);
    let mut growth_rng = SeededRng::substream(cfg.seed, streams::GROWTH);
    let mut metrics = MetricsLog::new();
    let mut reports = Vec::new();
    let mut candidate = None;
    let mut reference_accuracy = 0.0;

    for cycle in 1..=cfg.cycles {
        let mut step = || -> Result<CycleReport> {
            ckpt.cycle = cycle;
            let log = train_cycle(&mut ckpt, data, &cfg.train, &mut shuffle, cycle)?;
            let pre = last_accuracy(&log);
            let pruned = prune_step(&ckpt, cfg)?;
            observer.after_prune(cycle, &ckpt, &pruned.ckpt);
            let (post_prune, logits_before) =
                evaluate_with_logits(&pruned.ckpt, data, Split::Test, cfg.train.execution)?;

            let position = pruned.ckpt.architecture.head_index();
            let grown = grow_network(
                &pruned.ckpt,
                &cfg.growth_unit,
                position,
                cfg.growth,
                &mut growth_rng,
                cycle,
            )?;
            observer.after_event(cycle, &pruned.ckpt, &grown);
            let (post_event, logits_after) = evaluate_with_logits(&grown, data, Split::Test, cfg.train.execution)?;
            let max_change = logits_before
                .iter()
                .zip(&logits_after)
                .map(|(a, b)| f64::from((a - b).abs()))
                .fold(0.0, f64::max);

            let report = CycleReport {
                cycle,
                pre_prune_accuracy: pre,
                post_prune_accuracy: post_prune.accuracy,
                post_event_accuracy: post_event.accuracy,
                event_drop_pp: (post_prune.accuracy - post_event.accuracy) * 100.0,
                compression_ratio: pruned.ckpt.compression_ratio(),
                surviving_parameters: pruned.ckpt.surviving_parameters(),
                dense_parameters: pruned.ckpt.dense_parameter_count(),
                pruned_layers: pruned.scope,
                hidden_units: grown.architecture.hidden_units(),
                spanning_ok: pruned.spanning_ok,
                growth_max_logit_change: Some(max_change),
                verdict: cfg.verify.then_some(Verdict::Skipped),
                metrics: log.records().to_vec(),
                shuffle_state: shuffle.state(),
            };
            metrics.extend(&log)?;
            if cycle == cfg.cycles {
                reference_accuracy = pre;
                candidate = Some(pruned.ckpt);
            }
            ckpt = grown;
            Ok(report)
        };
        reports.push(step().map_err(|e| e.in_cycle(cycle))?);
        log_cycle(PolicyKind::StructureGrowing, reports.last().expect("just pushed"));
    }

    let candidate = candidate.expect("at least one cycle ran");
    finish(
        PolicyKind::StructureGrowing,
        cfg,
        data,
        reports,
        metrics,
        ckpt,
        candidate,
        reference_accuracy,
    )
}

pub fn run_policy(
    kind: PolicyKind,
    arch: &Architecture,
    cfg: &PolicyConfig,
    data: &Dataset,
    observer: &mut dyn CycleObserver,
) -> Result<PolicyOutcome> {
    match kind {
        PolicyKind::WeightReset => run_weight_reset_policy(arch, cfg, data, observer),
        PolicyKind::StructureGrowing => run_structure_growing_policy(arch, cfg, data, observer),
    }
}

fn log_cycle(kind: PolicyKind, r: &CycleReport) {
    log::info!(
        "{} cycle {}: pre-prune {:.4}, post-prune {:.4}, post-event {:.4}, ratio {:.4}, hidden units {}",
        kind.as_str(),
        r.cycle,
        r.pre_prune_accuracy,
        r.post_prune_accuracy,
        r.post_event_accuracy,
        r.compression_ratio,
        r.hidden_units
    );
}

#[allow(clippy::too_many_arguments)]
fn finish(
    policy: PolicyKind,
    cfg: &PolicyConfig,
    data: &Dataset,
    mut reports: Vec<CycleReport>,
    metrics: MetricsLog,
    final_checkpoint: Checkpoint,
    candidate: Checkpoint,
    reference_accuracy: f64,
) -> Result<PolicyOutcome> {
    let verification = if cfg.verify {
        let v = verify_winning_ticket(&candidate, reference_accuracy, cfg, data)?;
        if let Some(last) = reports.last_mut() {
            last.verdict = Some(if v.passed { Verdict::Pass } else { Verdict::Fail });
        }
        Some(v)
    } else {
        None
    };
    let control = if cfg.control {
        Some(random_reinit_control(&candidate, cfg, data)?)
    } else {
        None
    };
    Ok(PolicyOutcome {
        policy,
        reports,
        metrics,
        final_checkpoint,
        candidate,
        reference_accuracy,
        verification,
        control,
    })
}

/// Checks both winning-ticket conditions: compression ratio at most
/// `r*_comp`, and accuracy after retraining within `eps_acc` of `Acc*`.
/// Retraining happens on a copy with fresh optimizer state and the
/// `verify` shuffle stream; `candidate` is never modified.
pub fn verify_winning_ticket(
    candidate: &Checkpoint,
    reference_accuracy: f64,
    cfg: &PolicyConfig,
    data: &Dataset,
) -> Result<Verification> {
    if candidate.initial_weights.is_none() {
        return Err(Error::Verification("candidate has no omega^0 record".into()));
    }
    let target = cfg
        .target_compression
        .unwrap_or_else(|| derived_target_compression(&candidate.architecture, cfg.sparsity));
    let ratio = candidate.compression_ratio();

    let mut trial = candidate.clone();
    trial.optimizer.reset();
    let mut rng = SeededRng::substream(cfg.seed, streams::VERIFY);
    let log = train_cycle(&mut trial, data, &cfg.train, &mut rng, candidate.cycle)?;
    let retrained = last_accuracy(&log);
    Ok(judge(
        ratio,
        target,
        reference_accuracy,
        retrained,
        cfg.accuracy_tolerance_pp,
        log,
    ))
}

/// Both conditions, without any training.
pub fn judge(
    compression_ratio: f64,
    target_compression: f64,
    reference_accuracy: f64,
    retrained_accuracy: f64,
    tolerance_pp: f64,
    metrics: MetricsLog,
) -> Verification {
    // A small slack absorbs float rounding in the ratio arithmetic.
    let compression_ok = compression_ratio <= target_compression + 1e-12;
    let accuracy_ok = retrained_accuracy >= reference_accuracy - tolerance_pp / 100.0;
    Verification {
        compression_ratio,
        target_compression,
        compression_ok,
        reference_accuracy,
        retrained_accuracy,
        tolerance_pp,
        accuracy_ok,
        passed: compression_ok && accuracy_ok,
        metrics,
    }
}

/// Trains freshly drawn weights (from the `control` substream) under the
/// candidate's masks, with the same budget and shuffle stream as
/// verification.
pub fn random_reinit_control(candidate: &Checkpoint, cfg: &PolicyConfig, data: &Dataset) -> Result<ControlResult> {
    let mut control = candidate.clone();
    let (weights, _) = build_network(
        &control.architecture,
        &mut SeededRng::substream(cfg.seed, streams::CONTROL),
    )?;
    control.weights = weights;
    apply_masks(&mut control.weights, &control.masks)?;
    control.initial_weights = Some(control.weights.clone());
    control.optimizer.reset();
    let mut rng = SeededRng::substream(cfg.seed, streams::VERIFY);
    let log = train_cycle(&mut control, data, &cfg.train, &mut rng, candidate.cycle)?;
    Ok(ControlResult {
        retrained_accuracy: last_accuracy(&log),
        metrics: log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Normalization;
    use crate::model::{mnist_dense, mnist_hidden_unit};

    /// 16-pixel images whose class is the brightest quadrant.
    pub(crate) fn quadrant_data(n: usize, seed: u64) -> Dataset {
        let mut rng = SeededRng::new(seed);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let label = rng.below(4) as u8;
            for p in 0..16 {
                let bright = p / 4 == usize::from(label);
                images.push(if bright {
                    150 + rng.below(100) as u8
                } else {
                    rng.below(120) as u8
                });
            }
            labels.push(label);
        }
        let norm = Normalization {
            mean: vec![0.3],
            std: vec![0.3],
        };
        Dataset::new(
            "quadrants",
            vec![16],
            4,
            norm,
            (images.clone(), labels.clone()),
            (images, labels),
        )
        .unwrap()
    }

    fn tiny_arch(hidden: usize) -> Architecture {
        let mut layers = vec![LayerSpec::linear(16, 8, false), LayerSpec::relu()];
        for _ in 0..hidden {
            layers.extend(mnist_hidden_unit(8));
        }
        layers.push(LayerSpec::output(8, 4));
        Architecture::new(vec![16], 4, layers).unwrap()
    }

    fn config(cycles: usize, sparsity: f64) -> PolicyConfig {
        PolicyConfig {
            seed: 42,
            cycles,
            sparsity,
            train: TrainConfig::new(2, 16),
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            growth_unit: mnist_hidden_unit(8),
            growth: GrowthOptions::default(),
            target_compression: None,
            accuracy_tolerance_pp: 1.0,
            verify: false,
            control: false,
        }
    }

    #[derive(Default)]
    struct Recorder {
        resets_exact: Vec<bool>,
    }

    impl CycleObserver for Recorder {
        fn after_event(&mut self, _: usize, _: &Checkpoint, after: &Checkpoint) {
            let w0 = after.initial_weights.as_ref().unwrap();
            let ok = after.weights.layers.iter().enumerate().all(|(i, l)| {
                l.iter().enumerate().all(|(j, t)| {
                    let m = after.masks.layers[i][j].as_ref();
                    t.data().iter().enumerate().all(|(k, &v)| match m {
                        Some(m) if m.data()[k] == 0.0 => v.to_bits() == 0,
                        _ => v.to_bits() == w0.layers[i][j].data()[k].to_bits(),
                    })
                })
            });
            self.resets_exact.push(ok);
        }
    }

    #[test]
    fn reset_restores_initial_values() {
        let data = quadrant_data(64, 1);
        let mut rec = Recorder::default();
        let out = run_weight_reset_policy(&tiny_arch(2), &config(3, 0.5), &data, &mut rec).unwrap();
        assert_eq!(rec.resets_exact, [true, true, true]);
        assert!(out.reports.iter().all(|r| r.spanning_ok));
        // Two 8x8 layers lose 32 weights each.
        let dense = tiny_arch(2).parameter_count();
        assert_eq!(out.reports[0].surviving_parameters, dense - 64);
    }

    #[test]
    fn zero_sparsity_single_cycle_is_plain_training() {
        let data = quadrant_data(64, 2);
        let cfg = config(1, 0.0);
        let out = run_weight_reset_policy(&tiny_arch(1), &cfg, &data, &mut NoObserver).unwrap();
        let mut plain = Checkpoint::initialize(&tiny_arch(1), 42, cfg.adam).unwrap();
        let mut rng = SeededRng::from_state(plain.rng);
        let log = train_cycle(&mut plain, &data, &cfg.train, &mut rng, 1).unwrap();
        assert_eq!(out.metrics.to_csv(), log.to_csv());
    }

    #[test]
    fn growing_adds_one_unit_per_cycle_and_preserves_function() {
        let data = quadrant_data(64, 3);
        let out = run_structure_growing_policy(&tiny_arch(0), &config(3, 0.5), &data, &mut NoObserver).unwrap();
        assert_eq!(out.final_checkpoint.architecture.hidden_units(), 3);
        for r in &out.reports {
            assert!(r.growth_max_logit_change.unwrap() < 1e-5);
            assert!(r.event_drop_pp.abs() < 0.1);
            assert!(r.spanning_ok);
        }
        assert!(out.reports[0].pruned_layers.is_empty());
        assert_eq!(out.reports[2].pruned_layers.len(), 2);
    }

    #[test]
    fn both_policies_share_shuffle_stream() {
        let data = quadrant_data(64, 4);
        let cfg = config(2, 0.5);
        let a = run_weight_reset_policy(&tiny_arch(2), &cfg, &data, &mut NoObserver).unwrap();
        let b = run_structure_growing_policy(&tiny_arch(0), &cfg, &data, &mut NoObserver).unwrap();
        let states = |o: &PolicyOutcome| o.reports.iter().map(|r| r.shuffle_state).collect::<Vec<_>>();
        assert_eq!(states(&a), states(&b));
    }

    #[test]
    fn judge_conditions() {
        let v = judge(0.20, 0.25, 0.97, 0.965, 1.0, MetricsLog::new());
        assert!(v.passed);
        let v = judge(0.30, 0.25, 0.97, 0.99, 1.0, MetricsLog::new());
        assert!(!v.passed && !v.compression_ok && v.accuracy_ok);
    }

    #[test]
    fn verification_needs_initial_record() {
        let data = quadrant_data(16, 5);
        let mut ckpt = Checkpoint::initialize(&tiny_arch(1), 1, AdamConfig::default()).unwrap();
        ckpt.initial_weights = None;
        assert!(matches!(
            verify_winning_ticket(&ckpt, 0.5, &config(1, 0.5), &data),
            Err(Error::Verification(_))
        ));
    }

    #[test]
    fn verification_does_not_mutate_candidate() {
        let data = quadrant_data(32, 6);
        let ckpt = Checkpoint::initialize(&tiny_arch(1), 1, AdamConfig::default()).unwrap();
        let before = ckpt.to_bytes();
        verify_winning_ticket(&ckpt, 0.5, &config(1, 0.5), &data).unwrap();
        assert_eq!(ckpt.to_bytes(), before);
    }

    #[test]
    fn derived_target_matches_counts() {
        let arch = mnist_dense(5, 128);
        let removed = 5 * (16_384 * 95 / 100);
        let expected = (arch.parameter_count() - removed) as f64 / arch.parameter_count() as f64;
        assert_eq!(derived_target_compression(&arch, 0.95), expected);
    }
}
