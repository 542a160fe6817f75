//! Masked training loop, evaluation and per-epoch metrics.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::data::{batch_indices, Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{forward_graph, Architecture, Checkpoint, MaskSet, WeightStore};
use crate::optim::adam_step;
use crate::parallel::{self, Execution};
use crate::rng::SeededRng;

/// One epoch of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub cycle: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
    pub surviving_parameters: usize,
    pub wall_clock_seconds: f64,
}

/// Append-only list of epoch records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    records: Vec<MetricRecord>,
}

/// The deterministic columns of a record, as written to `metrics.csv`.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    cycle: usize,
    epoch: usize,
    train_loss: f64,
    train_accuracy: f64,
    validation_loss: f64,
    validation_accuracy: f64,
    surviving_parameters: usize,
}

#[derive(Serialize)]
struct TimingRow {
    cycle: usize,
    epoch: usize,
    wall_clock_seconds: f64,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&MetricRecord> {
        self.records.last()
    }

    pub fn push(&mut self, record: MetricRecord) -> Result<()> {
        if let Some(prev) = self.records.last() {
            if record.cycle < prev.cycle || (record.cycle == prev.cycle && record.epoch <= prev.epoch) {
                return Err(Error::Precondition(format!(
                    "metrics must advance: ({}, {}) after ({}, {})",
                    record.cycle, record.epoch, prev.cycle, prev.epoch
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn extend(&mut self, other: &MetricsLog) -> Result<()> {
        other.records.iter().try_for_each(|r| self.push(r.clone()))
    }

    pub fn cycle(&self, cycle: usize) -> impl Iterator<Item = &MetricRecord> {
        self.records.iter().filter(move |r| r.cycle == cycle)
    }

    /// Per-epoch metrics without wall-clock times; byte-identical across
    /// reruns of the same configuration.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow {
                cycle: r.cycle,
                epoch: r.epoch,
                train_loss: r.train_loss,
                train_accuracy: r.train_accuracy,
                validation_loss: r.validation_loss,
                validation_accuracy: r.validation_accuracy,
                surviving_parameters: r.surviving_parameters,
            })
            .expect("in-memory csv write");
        }
        if self.records.is_empty() {
            w.write_record([
                "cycle",
                "epoch",
                "train_loss",
                "train_accuracy",
                "validation_loss",
                "validation_accuracy",
                "surviving_parameters",
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }

    pub fn timing_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(TimingRow {
                cycle: r.cycle,
                epoch: r.epoch,
                wall_clock_seconds: r.wall_clock_seconds,
            })
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }

    /// Parses `metrics.csv`; wall-clock times read back as zero.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut log = Self::new();
        for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<CsvRow>() {
            let row = row.map_err(|e| Error::Format {
                file: "metrics.csv".into(),
                detail: e.to_string(),
            })?;
            log.push(MetricRecord {
                cycle: row.cycle,
                epoch: row.epoch,
                train_loss: row.train_loss,
                train_accuracy: row.train_accuracy,
                validation_loss: row.validation_loss,
                validation_accuracy: row.validation_accuracy,
                surviving_parameters: row.surviving_parameters,
                wall_clock_seconds: 0.0,
            })?;
        }
        Ok(log)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop a cycle once validation loss has not improved for this many
    /// consecutive epochs.
    pub early_stop_patience: Option<usize>,
    pub execution: Execution,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize) -> Self {
        Self {
            epochs,
            batch_size,
            early_stop_patience: None,
            execution: Execution::default(),
        }
    }
}

/// Loss and accuracy over one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const EVAL_CHUNK: usize = 250;

struct ChunkStats {
    loss_sum: f64,
    correct: usize,
    logits: Option<Vec<f32>>,
}

fn eval_chunks(
    exec: Execution,
    arch: &Architecture,
    weights: &WeightStore,
    masks: &MaskSet,
    data: &Dataset,
    split: Split,
    keep_logits: bool,
) -> Result<Vec<ChunkStats>> {
    let n = data.len(split);
    if n == 0 {
        return Err(Error::Precondition(format!("{} split is empty", split.as_str())));
    }
    let chunks = n.div_ceil(EVAL_CHUNK);
    parallel::map_collect(exec, chunks, |c| {
        let idx: Vec<usize> = (c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(n)).collect();
        let (x, labels) = data.gather(split, &idx, &arch.input_shape)?;
        let mut g = Graph::with_execution(Execution::Sequential);
        let pass = forward_graph(&mut g, arch, weights, masks, x, false)?;
        let loss = g.softmax_cross_entropy(pass.logits, &labels)?;
        let logits = g.value(pass.logits);
        let classes = logits.shape()[1];
        let correct = labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| argmax(&logits.data()[i * classes..][..classes]) == l)
            .count();
        Ok(ChunkStats {
            loss_sum: g.loss_f64(loss).expect("cross-entropy node") * idx.len() as f64,
            correct,
            logits: keep_logits.then(|| logits.data().to_vec()),
        })
    })
    .into_iter()
    .collect()
}

/// Mean cross-entropy and accuracy of the network on `split`. Pure.
pub fn evaluate_network(
    exec: Execution,
    arch: &Architecture,
    weights: &WeightStore,
    masks: &MaskSet,
    data: &Dataset,
    split: Split,
) -> Result<Evaluation> {
    let stats = eval_chunks(exec, arch, weights, masks, data, split, false)?;
    let n = data.len(split) as f64;
    let loss: f64 = stats.iter().map(|s| s.loss_sum).sum();
    let correct: usize = stats.iter().map(|s| s.correct).sum();
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, split: Split, exec: Execution) -> Result<Evaluation> {
    evaluate_network(exec, &ckpt.architecture, &ckpt.weights, &ckpt.masks, data, split)
}

/// [`evaluate`] plus the logits of every sample, row-major `[N, classes]`.
pub fn evaluate_with_logits(
    ckpt: &Checkpoint,
    data: &Dataset,
    split: Split,
    exec: Execution,
) -> Result<(Evaluation, Vec<f32>)> {
    let stats = eval_chunks(exec, &ckpt.architecture, &ckpt.weights, &ckpt.masks, data, split, true)?;
    let n = data.len(split) as f64;
    let eval = Evaluation {
        loss: stats.iter().map(|s| s.loss_sum).sum::<f64>() / n,
        accuracy: stats.iter().map(|s| s.correct).sum::<usize>() as f64 / n,
    };
    Ok((
        eval,
        stats.into_iter().flat_map(|s| s.logits.unwrap_or_default()).collect(),
    ))
}

/// One optimization step on a batch; returns `(summed loss, correct)`.
fn train_batch(ckpt: &mut Checkpoint, data: &Dataset, idx: &[usize], exec: Execution) -> Result<(f64, usize)> {
    let (x, labels) = data.gather(Split::Train, idx, &ckpt.architecture.input_shape)?;
    let mut g = Graph::with_execution(exec);
    let pass = forward_graph(&mut g, &ckpt.architecture, &ckpt.weights, &ckpt.masks, x, true)?;
    let loss = g.softmax_cross_entropy(pass.logits, &labels)?;
    let loss_sum = g.loss_f64(loss).expect("cross-entropy node") * idx.len() as f64;
    let logits = g.value(pass.logits);
    let classes = logits.shape()[1];
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| argmax(&logits.data()[i * classes..][..classes]) == l)
        .count();
    g.backward(loss)?;
    let grads = WeightStore {
        layers: pass
            .params
            .iter()
            .map(|layer| layer.iter().map(|&v| g.take_grad(v)).collect())
            .collect(),
    };
    adam_step(&mut ckpt.weights, &grads, &ckpt.masks, &mut ckpt.optimizer)?;
    Ok((loss_sum, correct))
}

/// Trains `ckpt` in place for up to `cfg.epochs` epochs, shuffling the
/// training split from `rng` each epoch and evaluating on the validation
/// split after every epoch. Epochs are numbered from 1.
pub fn train_cycle(
    ckpt: &mut Checkpoint,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
    cycle: usize,
) -> Result<MetricsLog> {
    if cfg.epochs == 0 {
        return Err(Error::Precondition("train_cycle needs at least one epoch".into()));
    }
    if data.is_empty(Split::Train) {
        return Err(Error::Precondition("training split is empty".into()));
    }
    let mut log = MetricsLog::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let plan = batch_indices(data.len(Split::Train), cfg.batch_size, Split::Train, Some(rng))?;
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (b, idx) in plan.iter().enumerate() {
            let (l, c) = train_batch(ckpt, data, idx, cfg.execution).map_err(|e| e.in_batch(b))?;
            loss_sum += l;
            correct += c;
        }
        let n = data.len(Split::Train) as f64;
        let val = evaluate(ckpt, data, Split::Test, cfg.execution)?;
        let record = MetricRecord {
            cycle,
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            validation_loss: val.loss,
            validation_accuracy: val.accuracy,
            surviving_parameters: ckpt.surviving_parameters(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "cycle {cycle} epoch {epoch}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4} ({:.1}s)",
            record.train_loss,
            record.train_accuracy,
            record.validation_loss,
            record.validation_accuracy,
            record.wall_clock_seconds
        );
        log.push(record)?;
        ckpt.metrics_cursor += 1;

        if let Some(patience) = cfg.early_stop_patience {
            if val.loss < best {
                best = val.loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    ckpt.rng = rng.state();
    Ok(log)
}
