//! Adam with bias correction, mask-aware.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Pass, Result};
use crate::model::{Architecture, MaskSet, WeightStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moments and step count for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub first: Vec<f32>,
    pub second: Vec<f32>,
    pub step: u64,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }
}

/// Per-tensor Adam state aligned with `WeightStore::layers`. Step counts
/// are tracked per tensor so parameters added by growth start their own
/// bias correction from step 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub layers: Vec<Vec<Moments>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, weights: &WeightStore) -> Self {
        Self {
            config,
            layers: weights
                .layers
                .iter()
                .map(|l| l.iter().map(|t| Moments::zeros(t.len())).collect())
                .collect(),
        }
    }

    pub fn for_architecture(config: AdamConfig, arch: &Architecture) -> Self {
        Self::new(config, &WeightStore::zeros_like(arch))
    }

    pub fn reset(&mut self) {
        for m in self.layers.iter_mut().flatten() {
            *m = Moments::zeros(m.first.len());
        }
    }

    /// Fresh state for a layer inserted at `position`.
    pub fn insert_layer(&mut self, position: usize, sizes: &[usize]) {
        self.layers
            .insert(position, sizes.iter().map(|&n| Moments::zeros(n)).collect());
    }
}

/// One Adam update of every parameter. Masked positions end the step with
/// weight and both moments exactly zero.
pub fn adam_step(weights: &mut WeightStore, grads: &WeightStore, masks: &MaskSet, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != weights.layers.len() || state.layers.len() != weights.layers.len() {
        return Err(Error::dim("adam_step", "layer count mismatch"));
    }
    let cfg = state.config;
    for (i, (params, grads)) in weights.layers.iter_mut().zip(&grads.layers).enumerate() {
        if params.len() != grads.len() || state.layers[i].len() != params.len() {
            return Err(Error::dim("adam_step", format!("layer {i} parameter count mismatch")));
        }
        for (j, (w, g)) in params.iter_mut().zip(grads).enumerate() {
            if w.shape() != g.shape() {
                return Err(Error::dim(
                    "adam_step",
                    format!("layer {i} param {j}: {:?} vs {:?}", w.shape(), g.shape()),
                ));
            }
            g.check_finite("adam_step", Pass::Backward)?;
            let moments = &mut state.layers[i][j];
            moments.step += 1;
            let t = moments.step as i32;
            let bias1 = (1.0 - f64::from(cfg.beta1).powi(t)) as f32;
            let bias2 = (1.0 - f64::from(cfg.beta2).powi(t)) as f32;
            let mask = masks.layers.get(i).and_then(|l| l.get(j)).and_then(Option::as_ref);
            for (k, (wk, &gk)) in w.data_mut().iter_mut().zip(g.data()).enumerate() {
                if mask.is_some_and(|m| m.data()[k] == 0.0) {
                    *wk = 0.0;
                    moments.first[k] = 0.0;
                    moments.second[k] = 0.0;
                    continue;
                }
                let m = cfg.beta1 * moments.first[k] + (1.0 - cfg.beta1) * gk;
                let v = cfg.beta2 * moments.second[k] + (1.0 - cfg.beta2) * gk * gk;
                moments.first[k] = m;
                moments.second[k] = v;
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                *wk -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
    Ok(())
}
