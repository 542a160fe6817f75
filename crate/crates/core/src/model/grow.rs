//! Structure growth: `theta^1 = theta* ∪ theta'`, `omega^1 = omega* ∪ omega'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::arch::{Architecture, LayerKind, LayerSpec};
use crate::model::checkpoint::Checkpoint;
use crate::model::network::{dense_layer_masks, init_layer};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// How inserted parameters are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthInit {
    /// Identity weights and zero biases; the network function is unchanged.
    Identity,
    /// Fresh draws from the initialization distribution.
    Random,
}

/// Identity scheme for inserted residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockInit {
    /// Dirac first conv, zero second conv: the block is exactly the identity
    /// on nonnegative inputs.
    DiracZero,
    /// Dirac on both convs; computes `relu(2x)` on nonnegative inputs.
    DoubleDirac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthOptions {
    pub init: GrowthInit,
    pub block_init: BlockInit,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self {
            init: GrowthInit::Identity,
            block_init: BlockInit::DiracZero,
        }
    }
}

fn identity_matrix(n: usize) -> Tensor {
    Tensor::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
}

/// `[c, c, k, k]` kernel with 1 at the spatial centre of each `(o, o)` pair.
pub fn dirac_kernel(channels: usize, kernel: usize) -> Tensor {
    let centre = kernel / 2;
    let mut t = Tensor::zeros(&[channels, channels, kernel, kernel]);
    for o in 0..channels {
        t.data_mut()[((o * channels + o) * kernel + centre) * kernel + centre] = 1.0;
    }
    t
}

/// Parameters that make `spec` compute the identity map.
pub fn identity_params(spec: &LayerSpec, block_init: BlockInit) -> Result<Vec<Tensor>> {
    match spec.kind {
        LayerKind::Linear { input, output } | LayerKind::OutputLinear { input, output } => {
            if input != output {
                return Err(Error::Growth(format!(
                    "identity init needs a square linear layer, got ({input}, {output})"
                )));
            }
            Ok(vec![identity_matrix(input), Tensor::zeros(&[output])])
        }
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            if in_channels != out_channels || kernel % 2 == 0 || stride != 1 || padding != kernel / 2 {
                return Err(Error::Growth(format!(
                    "identity conv needs in == out, odd kernel, stride 1 and same padding; got {:?}",
                    spec.kind
                )));
            }
            Ok(vec![dirac_kernel(in_channels, kernel), Tensor::zeros(&[out_channels])])
        }
        LayerKind::ResidualBasicBlock { channels, kernel } => {
            if kernel % 2 == 0 {
                return Err(Error::Growth(format!(
                    "identity block needs an odd kernel, got {kernel}"
                )));
            }
            let second = match block_init {
                BlockInit::DiracZero => Tensor::zeros(&[channels, channels, kernel, kernel]),
                BlockInit::DoubleDirac => dirac_kernel(channels, kernel),
            };
            Ok(vec![
                dirac_kernel(channels, kernel),
                Tensor::zeros(&[channels]),
                second,
                Tensor::zeros(&[channels]),
            ])
        }
        LayerKind::Relu | LayerKind::Flatten => Ok(Vec::new()),
    }
}

/// Returns a new checkpoint with `insertion` placed at `position`.
///
/// Inserted layers get all-ones masks, fresh optimizer state, and are
/// appended to the `omega^0` record at their inserted values. Existing
/// weights, masks and optimizer moments are carried over untouched.
pub fn grow_network(
    ckpt: &Checkpoint,
    insertion: &[LayerSpec],
    position: usize,
    options: GrowthOptions,
    rng: &mut SeededRng,
    iteration: usize,
) -> Result<Checkpoint> {
    if position > ckpt.architecture.layers.len() {
        return Err(Error::Growth(format!(
            "insertion position {position} beyond {} layers",
            ckpt.architecture.layers.len()
        )));
    }
    let mut layers = ckpt.architecture.layers.clone();
    let new_specs: Vec<LayerSpec> = insertion
        .iter()
        .map(|s| LayerSpec {
            grown_at_iteration: Some(iteration),
            ..s.clone()
        })
        .collect();
    for (k, spec) in new_specs.iter().enumerate() {
        layers.insert(position + k, spec.clone());
    }
    let architecture = Architecture {
        layers,
        ..ckpt.architecture.clone()
    };
    architecture
        .validate()
        .map_err(|e| Error::Growth(format!("insertion incompatible at {position}: {e}")))?;

    let mut out = ckpt.clone();
    out.architecture = architecture;
    for (k, spec) in new_specs.iter().enumerate() {
        let params = match options.init {
            GrowthInit::Identity => identity_params(spec, options.block_init)?,
            GrowthInit::Random => init_layer(spec, rng),
        };
        let sizes: Vec<usize> = params.iter().map(Tensor::len).collect();
        let at = position + k;
        if let Some(w0) = out.initial_weights.as_mut() {
            w0.layers.insert(at, params.clone());
        }
        out.weights.layers.insert(at, params);
        out.masks.layers.insert(at, dense_layer_masks(spec));
        out.optimizer.insert_layer(at, &sizes);
    }
    Ok(out)
}
