use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::arch::{Architecture, LayerKind, LayerSpec};
use crate::parallel::Execution;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Parameter tensors per layer, aligned with `Architecture::layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub layers: Vec<Vec<Tensor>>,
}

impl WeightStore {
    pub fn zeros_like(arch: &Architecture) -> Self {
        Self {
            layers: arch
                .layers
                .iter()
                .map(|l| l.param_shapes().iter().map(|s| Tensor::zeros(s)).collect())
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flatten()
    }

    /// Checks every tensor has the shape its layer spec demands.
    pub fn check_shapes(&self, arch: &Architecture) -> Result<()> {
        if self.layers.len() != arch.layers.len() {
            return Err(Error::Architecture(format!(
                "{} weight groups for {} layers",
                self.layers.len(),
                arch.layers.len()
            )));
        }
        for (i, (params, spec)) in self.layers.iter().zip(&arch.layers).enumerate() {
            let shapes = spec.param_shapes();
            if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(t, s)| t.shape() != s.as_slice()) {
                return Err(Error::Architecture(format!(
                    "layer {i} parameters do not match {:?}",
                    spec.kind
                )));
            }
        }
        Ok(())
    }
}

/// Binary masks over weights of prunable layers; `None` for every other
/// parameter (biases are never masked).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub layers: Vec<Vec<Option<Tensor>>>,
}

impl MaskSet {
    /// All-ones masks for every masked parameter of `arch`.
    pub fn dense(arch: &Architecture) -> Self {
        Self {
            layers: arch.layers.iter().map(dense_layer_masks).collect(),
        }
    }

    pub fn masks(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flatten().flatten()
    }

    /// Total entries covered by masks.
    pub fn covered(&self) -> usize {
        self.masks().map(Tensor::len).sum()
    }

    /// Entries equal to one.
    pub fn ones(&self) -> usize {
        self.masks()
            .map(|m| m.data().iter().filter(|&&v| v != 0.0).count())
            .sum()
    }

    pub fn is_binary(&self) -> bool {
        self.masks().all(|m| m.data().iter().all(|&v| v == 0.0 || v == 1.0))
    }
}

pub(crate) fn dense_layer_masks(spec: &LayerSpec) -> Vec<Option<Tensor>> {
    spec.param_shapes()
        .iter()
        .enumerate()
        .map(|(i, s)| spec.is_masked(i).then(|| Tensor::ones(s)))
        .collect()
}

/// Draws one layer's parameters: weights uniform in `±sqrt(1/fan_in)`,
/// biases zero. Draw order is parameter by parameter, row-major.
pub fn init_layer(spec: &LayerSpec, rng: &mut SeededRng) -> Vec<Tensor> {
    spec.param_shapes()
        .iter()
        .enumerate()
        .map(|(i, shape)| {
            if spec.is_weight(i) {
                let bound = (1.0 / spec.fan_in(i) as f64).sqrt() as f32;
                Tensor::from_fn(shape, |_| rng.uniform(-bound, bound))
            } else {
                Tensor::zeros(shape)
            }
        })
        .collect()
}

/// Builds `f(x; theta, omega^0)`: fresh weights and all-ones masks.
pub fn build_network(arch: &Architecture, rng: &mut SeededRng) -> Result<(WeightStore, MaskSet)> {
    arch.validate()?;
    let layers = arch.layers.iter().map(|l| init_layer(l, rng)).collect();
    Ok((WeightStore { layers }, MaskSet::dense(arch)))
}

/// Graph handles produced by [`forward_graph`].
pub struct ForwardPass {
    pub logits: Var,
    /// Leaf handles aligned with `WeightStore::layers`.
    pub params: Vec<Vec<Var>>,
}

/// Records `f(x; theta, m ⊙ omega)` on `graph`. When `trainable` is set the
/// weights become differentiable leaves.
pub fn forward_graph(
    graph: &mut Graph,
    arch: &Architecture,
    weights: &WeightStore,
    masks: &MaskSet,
    input: Tensor,
    trainable: bool,
) -> Result<ForwardPass> {
    let batch = *input.shape().first().unwrap_or(&0);
    if input.shape().len() != arch.input_shape.len() + 1 || input.shape()[1..] != arch.input_shape[..] {
        return Err(Error::dim(
            "forward",
            format!("input {:?} does not match [B, {:?}]", input.shape(), arch.input_shape),
        ));
    }
    let mut x = graph.input(input);
    let mut params = Vec::with_capacity(arch.layers.len());

    for (i, spec) in arch.layers.iter().enumerate() {
        let leaves: Vec<Var> = weights.layers[i]
            .iter()
            .map(|t| {
                if trainable {
                    graph.param(t.clone())
                } else {
                    graph.input(t.clone())
                }
            })
            .collect();
        let mut effective = Vec::with_capacity(leaves.len());
        for (j, &leaf) in leaves.iter().enumerate() {
            effective.push(match masks.layers[i].get(j).and_then(Option::as_ref) {
                Some(mask) => {
                    let m = graph.input(mask.clone());
                    graph.mul(leaf, m)?
                }
                None => leaf,
            });
        }

        x = match spec.kind {
            LayerKind::Linear { .. } | LayerKind::OutputLinear { .. } => {
                let y = graph.matmul(x, effective[0])?;
                graph.add_row_bias(y, effective[1])?
            }
            LayerKind::Relu => graph.relu(x)?,
            LayerKind::Flatten => {
                let features = graph.value(x).len() / batch.max(1);
                graph.reshape(x, &[batch, features])?
            }
            LayerKind::Conv { stride, padding, .. } => {
                let y = graph.conv2d(x, effective[0], stride, padding)?;
                graph.add_channel_bias(y, effective[1])?
            }
            LayerKind::ResidualBasicBlock { kernel, .. } => {
                let pad = kernel / 2;
                let h = graph.conv2d(x, effective[0], 1, pad)?;
                let h = graph.add_channel_bias(h, effective[1])?;
                let h = graph.relu(h)?;
                let h = graph.conv2d(h, effective[2], 1, pad)?;
                let h = graph.add_channel_bias(h, effective[3])?;
                let h = graph.add(h, x)?;
                graph.relu(h)?
            }
        };
        params.push(leaves);
    }
    Ok(ForwardPass { logits: x, params })
}

/// Evaluates the network's logits for a batch `x` of shape `[B, input_shape..]`.
pub fn forward(arch: &Architecture, weights: &WeightStore, masks: &MaskSet, x: Tensor) -> Result<Tensor> {
    forward_with(Execution::default(), arch, weights, masks, x)
}

pub fn forward_with(
    exec: Execution,
    arch: &Architecture,
    weights: &WeightStore,
    masks: &MaskSet,
    x: Tensor,
) -> Result<Tensor> {
    let mut graph = Graph::with_execution(exec);
    let pass = forward_graph(&mut graph, arch, weights, masks, x, false)?;
    Ok(graph.value(pass.logits).clone())
}

/// `(surviving masked weights + unmasked parameters) / reference_count`.
pub fn compression_ratio(weights: &WeightStore, masks: &MaskSet, reference_count: usize) -> f64 {
    assert!(reference_count > 0, "compression ratio needs a positive reference");
    surviving_parameters(weights, masks) as f64 / reference_count as f64
}

pub fn surviving_parameters(weights: &WeightStore, masks: &MaskSet) -> usize {
    weights.parameter_count() - masks.covered() + masks.ones()
}

/// True iff both networks have the same layer list and every child mask
/// entry is `<=` the matching parent entry.
pub fn is_spanning_subnetwork(child: (&Architecture, &MaskSet), parent: (&Architecture, &MaskSet)) -> bool {
    let (child_arch, child_masks) = child;
    let (parent_arch, parent_masks) = parent;
    if child_arch.input_shape != parent_arch.input_shape
        || child_arch.layers.len() != parent_arch.layers.len()
        || child_arch
            .layers
            .iter()
            .zip(&parent_arch.layers)
            .any(|(a, b)| a.kind != b.kind)
        || child_masks.layers.len() != parent_masks.layers.len()
    {
        return false;
    }
    child_masks.layers.iter().zip(&parent_masks.layers).all(|(cl, pl)| {
        cl.len() == pl.len()
            && cl.iter().zip(pl).all(|(c, p)| match (c, p) {
                (None, None) => true,
                (Some(c), Some(p)) => c.shape() == p.shape() && c.data().iter().zip(p.data()).all(|(a, b)| a <= b),
                _ => false,
            })
    })
}
