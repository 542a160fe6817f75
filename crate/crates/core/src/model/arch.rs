use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// Weight shape `[input, output]`, so the forward pass is `x W + b`.
    Linear {
        input: usize,
        output: usize,
    },
    Relu,
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// `relu(conv2(relu(conv1(x))) + x)`, both convs `channels -> channels`
    /// with stride 1 and same padding.
    ResidualBasicBlock {
        channels: usize,
        kernel: usize,
    },
    Flatten,
    OutputLinear {
        input: usize,
        output: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub prunable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grown_at_iteration: Option<usize>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, prunable: bool) -> Self {
        Self {
            kind,
            prunable,
            grown_at_iteration: None,
        }
    }

    pub fn linear(input: usize, output: usize, prunable: bool) -> Self {
        Self::new(LayerKind::Linear { input, output }, prunable)
    }

    pub fn relu() -> Self {
        Self::new(LayerKind::Relu, false)
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self::new(
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            },
            false,
        )
    }

    pub fn basic_block(channels: usize, kernel: usize, prunable: bool) -> Self {
        Self::new(LayerKind::ResidualBasicBlock { channels, kernel }, prunable)
    }

    pub fn flatten() -> Self {
        Self::new(LayerKind::Flatten, false)
    }

    pub fn output(input: usize, output: usize) -> Self {
        Self::new(LayerKind::OutputLinear { input, output }, false)
    }

    /// Names of this layer's parameter tensors, in storage order.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self.kind {
            LayerKind::Linear { .. } | LayerKind::Conv { .. } | LayerKind::OutputLinear { .. } => &["weight", "bias"],
            LayerKind::ResidualBasicBlock { .. } => &["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"],
            LayerKind::Relu | LayerKind::Flatten => &[],
        }
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self.kind {
            LayerKind::Linear { input, output } | LayerKind::OutputLinear { input, output } => {
                vec![vec![input, output], vec![output]]
            }
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]],
            LayerKind::ResidualBasicBlock { channels, kernel } => {
                let w = vec![channels, channels, kernel, kernel];
                vec![w.clone(), vec![channels], w, vec![channels]]
            }
            LayerKind::Relu | LayerKind::Flatten => Vec::new(),
        }
    }

    /// Whether parameter `index` is a weight (as opposed to a bias).
    pub fn is_weight(&self, index: usize) -> bool {
        self.param_names().get(index).is_some_and(|n| n.ends_with("weight"))
    }

    /// Whether parameter `index` carries a pruning mask.
    pub fn is_masked(&self, index: usize) -> bool {
        self.prunable && self.is_weight(index)
    }

    /// Fan-in of weight parameter `index`.
    pub fn fan_in(&self, index: usize) -> usize {
        let shape = &self.param_shapes()[index];
        match self.kind {
            LayerKind::Linear { input, .. } | LayerKind::OutputLinear { input, .. } => input,
            _ => shape[1..].iter().product(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Output shape (without the batch axis) for the given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |want: String| {
            Err(Error::Architecture(format!(
                "{:?} expects input {want}, got {input:?}",
                self.kind
            )))
        };
        match self.kind {
            LayerKind::Linear { input: n, output } | LayerKind::OutputLinear { input: n, output } => {
                if input != [n] {
                    return mismatch(format!("[{n}]"));
                }
                Ok(vec![output])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return mismatch(format!("[{in_channels}, H, W]"));
                }
                let extent = |size: usize| {
                    let padded = size + 2 * padding;
                    (stride > 0 && kernel > 0 && padded >= kernel && (padded - kernel).is_multiple_of(stride))
                        .then(|| (padded - kernel) / stride + 1)
                };
                match (extent(input[1]), extent(input[2])) {
                    (Some(h), Some(w)) => Ok(vec![out_channels, h, w]),
                    _ => Err(Error::Architecture(format!(
                        "conv k={kernel} stride={stride} padding={padding} gives a non-integral extent on {input:?}"
                    ))),
                }
            }
            LayerKind::ResidualBasicBlock { channels, kernel } => {
                if kernel % 2 == 0 {
                    return Err(Error::Architecture(format!(
                        "basic block kernel must be odd, got {kernel}"
                    )));
                }
                if input.len() != 3 || input[0] != channels {
                    return mismatch(format!("[{channels}, H, W]"));
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Ordered layer list plus the dataset shapes it connects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Per-sample input shape, e.g. `[784]` or `[3, 32, 32]`.
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(input_shape: Vec<usize>, classes: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let arch = Self {
            input_shape,
            classes,
            layers,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Per-layer output shapes; fails on any incompatible adjacency.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::Architecture(format!("layer {i}: {e}")))?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Architecture("no layers".into()));
        }
        let shapes = self.shapes()?;
        if shapes.last() != Some(&vec![self.classes]) {
            return Err(Error::Architecture(format!(
                "last layer emits {:?}, expected [{}] class logits",
                shapes.last(),
                self.classes
            )));
        }
        Ok(())
    }

    /// `L`, the number of layers.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }

    /// Indices of prunable layers.
    pub fn prunable_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].prunable).collect()
    }

    /// Index where hidden units are inserted by default: just before the
    /// trailing flatten/output head.
    pub fn head_index(&self) -> usize {
        let mut idx = self.layers.len();
        while idx > 0
            && matches!(
                self.layers[idx - 1].kind,
                LayerKind::OutputLinear { .. } | LayerKind::Flatten
            )
        {
            idx -= 1;
        }
        idx
    }

    /// Number of hidden units: prunable layers between input and head.
    pub fn hidden_units(&self) -> usize {
        self.layers.iter().filter(|l| l.prunable).count()
    }
}

/// Dense MNIST network: `784 -> width` input projection, `hidden` copies
/// of `(width, width) + relu`, and a `width -> 10` output layer.
pub fn mnist_dense(hidden: usize, width: usize) -> Architecture {
    let mut layers = vec![LayerSpec::linear(784, width, false), LayerSpec::relu()];
    for _ in 0..hidden {
        layers.extend(mnist_hidden_unit(width));
    }
    layers.push(LayerSpec::output(width, 10));
    Architecture::new(vec![784], 10, layers).expect("mnist preset is valid")
}

pub fn mnist_hidden_unit(width: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::linear(width, width, true), LayerSpec::relu()]
}

/// Residual CIFAR-10 network: `3 -> channels` k=7, padding 3 input conv with the
/// given stride, `blocks` basic blocks, then flatten and a linear output.
pub fn cifar_resnet(blocks: usize, channels: usize, input_stride: usize, side: usize) -> Result<Architecture> {
    let input_conv = LayerSpec::conv(3, channels, 7, input_stride, 3);
    let conv_shape = input_conv.output_shape(&[3, side, side])?;
    let mut layers = vec![input_conv, LayerSpec::relu()];
    for _ in 0..blocks {
        layers.extend(cifar_hidden_unit(channels));
    }
    let features: usize = conv_shape.iter().product();
    layers.push(LayerSpec::flatten());
    layers.push(LayerSpec::output(features, 10));
    Architecture::new(vec![3, side, side], 10, layers)
}

pub fn cifar_hidden_unit(channels: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::basic_block(channels, 3, true)]
}
