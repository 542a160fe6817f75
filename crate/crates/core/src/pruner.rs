//! Level pruning: per-layer magnitude masks at a fixed sparsity.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Architecture, MaskSet, WeightStore};
use crate::parallel::{self, Execution};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    /// Fraction of each scoped weight tensor that is removed.
    pub sparsity: f64,
    /// Layer indices to prune.
    pub scope: Vec<usize>,
}

impl PruneSpec {
    pub fn new(sparsity: f64, scope: Vec<usize>) -> Result<Self> {
        let spec = Self { sparsity, scope };
        spec.validate()?;
        Ok(spec)
    }

    /// Every prunable layer of `arch`. May be empty for a network with no
    /// hidden units yet; callers treat that as a no-op prune.
    pub fn hidden_layers(sparsity: f64, arch: &Architecture) -> Self {
        Self {
            sparsity,
            scope: arch.prunable_layers(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::Prune(format!(
                "sparsity must lie in [0, 1), got {}",
                self.sparsity
            )));
        }
        if self.scope.is_empty() {
            return Err(Error::Prune("empty pruning scope".into()));
        }
        Ok(())
    }

    /// `floor(sparsity * n)`.
    pub fn removal_count(&self, n: usize) -> usize {
        (self.sparsity * n as f64).floor() as usize
    }
}

/// Removal order: masked entries first, then ascending magnitude, then
/// ascending flat index.
fn removal_order(w: &[f32], m: &[f32], a: usize, b: usize) -> Ordering {
    let live = |i: usize| m[i] != 0.0;
    live(a)
        .cmp(&live(b))
        .then_with(|| w[a].abs().total_cmp(&w[b].abs()))
        .then_with(|| a.cmp(&b))
}

/// Mask for one tensor keeping all but the `remove` lowest-ranked entries.
pub fn prune_tensor(weights: &Tensor, mask: &Tensor, remove: usize) -> Tensor {
    let (w, m) = (weights.data(), mask.data());
    let mut out = Tensor::ones(weights.shape());
    if remove == 0 {
        out.data_mut().copy_from_slice(m);
        return out;
    }
    let mut idx: Vec<usize> = (0..w.len()).collect();
    if remove < idx.len() {
        idx.select_nth_unstable_by(remove - 1, |&a, &b| removal_order(w, m, a, b));
    }
    for &i in &idx[..remove] {
        out.data_mut()[i] = 0.0;
    }
    out
}

/// Computes new masks for every scoped layer, zeroes pruned weights, and
/// returns the updated mask set. Layers outside the scope keep their masks.
pub fn level_prune(
    exec: Execution,
    arch: &Architecture,
    weights: &mut WeightStore,
    masks: &MaskSet,
    spec: &PruneSpec,
) -> Result<MaskSet> {
    spec.validate()?;
    let mut targets = Vec::new();
    for &layer in &spec.scope {
        let prunable = arch.layers.get(layer).is_some_and(|l| l.prunable);
        if !prunable {
            return Err(Error::Prune(format!("layer {layer} is not a prunable layer")));
        }
        for (j, mask) in masks.layers[layer].iter().enumerate() {
            let Some(mask) = mask else { continue };
            let w = &weights.layers[layer][j];
            if w.shape() != mask.shape() {
                return Err(Error::dim(
                    "level_prune",
                    format!("layer {layer}: weight {:?} vs mask {:?}", w.shape(), mask.shape()),
                ));
            }
            let remove = spec.removal_count(w.len());
            if remove >= w.len() {
                return Err(Error::Prune(format!(
                    "sparsity {} would remove every weight of layer {layer}",
                    spec.sparsity
                )));
            }
            targets.push((layer, j, remove));
        }
    }
    let new_masks = {
        let weights = &*weights;
        parallel::map_collect(exec, targets.len(), |t| {
            let (layer, j, remove) = targets[t];
            let mask = masks.layers[layer][j].as_ref().expect("target has a mask");
            prune_tensor(&weights.layers[layer][j], mask, remove)
        })
    };
    let mut out = masks.clone();
    for (&(layer, j, _), mask) in targets.iter().zip(new_masks) {
        out.layers[layer][j] = Some(mask);
    }
    apply_masks(weights, &out)?;
    Ok(out)
}

/// `weights <- weights ⊙ masks` for every masked tensor (masks are binary).
pub fn apply_masks(weights: &mut WeightStore, masks: &MaskSet) -> Result<()> {
    if weights.layers.len() != masks.layers.len() {
        return Err(Error::dim("apply_masks", "layer count mismatch"));
    }
    for (i, (params, ms)) in weights.layers.iter_mut().zip(&masks.layers).enumerate() {
        if params.len() != ms.len() {
            return Err(Error::dim("apply_masks", format!("layer {i} parameter count mismatch")));
        }
        for (w, m) in params.iter_mut().zip(ms) {
            let Some(m) = m else { continue };
            if w.shape() != m.shape() {
                return Err(Error::dim(
                    "apply_masks",
                    format!("layer {i}: {:?} vs {:?}", w.shape(), m.shape()),
                ));
            }
            // Select rather than multiply so pruned entries are +0.0.
            for (x, &k) in w.data_mut().iter_mut().zip(m.data()) {
                if k == 0.0 {
                    *x = 0.0;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mnist_dense, LayerSpec};

    fn single_layer(w: Vec<f32>) -> (Architecture, WeightStore, MaskSet) {
        let n = w.len();
        let arch = Architecture::new(vec![n], n, vec![LayerSpec::linear(n, 1, true), LayerSpec::output(1, n)]).unwrap();
        let mut weights = WeightStore::zeros_like(&arch);
        weights.layers[0][0] = Tensor::new(&[n, 1], w).unwrap();
        let masks = MaskSet::dense(&arch);
        (arch, weights, masks)
    }

    #[test]
    fn two_smallest_removed() {
        let (arch, mut w, m) = single_layer(vec![0.1, -0.5, 0.3, -0.2]);
        let spec = PruneSpec::new(0.5, vec![0]).unwrap();
        let out = level_prune(Execution::Sequential, &arch, &mut w, &m, &spec).unwrap();
        assert_eq!(out.layers[0][0].as_ref().unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(w.layers[0][0].data(), &[0.0, -0.5, 0.3, 0.0]);
    }

    #[test]
    fn zero_sparsity_is_identity() {
        let (arch, mut w, m) = single_layer(vec![0.1, -0.5, 0.3, -0.2]);
        let spec = PruneSpec::new(0.0, vec![0]).unwrap();
        let out = level_prune(Execution::Sequential, &arch, &mut w, &m, &spec).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn ties_remove_lower_index_first() {
        let (arch, mut w, m) = single_layer(vec![0.5, -0.5, 0.5, 0.5]);
        let spec = PruneSpec::new(0.5, vec![0]).unwrap();
        let out = level_prune(Execution::Sequential, &arch, &mut w, &m, &spec).unwrap();
        assert_eq!(out.layers[0][0].as_ref().unwrap().data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn masked_entries_removed_first() {
        let (arch, mut w, mut m) = single_layer(vec![0.9, 0.0, 0.1, 0.2]);
        // Position 3 was pruned earlier but (hypothetically) carries a weight.
        m.layers[0][0].as_mut().unwrap().data_mut()[3] = 0.0;
        let spec = PruneSpec::new(0.5, vec![0]).unwrap();
        let out = level_prune(Execution::Sequential, &arch, &mut w, &m, &spec).unwrap();
        assert_eq!(out.layers[0][0].as_ref().unwrap().data(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(PruneSpec::new(1.0, vec![0]), Err(Error::Prune(_))));
        assert!(matches!(PruneSpec::new(-0.1, vec![0]), Err(Error::Prune(_))));
        assert!(matches!(PruneSpec::new(0.5, vec![]), Err(Error::Prune(_))));
    }

    #[test]
    fn unprunable_layer_rejected() {
        let arch = mnist_dense(1, 8);
        let mut w = WeightStore::zeros_like(&arch);
        let m = MaskSet::dense(&arch);
        let spec = PruneSpec::new(0.5, vec![0]).unwrap();
        assert!(matches!(
            level_prune(Execution::Sequential, &arch, &mut w, &m, &spec),
            Err(Error::Prune(_))
        ));
    }

    #[test]
    fn apply_masks_spot_entries() {
        let (_, mut w, mut m) = single_layer(vec![2.0, 2.0]);
        m.layers[0][0].as_mut().unwrap().data_mut()[0] = 0.0;
        apply_masks(&mut w, &m).unwrap();
        assert_eq!(w.layers[0][0].data(), &[0.0, 2.0]);
        let (_, mut w, mut m) = single_layer(vec![-2.0]);
        m.layers[0][0].as_mut().unwrap().data_mut()[0] = 0.0;
        apply_masks(&mut w, &m).unwrap();
        assert_eq!(w.layers[0][0].data()[0].to_bits(), 0);
    }

    #[test]
    fn apply_masks_shape_mismatch() {
        let (_, mut w, mut m) = single_layer(vec![2.0, 2.0]);
        m.layers[0][0] = Some(Tensor::ones(&[3]));
        assert!(matches!(apply_masks(&mut w, &m), Err(Error::Dimension { .. })));
    }
}
