//! Datasets, normalization and batching.

mod cifar;
mod mnist;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub use cifar::{
    load_cifar10, load_cifar10_with, parse_cifar_batch, CIFAR_MEAN, CIFAR_RECORD_LEN, CIFAR_STD, CIFAR_TEST_FILE,
    CIFAR_TRAIN_FILES,
};
pub use mnist::{
    load_mnist, parse_idx, read_idx_file, write_idx, IdxFile, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, MNIST_MEAN, MNIST_STD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    /// The standard test set, used as the validation split.
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "validation",
        }
    }
}

/// Per-channel affine map `x = (p / 255 - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn normalize(&self, channel: usize, pixel: u8) -> f32 {
        (f32::from(pixel) / 255.0 - self.mean[channel]) / self.std[channel]
    }

    pub fn denormalize(&self, channel: usize, value: f32) -> f32 {
        (value * self.std[channel] + self.mean[channel]) * 255.0
    }

    /// `table[c][p]` is `normalize(c, p)`.
    fn tables(&self) -> Vec<[f32; 256]> {
        (0..self.mean.len())
            .map(|c| std::array::from_fn(|p| self.normalize(c, p as u8)))
            .collect()
    }
}

/// Raw pixel bytes plus the metadata needed to turn them into tensors.
/// Immutable after load.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// Per-sample shape of the stored pixels, channel-planar.
    pub image_shape: Vec<usize>,
    pub classes: usize,
    pub normalization: Normalization,
    pub train_images: Vec<u8>,
    pub train_labels: Vec<u8>,
    pub test_images: Vec<u8>,
    pub test_labels: Vec<u8>,
    /// `(file name, sha256 hex)` for every file read.
    pub checksums: Vec<(String, String)>,
    tables: Vec<[f32; 256]>,
}

impl Dataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        image_shape: Vec<usize>,
        classes: usize,
        normalization: Normalization,
        train: (Vec<u8>, Vec<u8>),
        test: (Vec<u8>, Vec<u8>),
    ) -> Result<Self> {
        let sample: usize = image_shape.iter().product();
        let channels = if image_shape.len() == 3 { image_shape[0] } else { 1 };
        if normalization.mean.len() != channels || normalization.std.len() != channels {
            return Err(Error::Input {
                op: "dataset",
                detail: format!(
                    "normalization has {} channels, images have {channels}",
                    normalization.mean.len()
                ),
            });
        }
        for (split, (images, labels)) in [("train", &train), ("test", &test)] {
            if sample == 0 || images.len() != labels.len() * sample {
                return Err(Error::Input {
                    op: "dataset",
                    detail: format!("{split}: {} pixel bytes for {} labels", images.len(), labels.len()),
                });
            }
            if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
                return Err(Error::Input {
                    op: "dataset",
                    detail: format!("{split}: label {bad} outside [0, {classes})"),
                });
            }
        }
        Ok(Self {
            name: name.to_string(),
            tables: normalization.tables(),
            image_shape,
            classes,
            normalization,
            train_images: train.0,
            train_labels: train.1,
            test_images: test.0,
            test_labels: test.1,
            checksums: Vec::new(),
        })
    }

    pub fn sample_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    fn channel_len(&self) -> usize {
        self.sample_len() / self.tables.len()
    }

    pub fn len(&self, split: Split) -> usize {
        self.labels(split).len()
    }

    pub fn is_empty(&self, split: Split) -> bool {
        self.len(split) == 0
    }

    pub fn images(&self, split: Split) -> &[u8] {
        match split {
            Split::Train => &self.train_images,
            Split::Test => &self.test_images,
        }
    }

    pub fn labels(&self, split: Split) -> &[u8] {
        match split {
            Split::Train => &self.train_labels,
            Split::Test => &self.test_labels,
        }
    }

    /// Normalized pixels of one sample.
    pub fn sample(&self, split: Split, index: usize) -> Vec<f32> {
        let n = self.sample_len();
        let mut out = vec![0.0; n];
        self.write_sample(split, index, &mut out);
        out
    }

    fn write_sample(&self, split: Split, index: usize, out: &mut [f32]) {
        let n = self.sample_len();
        let per_channel = self.channel_len();
        let raw = &self.images(split)[index * n..][..n];
        for (k, (o, &p)) in out.iter_mut().zip(raw).enumerate() {
            *o = self.tables[k / per_channel][usize::from(p)];
        }
    }

    /// Stacks the given samples into `[B, input_shape..]` plus labels.
    pub fn gather(&self, split: Split, indices: &[usize], input_shape: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let n = self.sample_len();
        if input_shape.iter().product::<usize>() != n {
            return Err(Error::dim(
                "gather",
                format!(
                    "input shape {input_shape:?} does not hold {:?} images",
                    self.image_shape
                ),
            ));
        }
        let mut data = vec![0.0; indices.len() * n];
        for (chunk, &i) in data.chunks_exact_mut(n).zip(indices) {
            self.write_sample(split, i, chunk);
        }
        let labels = indices.iter().map(|&i| usize::from(self.labels(split)[i])).collect();
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(input_shape);
        Ok((Tensor::new(&shape, data)?, labels))
    }

    /// Keeps a random `fraction` of the training split, drawn from `rng`.
    /// Kept samples stay in their original order.
    pub fn subset_train(&mut self, fraction: f64, rng: &mut SeededRng) -> Result<()> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Input {
                op: "subset_train",
                detail: format!("subset fraction must lie in (0, 1], got {fraction}"),
            });
        }
        if fraction == 1.0 {
            return Ok(());
        }
        let total = self.train_labels.len();
        let keep = ((total as f64 * fraction).round() as usize).max(1);
        let mut chosen = rng.permutation(total);
        chosen.truncate(keep);
        chosen.sort_unstable();
        let n = self.sample_len();
        let images = chosen
            .iter()
            .flat_map(|&i| self.train_images[i * n..][..n].iter().copied())
            .collect();
        let labels = chosen.iter().map(|&i| self.train_labels[i]).collect();
        self.train_images = images;
        self.train_labels = labels;
        Ok(())
    }
}

/// Index batches for one pass over `split`. The training split is shuffled
/// from `rng`; the validation split keeps file order. The last batch may be
/// partial.
pub fn batch_indices(
    len: usize,
    batch_size: usize,
    split: Split,
    rng: Option<&mut SeededRng>,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Input {
            op: "batches",
            detail: "batch size must be at least 1".into(),
        });
    }
    let order = match (split, rng) {
        (Split::Train, Some(rng)) => rng.permutation(len),
        _ => (0..len).collect(),
    };
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Iterator over `(input, labels)` batches.
pub struct Batches<'a> {
    dataset: &'a Dataset,
    split: Split,
    input_shape: &'a [usize],
    plan: std::vec::IntoIter<Vec<usize>>,
}

impl Iterator for Batches<'_> {
    type Item = Result<(Tensor, Vec<usize>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let idx = self.plan.next()?;
        Some(self.dataset.gather(self.split, &idx, self.input_shape))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.plan.size_hint()
    }
}

pub fn batches<'a>(
    dataset: &'a Dataset,
    split: Split,
    batch_size: usize,
    input_shape: &'a [usize],
    rng: Option<&mut SeededRng>,
) -> Result<Batches<'a>> {
    let plan = batch_indices(dataset.len(split), batch_size, split, rng)?;
    Ok(Batches {
        dataset,
        split,
        input_shape,
        plan: plan.into_iter(),
    })
}

/// SHA-256 of the standard distribution files as produced by
/// `scripts/fetch_datasets.sh`.
pub const KNOWN_CHECKSUMS: &[(&str, &str)] = &[
    (
        "train-images-idx3-ubyte",
        "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    ),
    (
        "train-labels-idx1-ubyte",
        "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    ),
    (
        "t10k-images-idx3-ubyte",
        "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    ),
    (
        "t10k-labels-idx1-ubyte",
        "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    ),
    (
        "data_batch_1.bin",
        "cee916563c9f80d84e3cc88e17fdc0941787f1244f00a67874d45b261883ada5",
    ),
    (
        "data_batch_2.bin",
        "a591ca11fa1708a91ee40f54b3da4784ccd871ecf2137de63f51ada8b3fa57ed",
    ),
    (
        "data_batch_3.bin",
        "bbe8596564c0f86427f876058170b84dac6670ddf06d79402899d93ceea26f67",
    ),
    (
        "data_batch_4.bin",
        "014e562d6e23c72197cc727519169a60359f5eccd8945ad5a09d710285ff4e48",
    ),
    (
        "data_batch_5.bin",
        "755304fc0b379caeae8c14f0dac912fbc7d6cd469eb67a1029a08a39453a9add",
    ),
    (
        "test_batch.bin",
        "8e2eb146ae340b09e24670f29cabc6326dba54da8789dab6768acf480273f65b",
    ),
];

/// Hashes decompressed file contents and warns on an unexpected digest.
pub(crate) fn checksum(name: &str, bytes: &[u8]) -> (String, String) {
    let digest: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
    let base = name.trim_end_matches(".gz");
    if let Some((_, want)) = KNOWN_CHECKSUMS.iter().find(|(n, _)| *n == base) {
        if *want != digest {
            log::warn!("{name}: sha256 {digest} differs from the reference {want}");
        }
    }
    (name.to_string(), digest)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
