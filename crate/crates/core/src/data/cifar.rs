//! CIFAR-10, binary version: records of one label byte and 3072 pixel
//! bytes (red plane, green plane, blue plane; each 32x32 row-major).

use std::path::Path;

use super::{checksum, read_file, Dataset, Normalization};
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};

pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;
pub const CIFAR_MEAN: [f32; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR_STD: [f32; 3] = [0.2470, 0.2435, 0.2616];
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

/// Splits one batch file into `(pixels, labels)`.
pub fn parse_cifar_batch(bytes: &[u8], file: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::Format {
            file: file.to_string(),
            detail: format!(
                "length {} is not a positive multiple of the {CIFAR_RECORD_LEN}-byte record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD_LEN - 1));
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::Format {
                file: file.to_string(),
                detail: format!("record {i} has label {}", rec[0]),
            });
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((pixels, labels))
}

fn read_batches(dir: &Path, names: &[&str], sums: &mut Vec<(String, String)>) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for name in names {
        let bytes = read_file(&dir.join(name))?;
        sums.push(checksum(name, &bytes));
        let (p, l) = parse_cifar_batch(&bytes, name)?;
        pixels.extend(p);
        labels.extend(l);
    }
    Ok((pixels, labels))
}

pub fn load_cifar10(dir: &Path) -> Result<Dataset> {
    load_cifar10_with(dir, 1.0, 0)
}

/// Loads CIFAR-10, keeping a `subset_fraction` of the training split drawn
/// from the subset substream of `seed`.
pub fn load_cifar10_with(dir: &Path, subset_fraction: f64, seed: u64) -> Result<Dataset> {
    let mut sums = Vec::new();
    let train = read_batches(dir, &CIFAR_TRAIN_FILES, &mut sums)?;
    let test = read_batches(dir, &[CIFAR_TEST_FILE], &mut sums)?;
    let norm = Normalization {
        mean: CIFAR_MEAN.to_vec(),
        std: CIFAR_STD.to_vec(),
    };
    let mut ds = Dataset::new("cifar10", vec![3, 32, 32], 10, norm, train, test)?;
    ds.checksums = sums;
    ds.subset_train(subset_fraction, &mut SeededRng::substream(seed, rng::streams::SUBSET))?;
    Ok(ds)
}
