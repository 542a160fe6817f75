//! MNIST in IDX format, optionally gzip-compressed.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{checksum, read_file, Dataset, Normalization};
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_MEAN: f32 = 0.1307;
pub const MNIST_STD: f32 = 0.3081;

/// A parsed IDX file with unsigned-byte payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

fn format_err(file: &str, detail: impl Into<String>) -> Error {
    Error::Format {
        file: file.to_string(),
        detail: detail.into(),
    }
}

/// Parses an IDX byte stream, requiring `expected_magic`.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, file: &str) -> Result<IdxFile> {
    if bytes.len() < 4 {
        return Err(format_err(file, "shorter than the IDX header"));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if magic != expected_magic {
        return Err(format_err(
            file,
            format!("magic {magic:#010x}, expected {expected_magic:#010x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(format_err(file, "truncated dimension header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(file, "dimension product overflows"))?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(format_err(
            file,
            format!(
                "payload has {} bytes, dimensions {dims:?} need {expected}",
                payload.len()
            ),
        ));
    }
    Ok(IdxFile {
        magic,
        dims,
        payload: payload.to_vec(),
    })
}

/// Serializes back to IDX; inverse of [`parse_idx`].
pub fn write_idx(idx: &IdxFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * idx.dims.len() + idx.payload.len());
    out.extend_from_slice(&idx.magic.to_be_bytes());
    for &d in &idx.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&idx.payload);
    out
}

fn decompress(bytes: Vec<u8>, file: &str) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format_err(file, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Finds `stem` in `dir` under the usual spellings, plain or `.gz`.
fn locate(dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    let dotted = stem.replacen("-idx", ".idx", 1);
    for name in [
        stem.to_string(),
        format!("{stem}.gz"),
        dotted.clone(),
        format!("{dotted}.gz"),
    ] {
        let p = dir.join(&name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(format_err(
        &dir.join(stem).display().to_string(),
        "file not found (plain or .gz)",
    ))
}

/// Reads and parses one IDX file, returning it with its checksum record.
pub fn read_idx_file(path: &Path, expected_magic: u32) -> Result<(IdxFile, (String, String))> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bytes = decompress(read_file(path)?, &name)?;
    let sum = checksum(&name, &bytes);
    Ok((parse_idx(&bytes, expected_magic, &name)?, sum))
}

fn load_pair(dir: &Path, images: &str, labels: &str, sums: &mut Vec<(String, String)>) -> Result<(Vec<u8>, Vec<u8>)> {
    let (img, s1) = read_idx_file(&locate(dir, images)?, IDX_IMAGES_MAGIC)?;
    let (lab, s2) = read_idx_file(&locate(dir, labels)?, IDX_LABELS_MAGIC)?;
    sums.extend([s1, s2]);
    if img.dims.len() != 3 || img.dims[1..] != [28, 28] {
        return Err(format_err(
            images,
            format!("expected N x 28 x 28 images, got {:?}", img.dims),
        ));
    }
    if lab.dims[0] != img.dims[0] {
        return Err(format_err(
            labels,
            format!("{} labels for {} images", lab.dims[0], img.dims[0]),
        ));
    }
    if let Some(bad) = lab.payload.iter().find(|&&l| l >= 10) {
        return Err(format_err(labels, format!("label {bad} outside [0, 10)")));
    }
    Ok((img.payload, lab.payload))
}

/// Loads the four standard MNIST files from `dir`.
pub fn load_mnist(dir: &Path) -> Result<Dataset> {
    let mut sums = Vec::new();
    let train = load_pair(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", &mut sums)?;
    let test = load_pair(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", &mut sums)?;
    let norm = Normalization {
        mean: vec![MNIST_MEAN],
        std: vec![MNIST_STD],
    };
    let mut ds = Dataset::new("mnist", vec![28, 28], 10, norm, train, test)?;
    ds.checksums = sums;
    Ok(ds)
}
