//! Checkpoints and their on-disk format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "LTCKPT\r\n"
//! version      u32
//! meta_len     u64
//! metadata     meta_len bytes of UTF-8 JSON (architecture, cycle,
//!              metrics cursor, rng state, Adam config and step counts)
//! count        u32       number of tensor records
//! records      count x { name_len u16, name, rank u8, dims u64 x rank,
//!                        values f32 x prod(dims) }
//! digest       32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! Tensor names are `w/<layer>/<param>`, `m/<layer>/<param>` (masks),
//! `w0/<layer>/<param>` (initial weights), `adam.m/...` and `adam.v/...`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::arch::Architecture;
use crate::model::network::{build_network, MaskSet, WeightStore};
use crate::optim::{AdamConfig, AdamState, Moments};
use crate::rng::{self, RngState, SeededRng};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"LTCKPT\r\n";
pub const FORMAT_VERSION: u32 = 1;

/// The unit of persistence: `(theta, omega, m)`, the `omega^0` record,
/// optimizer state, and position in the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub weights: WeightStore,
    pub masks: MaskSet,
    /// `omega^0`, extended with inserted values whenever a layer is grown.
    pub initial_weights: Option<WeightStore>,
    pub optimizer: AdamState,
    /// Position of the data-shuffle stream.
    pub rng: RngState,
    pub cycle: usize,
    pub metrics_cursor: usize,
}

impl Checkpoint {
    /// Builds the network from the `init` substream of `seed`, records
    /// `omega^0`, and positions the shuffle stream at its start.
    pub fn initialize(arch: &Architecture, seed: u64, adam: AdamConfig) -> Result<Self> {
        let mut init = SeededRng::substream(seed, rng::streams::INIT);
        let (weights, masks) = build_network(arch, &mut init)?;
        Ok(Self {
            architecture: arch.clone(),
            optimizer: AdamState::new(adam, &weights),
            initial_weights: Some(weights.clone()),
            weights,
            masks,
            rng: SeededRng::substream(seed, rng::streams::SHUFFLE).state(),
            cycle: 0,
            metrics_cursor: 0,
        })
    }

    pub fn dense_parameter_count(&self) -> usize {
        self.architecture.parameter_count()
    }

    pub fn compression_ratio(&self) -> f64 {
        crate::model::compression_ratio(&self.weights, &self.masks, self.dense_parameter_count())
    }

    pub fn surviving_parameters(&self) -> usize {
        crate::model::surviving_parameters(&self.weights, &self.masks)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Metadata {
            architecture: self.architecture.clone(),
            cycle: self.cycle,
            metrics_cursor: self.metrics_cursor,
            rng: self.rng,
            rng_algorithm: rng::ALGORITHM.to_string(),
            init_scheme: INIT_SCHEME.to_string(),
            adam: self.optimizer.config,
            adam_steps: self
                .optimizer
                .layers
                .iter()
                .map(|l| l.iter().map(|m| m.step).collect())
                .collect(),
            has_initial_weights: self.initial_weights.is_some(),
        };
        let meta = serde_json::to_vec(&meta).expect("metadata serializes");

        let mut records: Vec<(String, &[usize], &[f32])> = Vec::new();
        for (i, layer) in self.weights.layers.iter().enumerate() {
            for (j, t) in layer.iter().enumerate() {
                records.push((format!("w/{i}/{j}"), t.shape(), t.data()));
                if let Some(m) = self.masks.layers[i][j].as_ref() {
                    records.push((format!("m/{i}/{j}"), m.shape(), m.data()));
                }
                if let Some(w0) = &self.initial_weights {
                    let t0 = &w0.layers[i][j];
                    records.push((format!("w0/{i}/{j}"), t0.shape(), t0.data()));
                }
                let moments = &self.optimizer.layers[i][j];
                records.push((format!("adam.m/{i}/{j}"), t.shape(), &moments.first));
                records.push((format!("adam.v/{i}/{j}"), t.shape(), &moments.second));
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(records.len() as u32).to_le_bytes());
        for (name, shape, data) in records {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Persistence("not a checkpoint (bad magic bytes)".into()));
        }
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(Error::Persistence("truncated checkpoint".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader {
            bytes: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Persistence(format!(
                "format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Persistence("checksum mismatch (corrupt file)".into()));
        }
        let meta_len = r.u64()? as usize;
        let meta: Metadata =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Persistence(format!("metadata: {e}")))?;

        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Persistence("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(name, Tensor::new(&shape, data)?);
        }
        if r.pos != body.len() {
            return Err(Error::Persistence("trailing bytes after tensor records".into()));
        }

        let arch = meta.architecture;
        arch.validate()
            .map_err(|e| Error::Persistence(format!("stored architecture invalid: {e}")))?;
        let mut take = |name: String| {
            tensors
                .remove(&name)
                .ok_or_else(|| Error::Persistence(format!("missing tensor {name}")))
        };
        let mut weights = Vec::new();
        let mut masks = Vec::new();
        let mut initial = Vec::new();
        let mut moments = Vec::new();
        for (i, spec) in arch.layers.iter().enumerate() {
            let n = spec.param_names().len();
            let steps = meta
                .adam_steps
                .get(i)
                .filter(|s| s.len() == n)
                .ok_or_else(|| Error::Persistence(format!("optimizer steps missing for layer {i}")))?;
            let (mut w, mut m, mut w0, mut mo) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (j, &step) in steps.iter().enumerate() {
                w.push(take(format!("w/{i}/{j}"))?);
                m.push(if spec.is_masked(j) {
                    Some(take(format!("m/{i}/{j}"))?)
                } else {
                    None
                });
                if meta.has_initial_weights {
                    w0.push(take(format!("w0/{i}/{j}"))?);
                }
                mo.push(Moments {
                    first: take(format!("adam.m/{i}/{j}"))?.into_data(),
                    second: take(format!("adam.v/{i}/{j}"))?.into_data(),
                    step,
                });
            }
            weights.push(w);
            masks.push(m);
            initial.push(w0);
            moments.push(mo);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Persistence(format!("unexpected tensor {extra}")));
        }
        let weights = WeightStore { layers: weights };
        weights
            .check_shapes(&arch)
            .map_err(|e| Error::Persistence(e.to_string()))?;
        Ok(Self {
            architecture: arch,
            weights,
            masks: MaskSet { layers: masks },
            initial_weights: meta.has_initial_weights.then_some(WeightStore { layers: initial }),
            optimizer: AdamState {
                config: meta.adam,
                layers: moments,
            },
            rng: meta.rng,
            cycle: meta.cycle,
            metrics_cursor: meta.metrics_cursor,
        })
    }
}

pub const INIT_SCHEME: &str = "uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero biases";

#[derive(Serialize, Deserialize)]
struct Metadata {
    architecture: Architecture,
    cycle: usize,
    metrics_cursor: usize,
    rng: RngState,
    rng_algorithm: String,
    init_scheme: String,
    adam: AdamConfig,
    adam_steps: Vec<Vec<u64>>,
    has_initial_weights: bool,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Persistence("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
