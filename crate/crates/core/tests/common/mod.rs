#![allow(dead_code)]

use std::path::PathBuf;

use lottery_core::autograd::Graph;
use lottery_core::data::{Dataset, Normalization};
use lottery_core::model::{build_network, forward_graph, Architecture, MaskSet, WeightStore};
use lottery_core::rng::SeededRng;
use lottery_core::Tensor;

/// Dataset root: `$LOTTERY_DATA_DIR`, else `<workspace>/data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("LOTTERY_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn mnist_dir() -> PathBuf {
    data_root().join("mnist")
}

pub fn cifar_dir() -> PathBuf {
    data_root().join("cifar-10-batches-bin")
}

/// 4x4 images whose class is the brightest row.
pub fn quadrant_data(n: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let label = rng.below(4) as u8;
        for p in 0..16 {
            let bright = p / 4 == usize::from(label);
            images.push(if bright {
                150 + rng.below(100) as u8
            } else {
                rng.below(120) as u8
            });
        }
        labels.push(label);
    }
    let norm = Normalization {
        mean: vec![0.3],
        std: vec![0.3],
    };
    let split = n * 4 / 5;
    Dataset::new(
        "quadrants",
        vec![16],
        4,
        norm,
        (images[..split * 16].to_vec(), labels[..split].to_vec()),
        (images[split * 16..].to_vec(), labels[split..].to_vec()),
    )
    .unwrap()
}

pub struct GradCheck {
    pub seed: u64,
    pub checked: usize,
    pub passed: usize,
    /// Parameters whose +-h probe changed some ReLU's active set.
    pub kinked: usize,
    pub worst: f64,
}

impl GradCheck {
    pub fn pass_rate(&self) -> f64 {
        self.passed as f64 / self.checked as f64
    }
}

fn loss(arch: &Architecture, w: &WeightStore, m: &MaskSet, x: &Tensor, labels: &[usize]) -> (f64, Vec<bool>) {
    let mut g = Graph::new();
    let pass = forward_graph(&mut g, arch, w, m, x.clone(), false).unwrap();
    let l = g.softmax_cross_entropy(pass.logits, labels).unwrap();
    (g.loss_f64(l).unwrap(), g.relu_pattern())
}

/// Compares backprop gradients of the mean cross-entropy on a random batch
/// against central differences with step `h`, for every parameter. Relative
/// error uses the denominator `max(|analytic|, |numeric|, 1e-3)`.
pub fn gradcheck(arch: &Architecture, batch: usize, h: f32, tol: f64, seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let (weights, masks) = build_network(arch, &mut rng).unwrap();
    let n: usize = arch.input_shape.iter().product();
    let mut shape = vec![batch];
    shape.extend(&arch.input_shape);
    let x = Tensor::new(&shape, (0..batch * n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
    let labels: Vec<usize> = (0..batch).map(|_| rng.below(arch.classes as u64) as usize).collect();

    let mut g = Graph::new();
    let pass = forward_graph(&mut g, arch, &weights, &masks, x.clone(), true).unwrap();
    let l = g.softmax_cross_entropy(pass.logits, &labels).unwrap();
    let base = g.relu_pattern();
    g.backward(l).unwrap();

    let mut out = GradCheck {
        seed,
        checked: 0,
        passed: 0,
        kinked: 0,
        worst: 0.0,
    };
    let mut probe = weights.clone();
    for (i, leaves) in pass.params.iter().enumerate() {
        for (j, &leaf) in leaves.iter().enumerate() {
            let analytic = g.take_grad(leaf);
            for k in 0..analytic.len() {
                let orig = weights.layers[i][j].data()[k];
                probe.layers[i][j].data_mut()[k] = orig + h;
                let (up, p_up) = loss(arch, &probe, &masks, &x, &labels);
                probe.layers[i][j].data_mut()[k] = orig - h;
                let (down, p_down) = loss(arch, &probe, &masks, &x, &labels);
                probe.layers[i][j].data_mut()[k] = orig;
                if p_up != base || p_down != base {
                    out.kinked += 1;
                }
                // The step actually taken, after f32 rounding.
                let step = f64::from(orig + h) - f64::from(orig - h);
                let numeric = (up - down) / step;
                let a = f64::from(analytic.data()[k]);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                out.checked += 1;
                if rel < tol {
                    out.passed += 1;
                }
                out.worst = out.worst.max(rel);
            }
        }
    }
    out
}

/// [`gradcheck`] on the first batch, from `seed` upward, on which no probe
/// crosses a ReLU kink (where central differences are meaningless).
pub fn gradcheck_smooth(arch: &Architecture, batch: usize, h: f32, tol: f64, seed: u64) -> GradCheck {
    for s in seed..seed + 200 {
        let r = gradcheck(arch, batch, h, tol, s);
        if r.kinked == 0 {
            return r;
        }
    }
    panic!("no kink-free batch found from seed {seed}");
}

pub enum Format {
    Mnist,
    Cifar,
}

/// A dataset directory with one file replaced by damaged bytes.
pub struct Corpus {
    pub name: &'static str,
    pub format: Format,
    pub file: &'static str,
    pub mutate: fn(&mut Vec<u8>),
}

fn set_be(bytes: &mut [u8], at: usize, v: u32) {
    bytes[at..at + 4].copy_from_slice(&v.to_be_bytes());
}

fn get_be(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

pub fn corpora() -> Vec<Corpus> {
    use Format::*;
    vec![
        Corpus {
            name: "images: wrong element type",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| b[2] = 0x09,
        },
        Corpus {
            name: "images: rank 2 in magic",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| b[3] = 0x02,
        },
        Corpus {
            name: "images: nonzero magic prefix",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| b[0] = 0x01,
        },
        Corpus {
            name: "images: label magic",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| b[3] = 0x01,
        },
        Corpus {
            name: "images: empty",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| b.clear(),
        },
        Corpus {
            name: "images: 3 bytes",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| b.truncate(3),
        },
        Corpus {
            name: "images: cut inside dims",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| b.truncate(10),
        },
        Corpus {
            name: "images: count + 1",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| {
                let n = get_be(b, 4);
                set_be(b, 4, n + 1)
            },
        },
        Corpus {
            name: "images: count - 1",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| {
                let n = get_be(b, 4);
                set_be(b, 4, n - 1)
            },
        },
        Corpus {
            name: "images: 27 rows",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| set_be(b, 8, 27),
        },
        Corpus {
            name: "images: overflowing dims",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| {
                set_be(b, 4, u32::MAX);
                set_be(b, 8, u32::MAX);
                set_be(b, 12, u32::MAX)
            },
        },
        Corpus {
            name: "images: 14 x 56",
            format: Mnist,
            file: TRAIN_IMAGES,
            mutate: |b| {
                set_be(b, 8, 14);
                set_be(b, 12, 56)
            },
        },
        Corpus {
            name: "labels: fewer than images",
            format: Mnist,
            file: TRAIN_LABELS,
            mutate: |b| {
                let n = get_be(b, 4);
                set_be(b, 4, n - 1);
                b.pop();
            },
        },
        Corpus {
            name: "labels: image magic",
            format: Mnist,
            file: TEST_LABELS,
            mutate: |b| b[3] = 0x03,
        },
        Corpus {
            name: "images: payload one byte short",
            format: Mnist,
            file: TEST_IMAGES,
            mutate: |b| {
                b.pop();
            },
        },
        Corpus {
            name: "labels: label 10",
            format: Mnist,
            file: TRAIN_LABELS,
            mutate: |b| b[8] = 10,
        },
        Corpus {
            name: "cifar: short last record",
            format: Cifar,
            file: "data_batch_1.bin",
            mutate: |b| {
                b.pop();
            },
        },
        Corpus {
            name: "cifar: trailing byte",
            format: Cifar,
            file: "data_batch_3.bin",
            mutate: |b| b.push(0),
        },
        Corpus {
            name: "cifar: label 10",
            format: Cifar,
            file: "test_batch.bin",
            mutate: |b| b[0] = 10,
        },
        Corpus {
            name: "cifar: empty batch",
            format: Cifar,
            file: "data_batch_5.bin",
            mutate: |b| b.clear(),
        },
    ]
}

/// Loads `src` with `corpus` applied in a scratch copy (other files are
/// symlinked). True when the loader reports a format error.
pub fn corpus_rejected(src: &std::path::Path, corpus: &Corpus) -> bool {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        let target = dir.path().join(&name);
        if name.to_str() == Some(corpus.file) {
            let mut bytes = std::fs::read(entry.path()).unwrap();
            (corpus.mutate)(&mut bytes);
            std::fs::write(&target, bytes).unwrap();
        } else {
            std::os::unix::fs::symlink(entry.path(), &target).unwrap();
        }
    }
    let result = match corpus.format {
        Format::Mnist => lottery_core::data::load_mnist(dir.path()).map(|_| ()),
        Format::Cifar => lottery_core::data::load_cifar10(dir.path()).map(|_| ()),
    };
    matches!(result, Err(lottery_core::Error::Format { .. }))
}

/// Small MNIST-format set: class `c` lights a 6x6 patch at one of ten spots.
pub fn write_synthetic_mnist(dir: &std::path::Path, train: usize, test: usize, seed: u64) {
    use lottery_core::data::{write_idx, IdxFile, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = SeededRng::new(seed);
    let mut make = |n: usize, images: &str, labels: &str| {
        let mut px = Vec::with_capacity(n * 784);
        let mut lb = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.below(10) as usize;
            let (r0, c0) = (2 + (c / 5) * 13, 1 + (c % 5) * 5);
            for r in 0..28 {
                for col in 0..28 {
                    let on = (r0..r0 + 6).contains(&r) && (c0..c0 + 6).contains(&col);
                    px.push(if on {
                        160 + rng.below(96) as u8
                    } else {
                        rng.below(60) as u8
                    });
                }
            }
            lb.push(c as u8);
        }
        let img = IdxFile {
            magic: IDX_IMAGES_MAGIC,
            dims: vec![n, 28, 28],
            payload: px,
        };
        let lab = IdxFile {
            magic: IDX_LABELS_MAGIC,
            dims: vec![n],
            payload: lb,
        };
        std::fs::write(dir.join(images), write_idx(&img)).unwrap();
        std::fs::write(dir.join(labels), write_idx(&lab)).unwrap();
    };
    make(train, TRAIN_IMAGES, TRAIN_LABELS);
    make(test, TEST_IMAGES, TEST_LABELS);
}

/// Small CIFAR-10 binary set: the label sets one channel's brightness.
pub fn write_synthetic_cifar(dir: &std::path::Path, per_file: usize, seed: u64) {
    use lottery_core::data::{CIFAR_TEST_FILE, CIFAR_TRAIN_FILES};
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = SeededRng::new(seed);
    for name in CIFAR_TRAIN_FILES.iter().chain([&CIFAR_TEST_FILE]) {
        let mut bytes = Vec::new();
        for _ in 0..per_file {
            let label = rng.below(10) as u8;
            bytes.push(label);
            for ch in 0..3u8 {
                let base = if ch == label % 3 { 25 * label } else { 0 };
                bytes.extend((0..1024).map(|_| base.saturating_add(rng.below(40) as u8)));
            }
        }
        std::fs::write(dir.join(name), bytes).unwrap();
    }
}
