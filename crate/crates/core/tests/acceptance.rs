//! End-to-end acceptance checks on the real MNIST and CIFAR-10 files.
//!
//! Prints one PASS/FAIL line per criterion and exits nonzero on any FAIL.
//! Expect roughly twenty minutes on one core.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lottery_core::data::{load_cifar10, load_mnist, read_idx_file, write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
use lottery_core::experiments::{run::MANIFEST, run_observed, Preset, RunConfig, RunSummary};
use lottery_core::model::{cifar_resnet, is_spanning_subnetwork, mnist_dense, Architecture, Checkpoint, LayerSpec};
use lottery_core::model::{MaskSet, WeightStore};
use lottery_core::parallel::Execution;
use lottery_core::policies::{CycleObserver, PolicyKind};
use lottery_core::pruner::{level_prune, PruneSpec};
use lottery_core::rng::SeededRng;
use lottery_core::Tensor;

struct Line {
    id: usize,
    pass: bool,
    detail: String,
}

/// Records spanning checks after every prune and, for weight reset, the
/// rewind checks after every event.
#[derive(Default)]
struct Recorder {
    prunes: usize,
    spanning_failures: Vec<usize>,
    resets: usize,
    reset_failures: Vec<String>,
    check_reset: bool,
}

impl CycleObserver for Recorder {
    fn after_prune(&mut self, cycle: usize, parent: &Checkpoint, pruned: &Checkpoint) {
        self.prunes += 1;
        if !is_spanning_subnetwork(
            (&pruned.architecture, &pruned.masks),
            (&parent.architecture, &parent.masks),
        ) {
            self.spanning_failures.push(cycle);
        }
    }

    fn after_event(&mut self, cycle: usize, _before: &Checkpoint, after: &Checkpoint) {
        if !self.check_reset {
            return;
        }
        self.resets += 1;
        let w0 = after.initial_weights.as_ref().expect("omega^0 recorded");
        for (i, params) in after.weights.layers.iter().enumerate() {
            for (j, w) in params.iter().enumerate() {
                let mask = after.masks.layers[i][j].as_ref();
                for (k, (&x, &x0)) in w.data().iter().zip(w0.layers[i][j].data()).enumerate() {
                    let live = mask.is_none_or(|m| m.data()[k] != 0.0);
                    let ok = if live { x.to_bits() == x0.to_bits() } else { x == 0.0 };
                    if !ok {
                        self.reset_failures.push(format!(
                            "cycle {cycle} layer {i} param {j} index {k}: {x} vs omega^0 {x0}"
                        ));
                        return;
                    }
                }
            }
        }
    }
}

fn data_root() -> PathBuf {
    common::data_root()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn preset(p: Preset, out: &Path) -> RunConfig {
    let mut c = RunConfig::preset(p);
    c.output_dir = out.to_path_buf();
    c.dataset_dir = Some(match p {
        Preset::CifarResnet => common::cifar_dir(),
        _ => common::mnist_dir(),
    });
    c
}

fn criterion_1() -> Line {
    let t = Instant::now();
    let dense = common::gradcheck_smooth(&mnist_dense(2, 8), 4, 1e-3, 1e-2, 1);
    let resnet = common::gradcheck_smooth(&cifar_resnet(2, 2, 1, 4).unwrap(), 1, 1e-3, 1e-2, 1);
    let secs = t.elapsed().as_secs_f64();
    Line {
        id: 1,
        pass: dense.pass_rate() >= 0.99 && resnet.pass_rate() >= 0.99 && secs < 60.0,
        detail: format!(
            "dense {}/{} params within 1e-2 (batch seed {}), residual {}/{} (batch seed {}), {secs:.1}s",
            dense.passed, dense.checked, dense.seed, resnet.passed, resnet.checked, resnet.seed
        ),
    }
}

fn sort_oracle(w: &[f32], m: &[f32], remove: usize) -> Vec<f32> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| {
        (m[a] != 0.0)
            .cmp(&(m[b] != 0.0))
            .then(w[a].abs().total_cmp(&w[b].abs()))
            .then(a.cmp(&b))
    });
    let mut out = vec![1.0; w.len()];
    for &i in &idx[..remove] {
        out[i] = 0.0;
    }
    out
}

fn criterion_2() -> Line {
    let t = Instant::now();
    let mut rng = SeededRng::new(2024);
    let mut failures = Vec::new();
    for case in 0..100 {
        let n = 1 + rng.below(10_000) as usize;
        let s = f64::from(rng.next_f32()) * 0.99;
        let arch = Architecture::new(vec![n], 2, vec![LayerSpec::linear(n, 1, true), LayerSpec::output(1, 2)]).unwrap();
        let coarse = case % 2 == 0;
        let w: Vec<f32> = (0..n)
            .map(|_| {
                if coarse {
                    (rng.below(64) as f32 - 32.0) / 8.0
                } else {
                    rng.uniform(-1.0, 1.0)
                }
            })
            .collect();
        let mut weights = WeightStore::zeros_like(&arch);
        weights.layers[0][0] = Tensor::new(&[n, 1], w.clone()).unwrap();
        let masks = MaskSet::dense(&arch);
        let spec = PruneSpec::new(s, vec![0]).unwrap();
        let remove = spec.removal_count(n);
        if remove >= n {
            continue;
        }
        let out = level_prune(Execution::Parallel, &arch, &mut weights, &masks, &spec).unwrap();
        let got = out.layers[0][0].as_ref().unwrap().data();
        let zeros = got.iter().filter(|&&v| v == 0.0).count();
        if got != &sort_oracle(&w, &vec![1.0; n], remove)[..] || zeros != remove {
            failures.push(case);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Line {
        id: 2,
        pass: failures.is_empty(),
        detail: format!("100 layers up to 10000 weights, mismatches {failures:?}, {secs:.2}s"),
    }
}

struct MnistResults {
    a: RunSummary,
    reset: Recorder,
    growing: Recorder,
    rerun_identical: Result<(), String>,
    secs: f64,
}

fn mnist_runs() -> Result<MnistResults, String> {
    let t = Instant::now();
    let a_dir = scratch("mnist_a");
    let mut reset = Recorder {
        check_reset: true,
        ..Recorder::default()
    };
    let mut growing = Recorder::default();
    let a = run_observed(&preset(Preset::MnistDense, &a_dir), &mut reset, &mut growing).map_err(|e| e.to_string())?;

    let b_dir = scratch("mnist_b");
    let from_manifest = RunConfig::from_file(
        &a_dir.join(MANIFEST),
        &[("output_dir".into(), format!("{:?}", b_dir.to_string_lossy()))],
    )
    .map_err(|e| e.to_string())?;
    lottery_core::experiments::run(&from_manifest).map_err(|e| e.to_string())?;
    let mut rerun_identical = Ok(());
    for policy in ["weight_reset", "structure_growing"] {
        for name in ["metrics.csv", "final.ckpt", "candidate.ckpt", "verify_metrics.csv"] {
            let (pa, pb) = (a_dir.join(policy).join(name), b_dir.join(policy).join(name));
            if !pa.exists() {
                continue;
            }
            if fs::read(&pa).ok() != fs::read(&pb).ok() {
                rerun_identical = Err(format!("{policy}/{name} differs"));
            }
        }
    }
    Ok(MnistResults {
        a,
        reset,
        growing,
        rerun_identical,
        secs: t.elapsed().as_secs_f64(),
    })
}

struct CifarResults {
    summary: RunSummary,
    observers: [Recorder; 2],
    secs: f64,
}

fn cifar_runs() -> Result<CifarResults, String> {
    let t = Instant::now();
    let mut reset = Recorder::default();
    let mut growing = Recorder::default();
    let summary = run_observed(
        &preset(Preset::CifarResnet, &scratch("cifar")),
        &mut reset,
        &mut growing,
    )
    .map_err(|e| e.to_string())?;
    Ok(CifarResults {
        summary,
        observers: [reset, growing],
        secs: t.elapsed().as_secs_f64(),
    })
}

fn outcome(s: &RunSummary, kind: PolicyKind) -> &lottery_core::policies::PolicyOutcome {
    s.outcomes.iter().find(|o| o.policy == kind).expect("policy ran")
}

fn final_accuracy(s: &RunSummary, kind: PolicyKind) -> f64 {
    outcome(s, kind).reports.last().map_or(0.0, |r| r.pre_prune_accuracy)
}

/// Growth events of one run: (count, worst logit change, worst accuracy change in pp).
fn growth_events(s: &RunSummary) -> (usize, f64, f64) {
    let reports = &outcome(s, PolicyKind::StructureGrowing).reports;
    let logit = reports
        .iter()
        .map(|r| r.growth_max_logit_change.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let acc = reports.iter().map(|r| r.event_drop_pp.abs()).fold(0.0, f64::max);
    (reports.len(), logit, acc)
}

fn criterion_10() -> Line {
    let t = Instant::now();
    let (m, c) = (common::mnist_dir(), common::cifar_dir());
    let mut problems = Vec::new();
    if let Err(e) = load_mnist(&m) {
        problems.push(format!("genuine MNIST rejected: {e}"));
    }
    if let Err(e) = load_cifar10(&c) {
        problems.push(format!("genuine CIFAR-10 rejected: {e}"));
    }
    if problems.is_empty() {
        for (name, magic) in [
            (common::TRAIN_IMAGES, IDX_IMAGES_MAGIC),
            (common::TRAIN_LABELS, IDX_LABELS_MAGIC),
            (common::TEST_IMAGES, IDX_IMAGES_MAGIC),
            (common::TEST_LABELS, IDX_LABELS_MAGIC),
        ] {
            let path = m.join(name);
            match (fs::read(&path), read_idx_file(&path, magic)) {
                (Ok(raw), Ok((idx, _))) if write_idx(&idx) == raw => {}
                _ => problems.push(format!("{name} does not re-serialize byte-identically")),
            }
        }
        for corpus in common::corpora() {
            let src = match corpus.format {
                common::Format::Mnist => &m,
                common::Format::Cifar => &c,
            };
            if !common::corpus_rejected(src, &corpus) {
                problems.push(format!("accepted mutated corpus: {}", corpus.name));
            }
        }
    }
    Line {
        id: 10,
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!(
                "genuine files accepted, 20/20 mutated corpora rejected, MNIST payloads re-serialize exactly, {:.1}s",
                t.elapsed().as_secs_f64()
            )
        } else {
            problems.join("; ")
        },
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    eprintln!("data root: {}", data_root().display());
    let mut lines = vec![criterion_1(), criterion_2()];

    eprintln!("running the MNIST preset twice (both policies)...");
    let mnist = mnist_runs();
    eprintln!("running the CIFAR-10 desk preset (both policies)...");
    let cifar = cifar_runs();

    // 3: weight-reset soundness.
    lines.push(match &mnist {
        Ok(r) => Line {
            id: 3,
            pass: r.reset.resets == 5 && r.reset.reset_failures.is_empty(),
            detail: format!(
                "{} resets checked bitwise against omega^0{}",
                r.reset.resets,
                r.reset
                    .reset_failures
                    .first()
                    .map_or(String::new(), |f| format!("; first failure: {f}"))
            ),
        },
        Err(e) => Line {
            id: 3,
            pass: false,
            detail: e.clone(),
        },
    });

    // 4: growth function preservation, both presets.
    lines.push(match (&mnist, &cifar) {
        (Ok(m), Ok(c)) => {
            let (mn, ml, ma) = growth_events(&m.a);
            let (cn, cl, ca) = growth_events(&c.summary);
            Line {
                id: 4,
                pass: ml < 1e-5 && cl < 1e-5 && ma < 0.1 && ca < 0.1,
                detail: format!(
                    "MNIST {mn} growths: max logit change {ml:.2e}, max accuracy change {ma:.3} pp; \
                     CIFAR {cn} growths: {cl:.2e}, {ca:.3} pp"
                ),
            }
        }
        (m, c) => Line {
            id: 4,
            pass: false,
            detail: format!("{:?} {:?}", m.as_ref().err(), c.as_ref().err()),
        },
    });

    // 5: spanning subgraphs after every prune, both presets.
    lines.push(match (&mnist, &cifar) {
        (Ok(m), Ok(c)) => {
            let recs = [&m.reset, &m.growing, &c.observers[0], &c.observers[1]];
            let prunes: usize = recs.iter().map(|r| r.prunes).sum();
            let bad: Vec<_> = recs.iter().flat_map(|r| r.spanning_failures.clone()).collect();
            Line {
                id: 5,
                pass: bad.is_empty() && prunes == 2 * 5 + 2 * 7,
                detail: format!("{prunes} post-prune checkpoints checked, failing cycles {bad:?}"),
            }
        }
        (m, c) => Line {
            id: 5,
            pass: false,
            detail: format!("{:?} {:?}", m.as_ref().err(), c.as_ref().err()),
        },
    });

    // 6: MNIST desk-scale performance.
    lines.push(match &mnist {
        Ok(r) => {
            let wr = outcome(&r.a, PolicyKind::WeightReset);
            let baseline = wr.reference_accuracy;
            let g = final_accuracy(&r.a, PolicyKind::StructureGrowing);
            let w = final_accuracy(&r.a, PolicyKind::WeightReset);
            let direction = r
                .a
                .comparison
                .as_ref()
                .and_then(|c| c.verdict.as_ref())
                .map_or("missing".to_string(), |v| format!("{:?}, gap {:+.2} pp", v.higher_final_accuracy, v.gap_pp));
            Line {
                id: 6,
                pass: baseline >= 0.95 && g >= 0.95 && g >= w - 0.005,
                detail: format!(
                    "dense baseline {baseline:.4}; growing final {g:.4}, reset final {w:.4}; compare verdict: {direction}; {:.0}s for both runs",
                    r.secs
                ),
            }
        }
        Err(e) => Line { id: 6, pass: false, detail: e.clone() },
    });

    // 7: CIFAR desk-scale sanity.
    lines.push(match &cifar {
        Ok(c) => {
            let w = final_accuracy(&c.summary, PolicyKind::WeightReset);
            let g = final_accuracy(&c.summary, PolicyKind::StructureGrowing);
            let (n, logit, acc) = growth_events(&c.summary);
            Line {
                id: 7,
                pass: w >= 0.25 && g >= 0.25 && logit < 1e-5 && acc < 0.1,
                detail: format!(
                    "subset 0.2: reset final {w:.4}, growing final {g:.4}; {n} growths within bounds: {}; {:.0}s",
                    logit < 1e-5 && acc < 0.1,
                    c.secs
                ),
            }
        }
        Err(e) => Line {
            id: 7,
            pass: false,
            detail: e.clone(),
        },
    });

    // 8: winning-ticket verification and the random re-init control.
    lines.push(match &mnist {
        Ok(r) => {
            let wr = outcome(&r.a, PolicyKind::WeightReset);
            match (&wr.verification, &wr.control) {
                (Some(v), Some(c)) => {
                    let ticket = v.retrained_accuracy;
                    let control = c.retrained_accuracy;
                    let signature = if control < ticket {
                        "control lower"
                    } else if control == ticket {
                        "control ties (reported, not failed)"
                    } else {
                        "control higher"
                    };
                    Line {
                        id: 8,
                        pass: v.passed && control <= ticket,
                        detail: format!(
                            "ratio {:.4} <= {:.4}: {}; Acc' {ticket:.4} vs Acc* {:.4} - 1.0 pp: {}; control Acc' {control:.4}: {signature}",
                            v.compression_ratio, v.target_compression, v.compression_ok, v.reference_accuracy, v.accuracy_ok
                        ),
                    }
                }
                _ => Line { id: 8, pass: false, detail: "verification or control missing".into() },
            }
        }
        Err(e) => Line { id: 8, pass: false, detail: e.clone() },
    });

    // 9: determinism from the manifest.
    lines.push(match &mnist {
        Ok(r) => Line {
            id: 9,
            pass: r.rerun_identical.is_ok(),
            detail: match &r.rerun_identical {
                Ok(()) => "metrics logs and checkpoints of both policies byte-identical across two runs".into(),
                Err(e) => e.clone(),
            },
        },
        Err(e) => Line {
            id: 9,
            pass: false,
            detail: e.clone(),
        },
    });

    lines.push(criterion_10());

    let mut failed = 0;
    for l in &lines {
        let verdict = if l.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!l.pass);
        println!("criterion {:>2}: {verdict}  {}", l.id, l.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
