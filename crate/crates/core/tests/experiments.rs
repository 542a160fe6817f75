mod common;

use std::fs;
use std::path::Path;

use lottery_core::experiments::{compare, export_curves, run, run::MANIFEST, RunConfig};
use lottery_core::policies::PolicyKind;
use lottery_core::Error;

fn tiny_config(data: &Path, out: &Path) -> RunConfig {
    let text = format!(
        "preset = \"mnist_dense\"\nwidth = 16\nhidden_layers = 2\ncycles = 2\nepochs_per_cycle = 1\n\
         batch_size = 32\nsparsity = 0.5\ndataset_dir = {:?}\noutput_dir = {:?}\n",
        data.to_str().unwrap(),
        out.to_str().unwrap()
    );
    RunConfig::from_toml_str(&text, &[]).unwrap()
}

#[test]
fn full_pipeline_is_reproducible_from_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("mnist");
    common::write_synthetic_mnist(&data, 400, 100, 7);
    let a_dir = tmp.path().join("a");
    let summary = run(&tiny_config(&data, &a_dir)).unwrap();
    assert_eq!(summary.outcomes.len(), 2);
    for name in ["manifest.toml", "run_info.json", "comparison.json"] {
        assert!(a_dir.join(name).is_file(), "{name}");
    }
    for policy in ["weight_reset", "structure_growing"] {
        for name in [
            "metrics.csv",
            "timing.csv",
            "cycles.json",
            "final.ckpt",
            "candidate.ckpt",
        ] {
            assert!(a_dir.join(policy).join(name).is_file(), "{policy}/{name}");
        }
    }
    let wr = &summary.outcomes[0];
    assert_eq!(wr.policy, PolicyKind::WeightReset);
    assert!(wr.control.is_some());
    assert!(summary.outcomes[1].control.is_none());

    // Re-run from the manifest into another directory.
    let b_dir = tmp.path().join("b");
    let again = RunConfig::from_file(
        &a_dir.join(MANIFEST),
        &[("output_dir".into(), format!("{:?}", b_dir.to_str().unwrap()))],
    )
    .unwrap();
    run(&again).unwrap();
    for policy in ["weight_reset", "structure_growing"] {
        for name in ["metrics.csv", "cycles.json", "final.ckpt", "candidate.ckpt"] {
            let a = fs::read(a_dir.join(policy).join(name)).unwrap();
            let b = fs::read(b_dir.join(policy).join(name)).unwrap();
            assert!(a == b, "{policy}/{name} differs");
        }
    }

    let c = compare(&a_dir, &b_dir).unwrap();
    for d in &c.differences {
        assert!(d.accuracy_delta.iter().all(|&x| x == 0.0));
        assert!(d.event_drop_delta_pp.iter().all(|&x| x == 0.0));
    }
    assert!(c.verdict.is_some());

    let files = export_curves(&a_dir).unwrap();
    assert_eq!(files.len(), 8);
    let metrics = fs::read_to_string(a_dir.join("weight_reset/metrics.csv")).unwrap();
    let acc = fs::read_to_string(a_dir.join("curves/weight_reset_accuracy_validation.csv")).unwrap();
    assert_eq!(acc.lines().count(), metrics.lines().count());
    for line in acc.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn invalid_config_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let text = format!("cycles = 0\nbogus = 1\noutput_dir = {:?}\n", out.to_str().unwrap());
    let Err(Error::Config(msgs)) = RunConfig::from_toml_str(&text, &[]) else {
        panic!("config accepted");
    };
    assert_eq!(msgs.len(), 2);
    assert!(!out.exists());
}

#[test]
fn missing_dataset_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&tmp.path().join("absent"), &tmp.path().join("out"));
    assert!(matches!(run(&cfg), Err(Error::Format { .. })));
}

#[test]
fn compare_rejects_mismatched_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("mnist");
    common::write_synthetic_mnist(&data, 200, 50, 8);
    let mut cfg = tiny_config(&data, &tmp.path().join("a"));
    cfg.cycles = 1;
    cfg.verify = false;
    cfg.control = false;
    run(&cfg).unwrap();
    let b = tmp.path().join("b");
    cfg.output_dir = b.clone();
    cfg.seed = 7;
    run(&cfg).unwrap();
    assert!(matches!(compare(&tmp.path().join("a"), &b), Err(Error::Comparison(_))));
    assert!(matches!(
        compare(&tmp.path().join("a"), tmp.path()),
        Err(Error::Comparison(_))
    ));
}
