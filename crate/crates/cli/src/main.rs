use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lottery_core::experiments::{self, PolicySelection, RunConfig};
use lottery_core::policies::PolicyKind;

/// Lottery-ticket experiments: weight reset versus structure growing.
#[derive(Parser)]
#[command(name = "lottery", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, prune and reset or grow for every configured cycle.
    Run(ConfigArgs),
    /// Write per-cycle curve files for a finished run.
    ExportCurves { run_dir: PathBuf },
    /// Summarize two finished runs side by side.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Also write the summary to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-run winning-ticket verification on a saved checkpoint.
    Verify {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the value recorded in the run's cycles.json.
        #[arg(long)]
        reference_accuracy: Option<f64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// A config file plus per-key overrides; every flag wins over the file.
#[derive(Args)]
struct ConfigArgs {
    /// Flat TOML config file (a run's manifest.toml works too).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// weight_reset, structure_growing or both.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cycles: Option<u64>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    epochs_per_cycle: Option<u64>,
    #[arg(long)]
    batch_size: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    accuracy_tolerance_pp: Option<f64>,
    /// A ratio in (0, 1], or "derived".
    #[arg(long)]
    target_compression: Option<String>,
    #[arg(long)]
    verify: Option<bool>,
    #[arg(long)]
    control: Option<bool>,
    #[arg(long)]
    growth_init: Option<String>,
    #[arg(long)]
    block_init: Option<String>,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    subset_fraction: Option<f64>,
    /// Complete protocol instead of the desk-scale defaults.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    early_stop_patience: Option<u64>,
    #[arg(long)]
    width: Option<u64>,
    #[arg(long)]
    hidden_layers: Option<u64>,
    #[arg(long)]
    input_stride: Option<u64>,
    #[arg(long)]
    execution: Option<String>,
}

fn quoted(s: &str) -> String {
    format!("{s:?}")
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| quoted(&p.to_string_lossy()));
        put("preset", self.preset.as_deref().map(quoted));
        put("policy", self.policy.as_deref().map(quoted));
        put("dataset", self.dataset.as_deref().map(quoted));
        put("seed", self.seed.map(|v| v.to_string()));
        put("cycles", self.cycles.map(|v| v.to_string()));
        put("sparsity", self.sparsity.map(|v| format!("{v:?}")));
        put("epochs_per_cycle", self.epochs_per_cycle.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("learning_rate", self.learning_rate.map(|v| format!("{v:?}")));
        put(
            "accuracy_tolerance_pp",
            self.accuracy_tolerance_pp.map(|v| format!("{v:?}")),
        );
        put(
            "target_compression",
            self.target_compression.as_deref().map(|v| match v.parse::<f64>() {
                Ok(r) => format!("{r:?}"),
                Err(_) => quoted(v),
            }),
        );
        put("verify", self.verify.map(|v| v.to_string()));
        put("control", self.control.map(|v| v.to_string()));
        put("growth_init", self.growth_init.as_deref().map(quoted));
        put("block_init", self.block_init.as_deref().map(quoted));
        put("dataset_dir", path(&self.dataset_dir));
        put("output_dir", path(&self.output_dir));
        put("subset_fraction", self.subset_fraction.map(|v| format!("{v:?}")));
        put("full", self.full.then(|| "true".to_string()));
        put("early_stop_patience", self.early_stop_patience.map(|v| v.to_string()));
        put("width", self.width.map(|v| v.to_string()));
        put("hidden_layers", self.hidden_layers.map(|v| v.to_string()));
        put("input_stride", self.input_stride.map(|v| v.to_string()));
        put("execution", self.execution.as_deref().map(quoted));
        o
    }

    fn resolve(&self) -> lottery_core::Result<RunConfig> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| lottery_core::Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?,
            None => String::new(),
        };
        RunConfig::from_toml_str(&text, &self.overrides())
    }
}

/// The configured policy when it names one, else the checkpoint's
/// directory name (`<run>/<policy>/candidate.ckpt`).
fn verify_policy(config: &RunConfig, checkpoint: &Path) -> Option<PolicyKind> {
    match config.policy {
        PolicySelection::WeightReset => Some(PolicyKind::WeightReset),
        PolicySelection::StructureGrowing => Some(PolicyKind::StructureGrowing),
        PolicySelection::Both => {
            let dir = checkpoint.parent()?.file_name()?.to_str()?;
            [PolicyKind::WeightReset, PolicyKind::StructureGrowing]
                .into_iter()
                .find(|k| k.as_str() == dir)
        }
    }
}

fn print_json(value: &impl serde::Serialize, output: Option<&Path>) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    println!("{text}");
    if let Some(path) = output {
        std::fs::write(path, format!("{text}\n")).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    Ok(())
}

fn report(err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = match args.resolve() {
                Ok(c) => c,
                Err(e) => return report(e),
            };
            match experiments::run(&config) {
                Ok(summary) => {
                    for o in &summary.outcomes {
                        let last = o.reports.last().map_or(0.0, |r| r.pre_prune_accuracy);
                        print!("{}: final validation accuracy {last:.4}", o.policy.as_str());
                        if let Some(v) = &o.verification {
                            print!(
                                ", ticket {} (ratio {:.4} <= {:.4}: {}, accuracy {:.4} vs {:.4}: {})",
                                if v.passed { "verified" } else { "rejected" },
                                v.compression_ratio,
                                v.target_compression,
                                v.compression_ok,
                                v.retrained_accuracy,
                                v.reference_accuracy,
                                v.accuracy_ok
                            );
                        }
                        if let Some(c) = &o.control {
                            print!(", random re-init control {:.4}", c.retrained_accuracy);
                        }
                        println!();
                    }
                    println!("results in {}", summary.output_dir.display());
                    if summary.verified() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => report(e),
            }
        }
        Command::ExportCurves { run_dir } => match experiments::export_curves(&run_dir) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => report(e),
        },
        Command::Compare { run_a, run_b, output } => match experiments::compare(&run_a, &run_b) {
            Ok(c) => match print_json(&c, output.as_deref()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => report(e),
            },
            Err(e) => report(e),
        },
        Command::Verify {
            checkpoint,
            reference_accuracy,
            config,
        } => {
            let config = match config.resolve() {
                Ok(c) => c,
                Err(e) => return report(e),
            };
            let Some(kind) = verify_policy(&config, &checkpoint) else {
                return report("cannot tell which policy produced the checkpoint; pass --policy");
            };
            match experiments::verify_checkpoint(&config, kind, &checkpoint, reference_accuracy) {
                Ok(mut v) => {
                    let passed = v.passed;
                    v.metrics = Default::default();
                    if let Err(e) = print_json(&v, None) {
                        return report(e);
                    }
                    if passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => report(e),
            }
        }
    }
}
