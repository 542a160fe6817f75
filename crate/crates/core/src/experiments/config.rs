//! Run configuration: a flat TOML table, strictly validated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{
    cifar_hidden_unit, cifar_resnet, mnist_dense, mnist_hidden_unit, Architecture, BlockInit, GrowthInit,
    GrowthOptions, LayerSpec,
};
use crate::optim::AdamConfig;
use crate::parallel::Execution;
use crate::policies::{PolicyConfig, PolicyKind};
use crate::train::TrainConfig;

/// Environment variable naming the dataset root, used when `dataset_dir`
/// is not set. The root holds `mnist/` and `cifar-10-batches-bin/`.
pub const DATA_DIR_ENV: &str = "LOTTERY_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    MnistDense,
    CifarResnet,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySelection {
    WeightReset,
    StructureGrowing,
    Both,
}

impl PolicySelection {
    pub fn kinds(self) -> Vec<PolicyKind> {
        match self {
            PolicySelection::WeightReset => vec![PolicyKind::WeightReset],
            PolicySelection::StructureGrowing => vec![PolicyKind::StructureGrowing],
            PolicySelection::Both => vec![PolicyKind::WeightReset, PolicyKind::StructureGrowing],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn subdir(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar-10-batches-bin",
        }
    }
}

/// Every knob of a run, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub policy: PolicySelection,
    pub dataset: DatasetKind,
    pub seed: u64,
    pub cycles: usize,
    pub sparsity: f64,
    pub epochs_per_cycle: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub accuracy_tolerance_pp: f64,
    pub target_compression: Option<f64>,
    pub verify: bool,
    pub control: bool,
    pub growth_init: GrowthInit,
    pub block_init: BlockInit,
    pub dataset_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub subset_fraction: f64,
    pub full: bool,
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    /// Hidden width (MNIST) or block channels (CIFAR).
    pub width: usize,
    /// Hidden units of the weight-reset network; growth starts from none.
    pub hidden_layers: usize,
    pub input_stride: usize,
    pub execution: Execution,
}

pub const KEYS: &[&str] = &[
    "preset",
    "policy",
    "dataset",
    "seed",
    "cycles",
    "sparsity",
    "epochs_per_cycle",
    "batch_size",
    "learning_rate",
    "accuracy_tolerance_pp",
    "target_compression",
    "verify",
    "control",
    "growth_init",
    "block_init",
    "dataset_dir",
    "output_dir",
    "subset_fraction",
    "full",
    "early_stop_patience",
    "width",
    "hidden_layers",
    "input_stride",
    "execution",
];

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let mnist = Self {
            preset,
            policy: PolicySelection::Both,
            dataset: DatasetKind::Mnist,
            seed: 42,
            cycles: 5,
            sparsity: 0.95,
            epochs_per_cycle: 5,
            batch_size: 64,
            learning_rate: 0.001,
            accuracy_tolerance_pp: 1.0,
            target_compression: None,
            verify: true,
            control: true,
            growth_init: GrowthInit::Identity,
            block_init: BlockInit::DiracZero,
            dataset_dir: None,
            output_dir: PathBuf::from("runs/latest"),
            subset_fraction: 1.0,
            full: false,
            early_stop_patience: 0,
            width: 128,
            hidden_layers: 5,
            input_stride: 1,
            execution: Execution::default(),
        };
        match preset {
            Preset::MnistDense | Preset::Custom => mnist,
            Preset::CifarResnet => Self {
                dataset: DatasetKind::Cifar10,
                cycles: 7,
                sparsity: 0.80,
                epochs_per_cycle: 1,
                batch_size: 128,
                control: false,
                subset_fraction: 0.2,
                width: 8,
                hidden_layers: 7,
                ..mnist
            },
        }
    }

    /// Parses a config file's text, applies `overrides` (`key`, raw value)
    /// on top, and validates. All problems are reported together.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(vec![format!("not valid TOML: {}", e.message())]))?;
        for (key, raw) in overrides {
            table.insert(key.clone(), parse_override(raw));
        }
        Self::from_table(&table)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn from_table(table: &Table) -> Result<Self> {
        let mut errors = Vec::new();
        for key in table.keys() {
            if !KEYS.contains(&key.as_str()) {
                errors.push(format!("unknown key `{key}`"));
            }
        }
        let mut r = Reader {
            table,
            errors: &mut errors,
        };
        let preset = r.enumeration("preset").unwrap_or(Preset::MnistDense);
        let mut c = Self::preset(preset);
        let full = r.boolean("full").unwrap_or(false);
        if full && preset == Preset::CifarResnet {
            c.subset_fraction = 1.0;
            c.epochs_per_cycle = 10;
        }
        c.full = full;
        if let Some(v) = r.enumeration("policy") {
            c.policy = v;
        }
        if let Some(v) = r.enumeration("dataset") {
            c.dataset = v;
        }
        if let Some(v) = r.integer("seed") {
            c.seed = v;
        }
        if let Some(v) = r.integer("cycles") {
            c.cycles = v as usize;
        }
        if let Some(v) = r.float("sparsity") {
            c.sparsity = v;
        }
        if let Some(v) = r.integer("epochs_per_cycle") {
            c.epochs_per_cycle = v as usize;
        }
        if let Some(v) = r.integer("batch_size") {
            c.batch_size = v as usize;
        }
        if let Some(v) = r.float("learning_rate") {
            c.learning_rate = v as f32;
        }
        if let Some(v) = r.float("accuracy_tolerance_pp") {
            c.accuracy_tolerance_pp = v;
        }
        match table.get("target_compression") {
            None => {}
            Some(Value::String(s)) if s == "derived" => c.target_compression = None,
            Some(_) => c.target_compression = r.float("target_compression"),
        }
        if let Some(v) = r.boolean("verify") {
            c.verify = v;
        }
        if let Some(v) = r.boolean("control") {
            c.control = v;
        }
        if let Some(v) = r.enumeration("growth_init") {
            c.growth_init = v;
        }
        if let Some(v) = r.enumeration("block_init") {
            c.block_init = v;
        }
        if let Some(v) = r.string("dataset_dir") {
            c.dataset_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = r.string("output_dir") {
            c.output_dir = PathBuf::from(v);
        }
        if let Some(v) = r.float("subset_fraction") {
            c.subset_fraction = v;
        }
        if let Some(v) = r.integer("early_stop_patience") {
            c.early_stop_patience = v as usize;
        }
        if let Some(v) = r.integer("width") {
            c.width = v as usize;
        }
        if let Some(v) = r.integer("hidden_layers") {
            c.hidden_layers = v as usize;
        }
        if let Some(v) = r.integer("input_stride") {
            c.input_stride = v as usize;
        }
        if let Some(v) = r.enumeration("execution") {
            c.execution = v;
        }
        errors.extend(c.problems());
        if errors.is_empty() {
            Ok(c)
        } else {
            Err(Error::Config(errors))
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.cycles == 0 {
            p.push("cycles must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            p.push(format!("sparsity must lie in [0, 1), got {}", self.sparsity));
        }
        if self.epochs_per_cycle == 0 {
            p.push("epochs_per_cycle must be at least 1".into());
        }
        if self.batch_size == 0 {
            p.push("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            p.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.accuracy_tolerance_pp.is_nan() || self.accuracy_tolerance_pp <= 0.0 {
            p.push(format!(
                "accuracy_tolerance_pp must be positive, got {}",
                self.accuracy_tolerance_pp
            ));
        }
        if let Some(r) = self.target_compression {
            if !(r > 0.0 && r <= 1.0) {
                p.push(format!(
                    "target_compression must lie in (0, 1] or be \"derived\", got {r}"
                ));
            }
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            p.push(format!(
                "subset_fraction must lie in (0, 1], got {}",
                self.subset_fraction
            ));
        }
        if self.width == 0 {
            p.push("width must be at least 1".into());
        }
        if self.input_stride == 0 {
            p.push("input_stride must be at least 1".into());
        }
        match (self.preset, self.dataset) {
            (Preset::MnistDense, DatasetKind::Cifar10) => {
                p.push("preset mnist_dense needs dataset mnist".into());
            }
            (Preset::CifarResnet, DatasetKind::Mnist) => {
                p.push("preset cifar_resnet needs dataset cifar10".into());
            }
            _ => {}
        }
        if p.is_empty() {
            if let Err(e) = self.architecture(self.hidden_layers) {
                p.push(e.to_string());
            }
        }
        p
    }

    /// Network with `hidden` hidden units for this config's dataset.
    pub fn architecture(&self, hidden: usize) -> Result<Architecture> {
        match self.dataset {
            DatasetKind::Mnist => Ok(mnist_dense(hidden, self.width)),
            DatasetKind::Cifar10 => cifar_resnet(hidden, self.width, self.input_stride, 32),
        }
    }

    /// Starting network for `policy`: all hidden units for weight reset,
    /// none for structure growing.
    pub fn starting_architecture(&self, policy: PolicyKind) -> Result<Architecture> {
        match policy {
            PolicyKind::WeightReset => self.architecture(self.hidden_layers),
            PolicyKind::StructureGrowing => self.architecture(0),
        }
    }

    pub fn growth_unit(&self) -> Vec<LayerSpec> {
        match self.dataset {
            DatasetKind::Mnist => mnist_hidden_unit(self.width),
            DatasetKind::Cifar10 => cifar_hidden_unit(self.width),
        }
    }

    pub fn policy_config(&self, policy: PolicyKind) -> PolicyConfig {
        PolicyConfig {
            seed: self.seed,
            cycles: self.cycles,
            sparsity: self.sparsity,
            train: TrainConfig {
                epochs: self.epochs_per_cycle,
                batch_size: self.batch_size,
                early_stop_patience: (self.early_stop_patience > 0).then_some(self.early_stop_patience),
                execution: self.execution,
            },
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            growth_unit: self.growth_unit(),
            growth: GrowthOptions {
                init: self.growth_init,
                block_init: self.block_init,
            },
            target_compression: self.target_compression,
            accuracy_tolerance_pp: self.accuracy_tolerance_pp,
            verify: self.verify,
            control: self.control && policy == PolicyKind::WeightReset,
        }
    }

    /// Dataset directory: `dataset_dir`, else `$LOTTERY_DATA_DIR/<subdir>`,
    /// else `data/<subdir>`.
    pub fn resolved_dataset_dir(&self) -> PathBuf {
        if let Some(dir) = &self.dataset_dir {
            return dir.clone();
        }
        let root = std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from);
        root.join(self.dataset.subdir())
    }

    /// The resolved config as a flat TOML document; parsing it back yields
    /// an identical config.
    pub fn to_toml(&self) -> String {
        let name = |v: &dyn erased::Named| v.name();
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let quoted = |s: &str| Value::String(s.to_string()).to_string();
        line("preset", quoted(&name(&self.preset)));
        line("policy", quoted(&name(&self.policy)));
        line("dataset", quoted(&name(&self.dataset)));
        line("seed", self.seed.to_string());
        line("cycles", self.cycles.to_string());
        line("sparsity", Value::Float(self.sparsity).to_string());
        line("epochs_per_cycle", self.epochs_per_cycle.to_string());
        line("batch_size", self.batch_size.to_string());
        line("learning_rate", Value::Float(f64::from(self.learning_rate)).to_string());
        line(
            "accuracy_tolerance_pp",
            Value::Float(self.accuracy_tolerance_pp).to_string(),
        );
        line(
            "target_compression",
            self.target_compression
                .map_or_else(|| quoted("derived"), |r| Value::Float(r).to_string()),
        );
        line("verify", self.verify.to_string());
        line("control", self.control.to_string());
        line("growth_init", quoted(&name(&self.growth_init)));
        line("block_init", quoted(&name(&self.block_init)));
        line("dataset_dir", quoted(&self.resolved_dataset_dir().to_string_lossy()));
        line("output_dir", quoted(&self.output_dir.to_string_lossy()));
        line("subset_fraction", Value::Float(self.subset_fraction).to_string());
        line("full", self.full.to_string());
        line("early_stop_patience", self.early_stop_patience.to_string());
        line("width", self.width.to_string());
        line("hidden_layers", self.hidden_layers.to_string());
        line("input_stride", self.input_stride.to_string());
        line("execution", quoted(self.execution.as_str()));
        out
    }
}

mod erased {
    use serde::Serialize;

    /// snake_case name of a unit enum variant via its serde form.
    pub trait Named {
        fn name(&self) -> String;
    }

    impl<T: Serialize> Named for T {
        fn name(&self) -> String {
            match serde_json::to_value(self) {
                Ok(serde_json::Value::String(s)) => s,
                other => panic!("not a unit variant: {other:?}"),
            }
        }
    }
}

/// CLI values arrive as text: read them as TOML literals when they parse,
/// as plain strings otherwise.
fn parse_override(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

struct Reader<'a> {
    table: &'a Table,
    errors: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn expect(&mut self, key: &str, what: &str, got: &Value) {
        self.errors.push(format!("`{key}` must be {what}, got {got}"));
    }

    fn integer(&mut self, key: &str) -> Option<u64> {
        match self.table.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            v => {
                let v = v.clone();
                self.expect(key, "a non-negative integer", &v);
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        match self.table.get(key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            v => {
                let v = v.clone();
                self.expect(key, "a number", &v);
                None
            }
        }
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        match self.table.get(key)? {
            Value::Boolean(b) => Some(*b),
            v => {
                let v = v.clone();
                self.expect(key, "true or false", &v);
                None
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.table.get(key)? {
            Value::String(s) => Some(s.clone()),
            v => {
                let v = v.clone();
                self.expect(key, "a string", &v);
                None
            }
        }
    }

    fn enumeration<T: for<'de> Deserialize<'de>>(&mut self, key: &str) -> Option<T> {
        let s = self.string(key)?;
        match serde_json::from_value(serde_json::Value::String(s.clone())) {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("`{key}` has unknown value \"{s}\""));
                None
            }
        }
    }
}
