//! Run configuration, read from TOML.
//!
//! Every section has defaults, so a file holding only `config_version = 1`
//! is valid. Unknown keys are rejected so typos surface as errors.
//!
//! ```toml
//! config_version = 1
//! seed = 0
//! output_dir = "runs/default"
//!
//! [model]
//! hidden_dims = [16]
//!
//! [data]
//! image_size = 32
//! num_per_class = 2000
//! per_class_test = 200
//!
//! [federation]
//! clients = ["A", "B"]
//! local_epochs = 7
//! n_rounds = 10
//!
//! [grid]
//! n_e = [1, 2, 4, 7, 10]
//! n_r = [1, 2, 4, 7, 10]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corruption::{CorruptionPlan, RELEASE_TABLES};
use crate::datagen::{ImageShape, NormStats, Source, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::federation::{AggregationMode, FederationConfig};
use crate::orchestrator::{sha256_hex, DataSettings, GridSpec, PretrainSpec};
use crate::tensor::{Activation, AdamHyper, ModelSpec, WeightDecayMode};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub federation: FederationSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub frv: FrvSection,
    #[serde(default)]
    pub pretrain: PretrainSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden_dims: vec![16],
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub image_size: usize,
    pub channels: usize,
    pub num_per_class: usize,
    pub per_class_test: usize,
    pub validation_fraction: f64,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    /// Reserved for a loader that cuts patches from whole images.
    pub patch_size: Option<usize>,
    pub patches_per_image: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        let norm = NormStats::default();
        DataSection {
            image_size: 32,
            channels: 3,
            num_per_class: 2000,
            per_class_test: 200,
            validation_fraction: 0.10,
            norm_mean: norm.mean,
            norm_std: norm.std,
            patch_size: None,
            patches_per_image: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecayMode,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let h = AdamHyper::default();
        OptimizerSection {
            learning_rate: h.learning_rate,
            beta1: h.beta1,
            beta2: h.beta2,
            epsilon: h.epsilon,
            weight_decay: h.weight_decay,
            weight_decay_mode: h.weight_decay_mode,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Federated,
    Centralized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationSection {
    /// Data sources bound to clients, one client per source.
    pub clients: Vec<Source>,
    pub local_epochs: usize,
    pub n_rounds: usize,
    pub batch_size: usize,
    pub aggregation: AggregationMode,
    /// Used by `train` only.
    pub mode: TrainMode,
}

impl Default for FederationSection {
    fn default() -> Self {
        FederationSection {
            clients: vec![Source::A, Source::B],
            local_epochs: 1,
            n_rounds: 1,
            batch_size: 4,
            aggregation: AggregationMode::ExampleCount,
            mode: TrainMode::Federated,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_e: Vec<usize>,
    pub n_r: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::desk();
        GridSection { n_e: g.n_e, n_r: g.n_r }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrvSection {
    pub corruption_seed: u64,
    /// Pins every corrupted sample to this severity instead of sampling 1..=5.
    pub fixed_severity: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub enabled: bool,
    pub epochs: usize,
    pub num_per_class: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let p = PretrainSpec::default();
        PretrainSection {
            enabled: p.enabled,
            epochs: p.epochs,
            num_per_class: p.num_per_class,
        }
    }
}

impl RunConfig {
    pub fn default_config() -> Self {
        toml::from_str(&format!("config_version = {CONFIG_VERSION}")).expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string().trim_end()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Re-checks every invariant the modules rely on, naming the field.
    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, msg: &str| Err(Error::config(format!("{path}: {msg}")));
        if self.config_version != CONFIG_VERSION {
            return fail("config_version", &format!("unsupported version {} (expected {CONFIG_VERSION})", self.config_version));
        }
        if self.model.hidden_dims.contains(&0) {
            return fail("model.hidden_dims", "widths must be >= 1");
        }
        let d = &self.data;
        if d.image_size == 0 {
            return fail("data.image_size", "must be >= 1");
        }
        if d.channels == 0 {
            return fail("data.channels", "must be >= 1");
        }
        if d.num_per_class == 0 {
            return fail("data.num_per_class", "must be >= 1");
        }
        if d.per_class_test >= d.num_per_class {
            return fail("data.per_class_test", "must be smaller than data.num_per_class");
        }
        if !(0.0..1.0).contains(&d.validation_fraction) {
            return fail("data.validation_fraction", "must lie in [0, 1)");
        }
        if let Some(0) = d.patch_size {
            return fail("data.patch_size", "must be >= 1");
        }
        if let Some(0) = d.patches_per_image {
            return fail("data.patches_per_image", "must be >= 1");
        }
        self.norm_stats().validate(d.channels)?;
        let o = &self.optimizer;
        self.adam().validate()?;
        if o.weight_decay < 0.0 {
            return fail("optimizer.weight_decay", "must be >= 0");
        }
        let f = &self.federation;
        if f.clients.is_empty() {
            return fail("federation.clients", "needs at least one source");
        }
        if f.clients.contains(&Source::S) {
            return fail("federation.clients", "source S is reserved for pre-training");
        }
        let mut sorted = f.clients.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != f.clients.len() {
            return fail("federation.clients", "sources must be distinct");
        }
        if f.local_epochs == 0 {
            return fail("federation.local_epochs", "must be >= 1");
        }
        if f.n_rounds == 0 {
            return fail("federation.n_rounds", "must be >= 1");
        }
        if f.batch_size == 0 {
            return fail("federation.batch_size", "must be >= 1");
        }
        if f.mode == TrainMode::Centralized && f.clients.len() != 1 {
            return fail("federation.mode", "centralized training needs exactly one client source");
        }
        self.grid_spec().validate()?;
        if let Some(s) = self.frv.fixed_severity {
            if !(1..=5).contains(&s) {
                return fail("frv.fixed_severity", "must lie in 1..=5");
            }
        }
        if self.pretrain.enabled && self.pretrain.num_per_class == 0 {
            return fail("pretrain.num_per_class", "must be >= 1");
        }
        Ok(())
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape::new(self.data.image_size, self.data.image_size, self.data.channels)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(self.shape().len(), self.model.hidden_dims.clone(), NUM_CLASSES)
            .map_err(|e| e.context("model"))?;
        spec.activation = self.model.activation;
        Ok(spec)
    }

    pub fn norm_stats(&self) -> NormStats {
        NormStats {
            mean: self.data.norm_mean.clone(),
            std: self.data.norm_std.clone(),
        }
    }

    pub fn adam(&self) -> AdamHyper {
        let o = &self.optimizer;
        AdamHyper {
            learning_rate: o.learning_rate,
            beta1: o.beta1,
            beta2: o.beta2,
            epsilon: o.epsilon,
            weight_decay: o.weight_decay,
            weight_decay_mode: o.weight_decay_mode,
        }
    }

    pub fn data_settings(&self) -> DataSettings {
        DataSettings {
            shape: self.shape(),
            num_per_class: self.data.num_per_class,
            per_class_test: self.data.per_class_test,
            validation_fraction: self.data.validation_fraction,
        }
    }

    pub fn federation_config(&self) -> Result<FederationConfig> {
        Ok(FederationConfig {
            n_rounds: self.federation.n_rounds,
            local_epochs: self.federation.local_epochs,
            model: self.model_spec()?,
            optimizer: self.adam(),
            batch_size: self.federation.batch_size,
            aggregation: self.federation.aggregation,
            norm: self.norm_stats(),
            seed: self.seed,
        })
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            n_e: self.grid.n_e.clone(),
            n_r: self.grid.n_r.clone(),
        }
    }

    pub fn pretrain_spec(&self) -> PretrainSpec {
        PretrainSpec {
            enabled: self.pretrain.enabled,
            epochs: self.pretrain.epochs,
            num_per_class: self.pretrain.num_per_class,
        }
    }

    pub fn corruption_plan(&self) -> CorruptionPlan {
        CorruptionPlan {
            tables: RELEASE_TABLES,
            fixed_severity: self.frv.fixed_severity,
        }
    }

    /// The TOML rendering with `output_dir` blanked, as embedded in run
    /// manifests.
    pub fn portable_toml(&self) -> String {
        let mut copy = self.clone();
        copy.output_dir = PathBuf::new();
        copy.to_toml()
    }

    /// SHA-256 of the canonical TOML rendering with `output_dir` and `grid`
    /// blanked. The output location does not change results, and the grid is
    /// recorded in full in the grid-search manifest, so a robustness run can
    /// bind to a grid produced with `--grid-full` from the same file.
    pub fn content_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.grid = GridSection { n_e: Vec::new(), n_r: Vec::new() };
        sha256_hex(canonical.to_toml().as_bytes())
    }
}
