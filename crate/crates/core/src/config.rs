//! TOML configuration files for generation, training and experiments.
//!
//! Every section is optional and every key has a default, so an empty file
//! is a valid config. `schema_file` paths are resolved against the config
//! file's directory.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{default_schema, DomainShift, GeneratorConfig, Split};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::schema::{load_schema, AttributeSchema};
use crate::train::{Mode, Regime, TrainConfig};

/// Generator settings without the schema. Unset keys take the defaults of
/// [`GeneratorConfig::default`]; unset counts take the default imbalanced
/// profile.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub feature_dim: Option<usize>,
    pub anchor_scales: Option<Vec<f64>>,
    pub prototype_noise: Option<f64>,
    pub within_class_noise: Option<f64>,
    pub shift: Option<DomainShift>,
    pub target_noise: Option<f64>,
    pub target_detail: Option<f64>,
    pub source_counts: Option<Vec<usize>>,
    pub target_counts: Option<Vec<usize>>,
    pub seed: Option<u64>,
}

impl GeneratorSection {
    pub fn resolve(&self, schema: &AttributeSchema) -> GeneratorConfig {
        let d = GeneratorConfig::default();
        let k = schema.num_classes();
        let counts = |given: &Option<Vec<usize>>, f: fn(usize) -> usize| {
            given.clone().unwrap_or_else(|| (0..k).map(f).collect())
        };
        GeneratorConfig {
            schema: schema.clone(),
            feature_dim: self.feature_dim.unwrap_or(d.feature_dim),
            anchor_scales: self
                .anchor_scales
                .clone()
                .unwrap_or_else(|| vec![d.anchor_scales[0]; schema.num_attributes()]),
            prototype_noise: self.prototype_noise.unwrap_or(d.prototype_noise),
            within_class_noise: self.within_class_noise.unwrap_or(d.within_class_noise),
            shift: self.shift.clone().unwrap_or(d.shift),
            target_noise: self.target_noise.unwrap_or(d.target_noise),
            target_detail: self.target_detail.unwrap_or(d.target_detail),
            source_counts: counts(&self.source_counts, crate::data::default_source_count),
            target_counts: counts(&self.target_counts, crate::data::default_target_count),
            seed: self.seed.unwrap_or(d.seed),
            split: Split::Train,
        }
    }
}

/// Network widths; dimensions that follow from the data are filled in at
/// resolve time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub domain_hidden: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::for_schema(&default_schema(), 1);
        ModelSection {
            hidden: m.hidden,
            feature_dim: m.feature_dim,
            domain_hidden: m.domain_hidden,
            seed: 0,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, schema: &AttributeSchema, input_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden: self.hidden.clone(),
            feature_dim: self.feature_dim,
            num_classes: schema.num_classes(),
            attribute_sizes: schema.attribute_sizes(),
            domain_hidden: self.domain_hidden,
            seed: self.seed,
        }
    }
}

/// Config of `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub schema_file: Option<PathBuf>,
    /// Per-class example counts of the test split.
    pub test_source_count: usize,
    pub test_target_count: usize,
    pub generator: GeneratorSection,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            schema_file: None,
            test_source_count: 20,
            test_target_count: 20,
            generator: GeneratorSection::default(),
        }
    }
}

/// Config of `train`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub regime: Regime,
    /// Table rows, in output order.
    pub modes: Vec<Mode>,
    /// Each seed sets the generator, model and training seeds of one run.
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub schema_file: Option<PathBuf>,
    /// Per-class example counts of the test split.
    pub test_source_count: usize,
    pub test_target_count: usize,
    /// Per-class gain of the second mode over the first.
    pub gain: Option<[Mode; 2]>,
    pub generator: GeneratorSection,
    pub model: ModelSection,
    pub train: TrainConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            regime: Regime::Unsup,
            modes: vec![Mode::SourceOnly, Mode::SourceAttAcl, Mode::Dc, Mode::DcAttAcl],
            seeds: vec![0],
            out_dir: None,
            schema_file: None,
            test_source_count: 20,
            test_target_count: 20,
            gain: Some([Mode::Dc, Mode::DcAttAcl]),
            generator: GeneratorSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::config("an experiment needs at least one mode"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("an experiment needs at least one seed"));
        }
        let mut seen = Vec::new();
        for m in &self.modes {
            if seen.contains(m) {
                return Err(Error::config(format!("mode {} listed twice", m)));
            }
            seen.push(*m);
        }
        if let Some([a, b]) = self.gain {
            if !self.modes.contains(&a) || !self.modes.contains(&b) {
                return Err(Error::config("gain modes must be among the experiment modes"));
            }
        }
        if self.test_target_count == 0 {
            return Err(Error::config("test_target_count must be positive"));
        }
        self.train.validate()
    }
}

/// Parses TOML text into `T`, mapping syntax and unknown-key errors to
/// config errors.
pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::config(e.to_string()))
}

pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("configs serialise")
}

/// Reads and parses a config file. A missing file is an I/O error.
pub fn load_toml<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    parse_toml(&std::fs::read_to_string(path)?)
}

/// The schema named by `schema_file` relative to `base`, or the default.
pub fn resolve_schema(schema_file: Option<&Path>, base: Option<&Path>) -> Result<AttributeSchema> {
    match schema_file {
        None => Ok(default_schema()),
        Some(p) if p.is_absolute() => load_schema(p),
        Some(p) => load_schema(base.map_or_else(|| p.to_path_buf(), |b| b.join(p))),
    }
}
