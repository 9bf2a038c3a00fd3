//! Run configuration: one file binding every knob of the pipeline.
//!
//! Values resolve in precedence order: command-line flag, then config file,
//! then built-in default. Each resolution step is logged at startup so a run
//! can always be reconstructed from its stderr.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rgt_core::byoa::ByoaConfig;
use rgt_core::data::SyntheticConfig;
use rgt_core::losses::{ContrastiveConfig, FocalConfig, LossWeights};
use rgt_core::model::train::TrainConfig;
use rgt_core::model::RGTConfig;
use rgt_core::radiomics::RadiomicsSettings;
use rgt_core::{Error, Result};

/// Everything a run needs. Unknown keys anywhere in the file are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: RGTConfig,
    pub byoa: ByoaConfig,
    pub focal: FocalConfig,
    pub contrastive: ContrastiveConfig,
    pub weights: LossWeights,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub radiomics: RadiomicsSettings,
    /// Seeds model initialization and the training schedule. The corpus has
    /// its own seed under `[synthetic]`.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: RGTConfig::default(),
            byoa: ByoaConfig::default(),
            focal: FocalConfig::default(),
            contrastive: ContrastiveConfig::default(),
            weights: LossWeights::default(),
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
            // Pipeline images are min-maxed to [0, 1] before extraction, so
            // the gray-level bin width lives on that scale: 20 bins.
            radiomics: RadiomicsSettings { bin_width: 0.05 },
            seed: 613,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.byoa.validate()?;
        self.focal.validate()?;
        self.contrastive.validate()?;
        self.weights.validate()?;
        self.synthetic.validate()?;
        self.train.validate()?;
        if !(self.radiomics.bin_width.is_finite() && self.radiomics.bin_width > 0.0) {
            return Err(Error::Config(format!(
                "radiomics.bin_width {} must be positive",
                self.radiomics.bin_width
            )));
        }
        Ok(())
    }
}

/// Parse a TOML (`.toml`) or JSON (`.json`) config file.
pub fn load_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("config {}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let cfg: RunConfig = match ext {
        "toml" => toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?,
        "json" => serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?,
        other => {
            return Err(Error::Config(format!(
                "config {}: unsupported extension {other:?} (expected .toml or .json)",
                path.display()
            )))
        }
    };
    Ok(cfg)
}

/// Flag overrides accepted by commands that take a run configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub byoa_t: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// Resolve flag > file > default, logging every source to stderr.
pub fn resolve(path: Option<&Path>, over: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            eprintln!("config: loaded {}", p.display());
            load_file(p)?
        }
        None => {
            eprintln!("config: built-in defaults (no --config)");
            RunConfig::default()
        }
    };
    if let Some(lambda) = over.lambda {
        eprintln!("config: weights.lambda = {lambda} (--lambda)");
        cfg.weights.lambda = lambda;
    }
    if let Some(t) = over.byoa_t {
        eprintln!("config: byoa.keep_fraction = {t} (--byoa-t)");
        cfg.byoa.keep_fraction = t;
    }
    if let Some(seed) = over.seed {
        eprintln!("config: seed = {seed} (--seed)");
        cfg.seed = seed;
    }
    if let Some(dir) = &over.output_dir {
        eprintln!("config: output_dir = {} (--out)", dir.display());
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    eprintln!(
        "config: effective lambda={} T={} seed={} out={}",
        cfg.weights.lambda,
        cfg.byoa.keep_fraction,
        cfg.seed,
        cfg.output_dir.display()
    );
    Ok(cfg)
}
