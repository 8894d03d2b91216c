use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pairctx::net::ModelConfig;
use pairctx::splitter::SplitConfig;
use pairctx::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "PAIRCTX_SEED";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub ner: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            annotations: None,
            ner: None,
            vocab: None,
            output_dir: PathBuf::from("pairctx-out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSettings {
    pub max_len: usize,
    pub lowercase: bool,
    pub include_title: bool,
}

impl Default for EncodeSettings {
    fn default() -> Self {
        EncodeSettings {
            max_len: pairctx::encoder_input::DEFAULT_MAX_LEN,
            lowercase: false,
            include_title: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub baseline_runs: usize,
    pub eval_batch_size: usize,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            baseline_runs: 1000,
            eval_batch_size: 64,
        }
    }
}

/// Everything a run needs. Precedence: command-line flags, then the
/// `PAIRCTX_SEED` variable (seed only), then the config file, then defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub precision: Precision,
    pub paths: Paths,
    pub split: SplitConfig,
    pub encode: EncodeSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub report: ReportSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            precision: Precision::F32,
            paths: Paths::default(),
            split: SplitConfig::default(),
            encode: EncodeSettings::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            report: ReportSettings::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.paths.corpus,
            &mut cfg.paths.annotations,
            &mut cfg.paths.ner,
            &mut cfg.paths.vocab,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        rebase(&mut cfg.paths.output_dir);
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.train.master_seed = v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable config: {e}>"))
    }
}
