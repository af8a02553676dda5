//! `key = value` run configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use avfd_core::evaluation::DEFAULT_OVERLAP_BINS;
use avfd_core::mmdwl::ModulationVector;
use avfd_core::model::{LossWeights, ModelConfig};
use avfd_core::training::TrainConfig;

use crate::error::{self, Error, Result};

pub const SEED_ENV: &str = "AVFD_SEED";

/// Toy encoder construction; the optional weight files replace the seeded maps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub seed: u64,
    pub face_grid: usize,
    pub mouth_grid: usize,
    pub n_mels: usize,
    pub face_weights: Option<PathBuf>,
    pub frontend_weights: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { seed: 7, face_grid: 8, mouth_grid: 8, n_mels: 80, face_weights: None, frontend_weights: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub encoders: EncoderConfig,
    pub prompts: Option<PathBuf>,
    pub overlap_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            encoders: EncoderConfig::default(),
            prompts: None,
            overlap_bins: DEFAULT_OVERLAP_BINS,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "seed",
    "dim",
    "raw_dim",
    "token_dim",
    "tokens_per_prompt",
    "hidden",
    "tau",
    "tau_av",
    "window",
    "alpha",
    "learning_rate",
    "batch_size",
    "epochs",
    "loss_coeff_av",
    "loss_coeff_ft",
    "encoder_seed",
    "face_grid",
    "mouth_grid",
    "n_mels",
    "face_weights",
    "frontend_weights",
    "prompts",
    "overlap_bins",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = num(key, v)?,
            "dim" => self.model.dim = num(key, v)?,
            "raw_dim" => self.model.raw_dim = num(key, v)?,
            "token_dim" => self.model.token_dim = num(key, v)?,
            "tokens_per_prompt" => self.model.tokens_per_prompt = num(key, v)?,
            "hidden" => self.model.hidden = num(key, v)?,
            "tau" => self.model.tau = num(key, v)?,
            "tau_av" => self.model.tau_av = num(key, v)?,
            "window" => self.model.window = num(key, v)?,
            "alpha" => self.model.alpha = v.parse::<ModulationVector>()?,
            "learning_rate" => self.train.learning_rate = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "loss_coeff_av" => self.train.loss_weights.av = num(key, v)?,
            "loss_coeff_ft" => self.train.loss_weights.ft = num(key, v)?,
            "encoder_seed" => self.encoders.seed = num(key, v)?,
            "face_grid" => self.encoders.face_grid = num(key, v)?,
            "mouth_grid" => self.encoders.mouth_grid = num(key, v)?,
            "n_mels" => self.encoders.n_mels = num(key, v)?,
            "face_weights" => self.encoders.face_weights = opt_path(v),
            "frontend_weights" => self.encoders.frontend_weights = opt_path(v),
            "prompts" => self.prompts = opt_path(v),
            "overlap_bins" => self.overlap_bins = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        let t = &self.train;
        let e = &self.encoders;
        Some(match key {
            "seed" => self.seed.to_string(),
            "dim" => m.dim.to_string(),
            "raw_dim" => m.raw_dim.to_string(),
            "token_dim" => m.token_dim.to_string(),
            "tokens_per_prompt" => m.tokens_per_prompt.to_string(),
            "hidden" => m.hidden.to_string(),
            "tau" => m.tau.to_string(),
            "tau_av" => m.tau_av.to_string(),
            "window" => m.window.to_string(),
            "alpha" => m.alpha.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "epochs" => t.epochs.to_string(),
            "loss_coeff_av" => t.loss_weights.av.to_string(),
            "loss_coeff_ft" => t.loss_weights.ft.to_string(),
            "encoder_seed" => e.seed.to_string(),
            "face_grid" => e.face_grid.to_string(),
            "mouth_grid" => e.mouth_grid.to_string(),
            "n_mels" => e.n_mels.to_string(),
            "face_weights" => show_path(&e.face_weights),
            "frontend_weights" => show_path(&e.frontend_weights),
            "prompts" => show_path(&self.prompts),
            "overlap_bins" => self.overlap_bins.to_string(),
            _ => return None,
        })
    }

    /// Every key in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|k| (*k, self.get(k).expect("known key"))).collect()
    }

    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key = value, found `{line}`", path.display(), i + 1))
            })?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}:{}: {m}", path.display(), i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(&error::read_text(path)?, path)?;
        Ok(c)
    }

    /// Applies `AVFD_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.set("seed", &v)
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for p in pairs {
            let p = p.as_ref();
            let (k, v) = p.split_once('=').ok_or_else(|| Error::Config(format!("override `{p}` is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// File, then environment, then flag overrides.
    pub fn resolve<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut c = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        c.apply_env()?;
        c.apply_overrides(overrides)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train_config().validate()?;
        if self.encoders.face_grid == 0 || self.encoders.mouth_grid == 0 || self.encoders.n_mels == 0 {
            return Err(Error::Config("grids and n_mels must be positive".into()));
        }
        if self.overlap_bins < 2 {
            return Err(Error::Config("overlap_bins must be at least 2".into()));
        }
        Ok(())
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train }
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.train.loss_weights
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        error::write(path, self.to_text())
    }
}
