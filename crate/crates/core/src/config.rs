//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file. A `profile` key,
//! wherever it appears, selects the defaults the other keys start from.

use std::path::{Path, PathBuf};

use crate::encoders::ModelDims;
use crate::error::{Error, Result};
use crate::evaluator::Protocol;
use crate::textpipe::{DEFAULT_MIN_FREQ, DEFAULT_SEQ_LEN};
use crate::trainer::{CaptionMode, TrainConfig};

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "XMODAL_SEED";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Paths {
    pub vocab: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: String,
    pub embed_dim: usize,
    pub joint_dim: usize,
    pub seq_len: usize,
    pub min_freq: u64,
    pub caption_mode: CaptionMode,
    pub protocol: Protocol,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::full_profile()
    }
}

impl RunConfig {
    /// Full-size defaults: 200-d word embeddings, 1024-d joint space.
    pub fn full_profile() -> Self {
        RunConfig {
            profile: "full".into(),
            embed_dim: 200,
            joint_dim: 1024,
            seq_len: DEFAULT_SEQ_LEN,
            min_freq: DEFAULT_MIN_FREQ,
            caption_mode: CaptionMode::default(),
            protocol: Protocol::default(),
            train: TrainConfig::default(),
            paths: Paths::default(),
        }
    }

    /// Small dimensions for fast runs.
    pub fn test_profile() -> Self {
        RunConfig {
            profile: "test".into(),
            embed_dim: 8,
            joint_dim: 16,
            ..Self::full_profile()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full_profile()),
            "test" => Ok(Self::test_profile()),
            _ => Err(Error::Config(format!("unknown profile `{name}` (full|test)"))),
        }
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.clone()
    }

    pub fn model_dims(&self, vocab_size: usize, feature_dim: usize) -> ModelDims {
        ModelDims {
            vocab_size,
            embed_dim: self.embed_dim,
            joint_dim: self.joint_dim,
            feature_dim,
        }
    }

    /// Parses config text. `base` resolves relative paths; `path` labels errors.
    pub fn parse(text: &str, base: &Path, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, n + 1, format!("expected `key = value`, got `{line}`")))?;
            entries.push((n + 1, k.trim(), v.trim()));
        }
        let mut cfg = match entries.iter().rev().find(|(_, k, _)| *k == "profile") {
            Some(&(n, _, v)) => Self::profile(v).map_err(|e| Error::format(path, n, e.to_string()))?,
            None => Self::full_profile(),
        };
        for (n, k, v) in entries {
            if k == "profile" {
                continue;
            }
            cfg.set_in(k, v, base).map_err(|e| Error::format(path, n, e.to_string()))?;
        }
        cfg.validate().map_err(|e| Error::format(path, "", e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, path)
    }

    /// Replaces the seed when `value` is set, as for [`SEED_ENV`].
    pub fn override_seed(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.train.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(())
    }

    /// Sets one key; relative paths are taken as given.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_in(key, value, Path::new(""))?;
        self.validate()
    }

    fn set_in(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let t = &mut self.train;
        let path = || Some(base.join(value));
        match key {
            "seed" => t.seed = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "joint_dim" => self.joint_dim = num(key, value)?,
            "seq_len" => self.seq_len = num(key, value)?,
            "min_freq" => self.min_freq = num(key, value)?,
            "caption_mode" => self.caption_mode = value.parse()?,
            "protocol" => self.protocol = value.parse()?,
            "image_activation" => t.activation = value.parse()?,
            "alpha" => t.loss.alpha = num(key, value)?,
            "lambda_var" => t.loss.lambda_var = num(key, value)?,
            "negative_mode" => t.loss.negative_mode = value.parse()?,
            "variance_scope" => t.loss.variance_scope = value.parse()?,
            "lr" => t.schedule.initial_lr = num(key, value)?,
            "lr_floor" => t.schedule.lr_floor = num(key, value)?,
            "batch_size" => t.schedule.initial_batch = num(key, value)?,
            "patience" => t.schedule.patience = num(key, value)?,
            "plateau_tol" => t.schedule.tol = num(key, value)?,
            "adam_beta1" => t.adam.beta1 = num(key, value)?,
            "adam_beta2" => t.adam.beta2 = num(key, value)?,
            "adam_eps" => t.adam.eps = num(key, value)?,
            "max_epochs" => t.max_epochs = num(key, value)?,
            "max_grow_cycles" => t.max_grow_cycles = num(key, value)?,
            "reset_moments_on_grow" => t.reset_moments_on_grow = num(key, value)?,
            "record_wall_time" => t.record_wall_time = num(key, value)?,
            "vocab" => self.paths.vocab = path(),
            "word_vectors" => self.paths.word_vectors = path(),
            "features" => self.paths.features = path(),
            "train_data" => self.paths.train_data = path(),
            "val_data" => self.paths.val_data = path(),
            "checkpoint" => self.paths.checkpoint = path(),
            "log" => self.paths.log = path(),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.joint_dim == 0 {
            return Err(Error::Config("embed_dim and joint_dim must be positive".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("seq_len must be at least 1".into()));
        }
        if self.min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        let a = &self.train.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps be positive".into()));
        }
        self.train.loss.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.schedule.validate()
    }

    /// Every setting as `(key, value)` in a fixed order; parsing these back
    /// reproduces the config.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let mut out = vec![
            ("profile", self.profile.clone()),
            ("seed", t.seed.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("joint_dim", self.joint_dim.to_string()),
            ("seq_len", self.seq_len.to_string()),
            ("min_freq", self.min_freq.to_string()),
            ("caption_mode", self.caption_mode.to_string()),
            ("protocol", self.protocol.to_string()),
            ("image_activation", t.activation.to_string()),
            ("alpha", t.loss.alpha.to_string()),
            ("lambda_var", t.loss.lambda_var.to_string()),
            ("negative_mode", t.loss.negative_mode.to_string()),
            ("variance_scope", t.loss.variance_scope.to_string()),
            ("lr", t.schedule.initial_lr.to_string()),
            ("lr_floor", t.schedule.lr_floor.to_string()),
            ("batch_size", t.schedule.initial_batch.to_string()),
            ("patience", t.schedule.patience.to_string()),
            ("plateau_tol", t.schedule.tol.to_string()),
            ("adam_beta1", t.adam.beta1.to_string()),
            ("adam_beta2", t.adam.beta2.to_string()),
            ("adam_eps", t.adam.eps.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("max_grow_cycles", t.max_grow_cycles.to_string()),
            ("reset_moments_on_grow", t.reset_moments_on_grow.to_string()),
            ("record_wall_time", t.record_wall_time.to_string()),
        ];
        let p = &self.paths;
        let paths = [
            ("vocab", &p.vocab),
            ("word_vectors", &p.word_vectors),
            ("features", &p.features),
            ("train_data", &p.train_data),
            ("val_data", &p.val_data),
            ("checkpoint", &p.checkpoint),
            ("log", &p.log),
        ];
        for (k, v) in paths {
            if let Some(v) = v {
                out.push((k, v.display().to_string()));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_by_profile() {
        let p = RunConfig::full_profile();
        assert_eq!((p.embed_dim, p.joint_dim, p.seq_len), (200, 1024, 70));
        assert_eq!(p.train.schedule.initial_lr, 0.1);
        assert_eq!(p.train.schedule.initial_batch, 16);
        assert_eq!(p.train.schedule.lr_floor, 1e-7);
        let t = RunConfig::test_profile();
        assert_eq!((t.embed_dim, t.joint_dim), (8, 16));
    }

    #[test]
    fn parses_comments_profile_and_paths() {
        let text = "# run\nseed = 7\n\nalpha=0.2\nfeatures = data/f.imft\nprofile = test\nnegative_mode = max\n";
        let c = RunConfig::parse(text, Path::new("/runs"), Path::new("/runs/c.conf")).unwrap();
        assert_eq!(c.seed(), 7);
        assert_eq!(c.train.loss.alpha, 0.2);
        assert_eq!(c.joint_dim, 16);
        assert_eq!(c.paths.features.as_deref(), Some(Path::new("/runs/data/f.imft")));
        assert_eq!(c.train.loss.negative_mode, crate::objective::NegativeMode::Max);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = RunConfig::parse("seed = 1\nbogus = 2\n", Path::new(""), Path::new("c.conf"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("c.conf:2") && err.contains("bogus"), "{err}");
        let err = RunConfig::parse("seq_len = 0\n", Path::new(""), Path::new("c.conf")).unwrap_err();
        assert!(err.to_string().contains("seq_len"));
        assert!(RunConfig::parse("just words\n", Path::new(""), Path::new("c")).is_err());
    }

    #[test]
    fn entries_round_trip() {
        let mut c = RunConfig::test_profile();
        c.set("lr", "0.025").unwrap();
        c.set("caption_mode", "concatenated").unwrap();
        c.set("vocab", "/tmp/v.tsv").unwrap();
        let back = RunConfig::parse(&c.to_text(), Path::new(""), Path::new("c")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seed_override() {
        let mut c = RunConfig::test_profile();
        c.override_seed(Some("42")).unwrap();
        assert_eq!(c.seed(), 42);
        c.override_seed(None).unwrap();
        assert_eq!(c.seed(), 42);
        assert!(c.override_seed(Some("-1")).is_err());
    }
}
