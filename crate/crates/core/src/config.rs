//! Run configuration: a flat `key = value` text file plus overrides, every
//! field validated before any work starts.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::dataset::FilterConfig;
use crate::error::{Error, Result};
use crate::graph::{DomainTag, SplitConfig};
use crate::pipeline::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::Config(format!("precision {s:?} must be f32 or f64"))),
        }
    }
}

/// Dataset presets; they only change the contrastive temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Default,
    FoodKitchen,
    BeautyElectronics,
    ToyGame,
}

impl Preset {
    pub fn tau(self) -> f64 {
        match self {
            Preset::FoodKitchen => 0.2,
            _ => 0.1,
        }
    }
}

impl Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Default => "default",
            Preset::FoodKitchen => "food-kitchen",
            Preset::BeautyElectronics => "beauty-electronics",
            Preset::ToyGame => "toy-game",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Preset::Default),
            "food-kitchen" => Ok(Preset::FoodKitchen),
            "beauty-electronics" => Ok(Preset::BeautyElectronics),
            "toy-game" => Ok(Preset::ToyGame),
            _ => Err(Error::Config(format!(
                "unknown preset {s:?} (default | food-kitchen | beauty-electronics | toy-game)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw_a: Option<PathBuf>,
    pub raw_b: Option<PathBuf>,
    pub overlap: Option<PathBuf>,
    /// Output of `prepare`, input of the other commands.
    pub data_dir: Option<PathBuf>,
    /// Output directory of `train` / `eval`.
    pub out_dir: Option<PathBuf>,
    pub text_a: Option<PathBuf>,
    pub visual_a: Option<PathBuf>,
    pub text_b: Option<PathBuf>,
    pub visual_b: Option<PathBuf>,

    pub preset: Preset,
    pub seed: u64,
    pub precision: Precision,
    pub filter: FilterConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    /// Explicit τ; `None` takes the preset's value.
    pub tau: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            raw_a: None,
            raw_b: None,
            overlap: None,
            data_dir: None,
            out_dir: None,
            text_a: None,
            visual_a: None,
            text_b: None,
            visual_b: None,
            preset: Preset::Default,
            seed: 0,
            precision: Precision::F64,
            filter: FilterConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            tau: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {v:?} for {key}"))),
    }
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Every recognized key.
    pub const KEYS: &'static [&'static str] = &[
        "raw_a", "raw_b", "overlap", "data_dir", "out_dir", "text_a", "visual_a", "text_b", "visual_b",
        "preset", "seed", "precision", "min_rating", "min_degree", "unseen_frac", "train_frac", "val_frac",
        "test_frac", "new_frac", "dim", "layers", "k", "dropout", "w", "templates", "lambda", "beta", "gamma",
        "tau", "include_positive", "lr", "adam_beta1", "adam_beta2", "adam_eps", "epochs", "patience", "batches",
        "overlap_batch", "alpha_start", "alpha_end", "eval_n", "no_mm", "no_cd", "no_txt", "no_vis",
    ];

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        let m = &mut self.model;
        match key {
            "raw_a" => self.raw_a = opt_path(v),
            "raw_b" => self.raw_b = opt_path(v),
            "overlap" => self.overlap = opt_path(v),
            "data_dir" => self.data_dir = opt_path(v),
            "out_dir" => self.out_dir = opt_path(v),
            "text_a" => self.text_a = opt_path(v),
            "visual_a" => self.visual_a = opt_path(v),
            "text_b" => self.text_b = opt_path(v),
            "visual_b" => self.visual_b = opt_path(v),
            "preset" => self.preset = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "precision" => self.precision = v.parse()?,
            "min_rating" => self.filter.min_rating = parse(key, v)?,
            "min_degree" => self.filter.min_degree = parse(key, v)?,
            "unseen_frac" => self.split.unseen_frac = parse(key, v)?,
            "train_frac" => self.split.train_frac = parse(key, v)?,
            "val_frac" => self.split.val_frac = parse(key, v)?,
            "test_frac" => self.split.test_frac = parse(key, v)?,
            "new_frac" => self.split.new_frac = parse(key, v)?,
            "dim" => m.encoder.dim = parse(key, v)?,
            "layers" => m.encoder.layers = parse(key, v)?,
            "k" => m.encoder.k = parse(key, v)?,
            "dropout" => m.encoder.dropout_p = parse(key, v)?,
            "w" => m.fusion = parse(key, v)?,
            "templates" => m.templates = v.parse()?,
            "lambda" => m.weights.lambda = parse(key, v)?,
            "beta" => m.weights.beta = parse(key, v)?,
            "gamma" => m.weights.gamma = parse(key, v)?,
            "tau" => self.tau = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "include_positive" => m.weights.include_positive_in_denominator = parse_bool(key, v)?,
            "lr" => m.train.lr = parse(key, v)?,
            "adam_beta1" => m.train.adam_betas.0 = parse(key, v)?,
            "adam_beta2" => m.train.adam_betas.1 = parse(key, v)?,
            "adam_eps" => m.train.adam_eps = parse(key, v)?,
            "epochs" => m.train.epochs_max = parse(key, v)?,
            "patience" => m.train.patience = parse(key, v)?,
            "batches" => m.train.batches_per_epoch = parse(key, v)?,
            "overlap_batch" => m.train.overlap_batch = parse(key, v)?,
            "alpha_start" => m.train.alpha_start = parse(key, v)?,
            "alpha_end" => m.train.alpha_end = parse(key, v)?,
            "eval_n" => m.train.eval_n = parse(key, v)?,
            "no_mm" => m.variant.mm = !parse_bool(key, v)?,
            "no_cd" => m.variant.cd = !parse_bool(key, v)?,
            "no_txt" => m.variant.text = !parse_bool(key, v)?,
            "no_vis" => m.variant.visual = !parse_bool(key, v)?,
            _ => {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        Some(match key {
            "raw_a" => path_str(&self.raw_a),
            "raw_b" => path_str(&self.raw_b),
            "overlap" => path_str(&self.overlap),
            "data_dir" => path_str(&self.data_dir),
            "out_dir" => path_str(&self.out_dir),
            "text_a" => path_str(&self.text_a),
            "visual_a" => path_str(&self.visual_a),
            "text_b" => path_str(&self.text_b),
            "visual_b" => path_str(&self.visual_b),
            "preset" => self.preset.to_string(),
            "seed" => self.seed.to_string(),
            "precision" => self.precision.to_string(),
            "min_rating" => self.filter.min_rating.to_string(),
            "min_degree" => self.filter.min_degree.to_string(),
            "unseen_frac" => self.split.unseen_frac.to_string(),
            "train_frac" => self.split.train_frac.to_string(),
            "val_frac" => self.split.val_frac.to_string(),
            "test_frac" => self.split.test_frac.to_string(),
            "new_frac" => self.split.new_frac.to_string(),
            "dim" => m.encoder.dim.to_string(),
            "layers" => m.encoder.layers.to_string(),
            "k" => m.encoder.k.to_string(),
            "dropout" => m.encoder.dropout_p.to_string(),
            "w" => m.fusion.to_string(),
            "templates" => m.templates.to_string(),
            "lambda" => m.weights.lambda.to_string(),
            "beta" => m.weights.beta.to_string(),
            "gamma" => m.weights.gamma.to_string(),
            "tau" => self.tau.map(|t| t.to_string()).unwrap_or_default(),
            "include_positive" => m.weights.include_positive_in_denominator.to_string(),
            "lr" => m.train.lr.to_string(),
            "adam_beta1" => m.train.adam_betas.0.to_string(),
            "adam_beta2" => m.train.adam_betas.1.to_string(),
            "adam_eps" => m.train.adam_eps.to_string(),
            "epochs" => m.train.epochs_max.to_string(),
            "patience" => m.train.patience.to_string(),
            "batches" => m.train.batches_per_epoch.to_string(),
            "overlap_batch" => m.train.overlap_batch.to_string(),
            "alpha_start" => m.train.alpha_start.to_string(),
            "alpha_end" => m.train.alpha_end.to_string(),
            "eval_n" => m.train.eval_n.to_string(),
            "no_mm" => (!m.variant.mm).to_string(),
            "no_cd" => (!m.variant.cd).to_string(),
            "no_txt" => (!m.variant.text).to_string(),
            "no_vis" => (!m.variant.visual).to_string(),
            _ => return None,
        })
    }

    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against the file's directory.
    pub fn parse_text(&mut self, text: &str, source: &str, base: Option<&Path>) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{source}:{}: expected key = value, got {raw:?}", n + 1))
            })?;
            let k = k.trim();
            let mut v = v.trim().to_string();
            if let (Some(base), true) = (base, Self::is_path_key(k)) {
                if !v.is_empty() && Path::new(&v).is_relative() {
                    v = base.join(&v).display().to_string();
                }
            }
            self.set(k, &v)
                .map_err(|e| Error::Config(format!("{source}:{}: {}", n + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::Config(format!("cannot read config file {}", path.display())))?;
        let mut cfg = Self::default();
        cfg.parse_text(&text, &path.display().to_string(), path.parent())?;
        Ok(cfg)
    }

    fn is_path_key(k: &str) -> bool {
        matches!(
            k,
            "raw_a" | "raw_b" | "overlap" | "data_dir" | "out_dir" | "text_a" | "visual_a" | "text_b" | "visual_b"
        )
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} must be key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Model configuration with τ resolved from the preset and the run seed.
    pub fn model_config(&self) -> ModelConfig {
        let mut m = self.model;
        m.weights.tau = self.tau.unwrap_or_else(|| self.preset.tau());
        m.train.seed = self.seed;
        m
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            seed: self.seed,
            ..self.split
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split_config().validate()?;
        self.model_config().validate()?;
        if !self.filter.min_rating.is_finite() {
            return Err(Error::Config("min_rating must be finite".into()));
        }
        Ok(())
    }

    /// `key=value` lines of every model-affecting key, sorted by key.
    pub fn canonical_entries(&self) -> BTreeMap<String, String> {
        Self::KEYS
            .iter()
            .filter(|k| !Self::is_path_key(k))
            .map(|k| (k.to_string(), self.get(k).unwrap_or_default()))
            .collect()
    }

    /// SHA-256 over the canonical entries.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical_entries() {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Rebuilds the model-affecting fields from stored canonical entries.
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in entries {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn feature_path(&self, tag: DomainTag, text: bool) -> Option<PathBuf> {
        let explicit = match (tag, text) {
            (DomainTag::A, true) => &self.text_a,
            (DomainTag::A, false) => &self.visual_a,
            (DomainTag::B, true) => &self.text_b,
            (DomainTag::B, false) => &self.visual_b,
        };
        explicit.clone().or_else(|| {
            self.data_dir
                .as_ref()
                .map(|d| d.join(format!("{tag}.{}.feat", if text { "text" } else { "visual" })))
        })
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Checks that `path` is set and exists.
pub fn require_path(p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = p
        .clone()
        .ok_or_else(|| Error::Config(format!("{key} is not set")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{key} {} does not exist", p.display())));
    }
    Ok(p)
}
