//! Flat `key = value` job configuration.
//!
//! Blank lines and anything after `#` are ignored. Every key maps onto one
//! field of [`JobConfig`]; unknown keys are rejected so typos do not pass
//! silently. Command-line flags are applied after the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image_io::{Normalization, NormalizationSpec, IMAGENET_MEAN};
use crate::nst::{InitMode, NstConfig};
use crate::vgg::{NetworkSpec, Scale, TrainConfig};

/// Step used by `gradcheck` when the config does not set one.
pub const DEFAULT_GRADCHECK_EPS: f64 = 1e-6;
/// Seed used by `gradcheck` when none is given; it is the only command that
/// does not insist on an explicit seed.
pub const DEFAULT_GRADCHECK_SEED: u64 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct JobConfig {
    pub seed: Option<u64>,
    pub scale: Scale,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Initial weights for `transfer`/`train`, trained weights for `extract`.
    pub weights: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Pooling stages kept; `None` picks the deepest one the input size allows.
    pub pool_depth: Option<usize>,
    /// Classifier size for `train`; `None` uses the number of identities.
    pub class_count: Option<usize>,
    pub nst: NstConfig,
    pub train: TrainConfig,
    pub norm: NormalizationSpec,
    pub max_rank: usize,
    pub gradcheck_eps: f64,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            seed: None,
            scale: Scale::Full,
            jobs: None,
            weights: None,
            out: None,
            pool_depth: None,
            class_count: None,
            nst: NstConfig::default(),
            train: TrainConfig::default(),
            norm: NormalizationSpec::default(),
            max_rank: 20,
            gradcheck_eps: DEFAULT_GRADCHECK_EPS,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(Some(key), format!("cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(Some(key), format!("expected true or false, got `{value}`"))),
    }
}

impl JobConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = JobConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(None, format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = Some(parse(key, value)?),
            "scale" => self.scale = value.parse().map_err(|e: Error| Error::config(Some(key), e.to_string()))?,
            "jobs" => self.jobs = Some(parse(key, value)?),
            "weights" => self.weights = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "pool_depth" => self.pool_depth = Some(parse(key, value)?),
            "class_count" => self.class_count = Some(parse(key, value)?),

            "alpha" => self.nst.alpha = parse(key, value)?,
            "beta" => self.nst.beta = parse(key, value)?,
            "content_layer" => self.nst.content_layer = value.to_string(),
            "style_layers" => self.nst.style_layers = parse_list(key, value)?,
            "style_weights" => self.nst.layer_weights = parse_list(key, value)?,
            "iterations" => self.nst.iterations = parse(key, value)?,
            "nst_learning_rate" => self.nst.adam.learning_rate = parse(key, value)?,
            "init" => self.nst.init = value.parse::<InitMode>().map_err(|e| Error::config(Some(key), e.to_string()))?,

            "adam_beta1" => {
                self.nst.adam.beta1 = parse(key, value)?;
                self.train.beta1 = self.nst.adam.beta1;
            }
            "adam_beta2" => {
                self.nst.adam.beta2 = parse(key, value)?;
                self.train.beta2 = self.nst.adam.beta2;
            }
            "adam_epsilon" => {
                self.nst.adam.epsilon = parse(key, value)?;
                self.train.epsilon = self.nst.adam.epsilon;
            }

            "epochs" => self.train.epochs = parse(key, value)?,
            "train_learning_rate" => self.train.learning_rate = parse(key, value)?,
            "l2" => self.train.l2_coefficient = parse(key, value)?,
            "dropout" => self.train.dropout_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "freeze_convs" => self.train.freeze_convs = parse_bool(key, value)?,

            "norm_mode" => {
                self.norm.mode = match value {
                    "mean" => Normalization::MeanSubtract { mean: IMAGENET_MEAN },
                    "scale" => Normalization::Scale { factor: 1.0 / 255.0 },
                    _ => return Err(Error::config(Some(key), format!("expected mean or scale, got `{value}`"))),
                }
            }
            "mean" => {
                let v: Vec<f64> = parse_list(key, value)?;
                let mean: [f64; 3] = v
                    .try_into()
                    .map_err(|_| Error::config(Some(key), "expected three comma-separated values"))?;
                self.norm.mode = Normalization::MeanSubtract { mean };
            }
            "pixel_scale" => self.norm.mode = Normalization::Scale { factor: parse(key, value)? },
            "target_height" => self.norm.target_height = parse(key, value)?,
            "target_width" => self.norm.target_width = parse(key, value)?,

            "max_rank" => self.max_rank = parse(key, value)?,
            "gradcheck_eps" => self.gradcheck_eps = parse(key, value)?,
            _ => return Err(Error::config(Some(key), "unknown key")),
        }
        Ok(())
    }

    /// Seed of a stochastic job.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config(Some("seed"), "a seed is required for this job"))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::config(Some("out"), "an output directory is required"))
    }

    pub fn pool_depth(&self) -> usize {
        self.pool_depth.unwrap_or_else(|| {
            (0..=5)
                .rev()
                .find(|&k| self.norm.target_height % (1 << k) == 0 && self.norm.target_width % (1 << k) == 0)
                .unwrap_or(0)
        })
    }

    /// Network for the configured scale and input size.
    pub fn network(&self, class_count: usize) -> Result<NetworkSpec> {
        let depth = self.pool_depth();
        self.norm
            .validate(depth)
            .map_err(|e| Error::config(Some("target_height"), e.to_string()))?;
        NetworkSpec::vgg16_with_pool_depth(self.scale, self.norm.target_height, self.norm.target_width, class_count, depth)
    }

    /// NST settings with the pixel range taken from the normalization.
    pub fn nst_config(&self, seed: u64) -> NstConfig {
        NstConfig {
            pixel_range: self.norm.pixel_range(),
            seed,
            ..self.nst.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == Some(0) {
            return Err(Error::config(Some("jobs"), "must be at least 1"));
        }
        if self.max_rank == 0 {
            return Err(Error::config(Some("max_rank"), "must be at least 1"));
        }
        self.nst.validate().map_err(|e| Error::config(None, e.to_string()))?;
        self.train.validate().map_err(|e| Error::config(None, e.to_string()))?;
        self.norm
            .validate(self.pool_depth())
            .map_err(|e| Error::config(None, e.to_string()))
    }
}
