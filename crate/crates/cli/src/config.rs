//! Flat `key = value` run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use polygan_core::losses::LossConfig;
use polygan_core::nn::AdamConfig;
use polygan_core::train::TrainConfig;

use crate::error::CliError;

pub const SEED_ENV: &str = "PGAN_SEED";

/// Every recognised key.
pub const KEYS: [&str; 25] = [
    "image_size",
    "seed",
    "epochs",
    "max_steps",
    "lr",
    "beta1",
    "beta2",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "buffer_capacity",
    "tau_diff",
    "checkpoint_every",
    "stage",
    "data_dir",
    "out_dir",
    "train_count",
    "test_count",
    "base_width",
    "disc_width",
    "disc_hidden",
    "disc_norm",
    "ssim_window",
    "ssim_sigma",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub image_size: usize,
    pub seed: u64,
    pub epochs: u64,
    /// Stop after this many optimizer steps in total; 0 means no limit.
    pub max_steps: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub buffer_capacity: usize,
    pub tau_diff: f64,
    pub checkpoint_every: u64,
    pub stage: Option<u8>,
    pub data_dir: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub train_count: usize,
    pub test_count: usize,
    pub base_width: usize,
    pub disc_width: usize,
    pub disc_hidden: usize,
    pub disc_norm: bool,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let loss = LossConfig::default();
        Self {
            image_size: 128,
            seed: 0,
            epochs: 1,
            max_steps: 0,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            lambda1: loss.lambda1,
            lambda2: loss.lambda2,
            lambda3: loss.lambda3,
            lambda4: loss.lambda4,
            buffer_capacity: 50,
            tau_diff: 0.06,
            checkpoint_every: 0,
            stage: None,
            data_dir: PathBuf::from("data"),
            out_dir: None,
            train_count: 2000,
            test_count: 200,
            base_width: 64,
            disc_width: 64,
            disc_hidden: 1024,
            disc_norm: false,
            ssim_window: 11,
            ssim_sigma: 1.5,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Defaults, then the config file, then `PGAN_SEED`, then each `--set`.
    pub fn load(file: Option<&Path>, sets: &[String], env_seed: Option<&str>) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Core(polygan_core::Error::io(path, e)))?;
            cfg.apply_text(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        }
        if let Some(seed) = env_seed {
            cfg.set("seed", seed)
                .map_err(|e| CliError::Config(format!("{SEED_ENV}: {e}")))?;
        }
        for kv in sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "image_size" => self.image_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "lambda3" => self.lambda3 = parse(key, value)?,
            "lambda4" => self.lambda4 = parse(key, value)?,
            "buffer_capacity" => self.buffer_capacity = parse(key, value)?,
            "tau_diff" => self.tau_diff = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "stage" => self.stage = Some(parse(key, value)?),
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "train_count" => self.train_count = parse(key, value)?,
            "test_count" => self.test_count = parse(key, value)?,
            "base_width" => self.base_width = parse(key, value)?,
            "disc_width" => self.disc_width = parse(key, value)?,
            "disc_hidden" => self.disc_hidden = parse(key, value)?,
            "disc_norm" => self.disc_norm = parse(key, value)?,
            "ssim_window" => self.ssim_window = parse(key, value)?,
            "ssim_sigma" => self.ssim_sigma = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.image_size < 32 || !self.image_size.is_power_of_two() {
            return bad(format!("image_size must be a power of two >= 32, got {}", self.image_size));
        }
        for (k, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{k} must be a finite value >= 0, got {v}"));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{k} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.tau_diff > 0.0 && self.tau_diff < 1.0) {
            return bad(format!("tau_diff must lie in (0, 1), got {}", self.tau_diff));
        }
        if let Some(s) = self.stage {
            if !(1..=4).contains(&s) {
                return bad(format!("stage must be 1, 2, 3 (or 4 for pipeline inputs), got {s}"));
            }
        }
        if self.base_width == 0 || self.disc_width == 0 || self.disc_hidden == 0 {
            return bad("network widths must be positive".into());
        }
        if self.ssim_window % 2 == 0 || !(self.ssim_sigma > 0.0) {
            return bad("ssim_window must be odd and ssim_sigma positive".into());
        }
        Ok(())
    }

    pub fn require_stage(&self, allowed: std::ops::RangeInclusive<u8>) -> Result<u8, CliError> {
        match self.stage {
            Some(s) if allowed.contains(&s) => Ok(s),
            Some(s) => Err(CliError::Config(format!("stage {s} is not valid for this command"))),
            None => Err(CliError::Config("this command needs stage (--set stage=N)".into())),
        }
    }

    pub fn require_out_dir(&self) -> Result<&Path, CliError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("this command needs out_dir (--set out_dir=PATH)".into()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            image_size: self.image_size,
            epochs: self.epochs,
            max_steps: self.max_steps,
            seed: self.seed,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                ..AdamConfig::default()
            },
            loss: LossConfig {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
                lambda3: self.lambda3,
                lambda4: self.lambda4,
                ..LossConfig::default()
            },
            buffer_capacity: self.buffer_capacity,
            checkpoint_every: self.checkpoint_every,
            base_width: self.base_width,
            disc_width: self.disc_width,
            disc_hidden: self.disc_hidden,
            disc_norm: self.disc_norm,
        }
    }

    pub fn ssim_params(&self) -> polygan_core::metrics::SsimParams {
        polygan_core::metrics::SsimParams {
            window: self.ssim_window,
            sigma: self.ssim_sigma,
            ..Default::default()
        }
    }
}
