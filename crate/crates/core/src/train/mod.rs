//! Alternating discriminator/generator optimisation, the fake-image history
//! buffer, checkpointing and the per-stage training driver.

mod buffer;
mod checkpoint;
mod step;

pub use buffer::{Draw, ImageBuffer};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use step::{train_step, ConditionalGenerator, Critic, LossReport, Optimizers, TrainPair};

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::net::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
use crate::nn::{AdamConfig, AdamState};
use crate::rng::RngState;
use crate::tensor::{Scalar, Tensor};

pub const LOSS_CSV_HEADER: &str = "step,d_loss,g_gan,g_id";
pub const CHECKPOINT_FILE: &str = "checkpoint.pgan";
pub const LOSS_FILE: &str = "losses.csv";

const TAG_GENERATOR: u64 = 1;
const TAG_DISCRIMINATOR: u64 = 2;
const TAG_BUFFER: u64 = 3;
const TAG_SHUFFLE: u64 = 0x5348_5546_0000_0000;

/// Maps `[0, 1]` image values to the generator's `[-1, 1]` range.
pub fn to_signed<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let two = T::from_f64(2.0);
    t.map(|v| v * two - T::ONE)
}

/// Inverse of [`to_signed`], clamped to `[0, 1]`.
pub fn to_unit<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let half = T::from_f64(0.5);
    t.map(|v| {
        let u = (v + T::ONE) * half;
        if u < T::ZERO {
            T::ZERO
        } else if u > T::ONE {
            T::ONE
        } else {
            u
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub image_size: usize,
    pub epochs: u64,
    /// Stop after this many total steps (0: run every epoch).
    pub max_steps: u64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub buffer_capacity: usize,
    /// Save a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    pub base_width: usize,
    pub disc_width: usize,
    pub disc_hidden: usize,
    /// Instance norm inside the discriminator blocks.
    pub disc_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            epochs: 1,
            max_steps: 0,
            seed: 0,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            buffer_capacity: ImageBuffer::<f32>::DEFAULT_CAPACITY,
            checkpoint_every: 0,
            base_width: 16,
            disc_width: 16,
            disc_hidden: 1024,
            disc_norm: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 || !self.image_size.is_power_of_two() {
            return Err(Error::Domain(format!(
                "image_size {} must be a power of two >= 32",
                self.image_size
            )));
        }
        self.loss.validate()?;
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            return Err(Error::Domain(format!("invalid Adam settings {a:?}")));
        }
        if self.base_width == 0 || self.disc_width == 0 || self.disc_hidden == 0 {
            return Err(Error::Domain("network widths must be positive".into()));
        }
        Ok(())
    }

    /// Settings recorded in checkpoint headers.
    pub fn echo(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_string(), v);
        vec![
            kv("image_size", self.image_size.to_string()),
            kv("batch_size", "1".into()),
            kv("epochs", self.epochs.to_string()),
            kv("max_steps", self.max_steps.to_string()),
            kv("seed", self.seed.to_string()),
            kv("lr", self.adam.lr.to_string()),
            kv("beta1", self.adam.beta1.to_string()),
            kv("beta2", self.adam.beta2.to_string()),
            kv("lambda1", self.loss.lambda1.to_string()),
            kv("lambda2", self.loss.lambda2.to_string()),
            kv("lambda3", self.loss.lambda3.to_string()),
            kv("lambda4", self.loss.lambda4.to_string()),
            kv("buffer_capacity", self.buffer_capacity.to_string()),
            kv("checkpoint_every", self.checkpoint_every.to_string()),
            kv("base_width", self.base_width.to_string()),
            kv("disc_width", self.disc_width.to_string()),
            kv("disc_hidden", self.disc_hidden.to_string()),
            kv("disc_norm", self.disc_norm.to_string()),
        ]
    }

    pub fn generator_spec(&self, condition_channels: usize) -> Result<GeneratorSpec> {
        GeneratorSpec::for_image(self.image_size, condition_channels, self.base_width)
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            hidden: self.disc_hidden,
            instance_norm: self.disc_norm,
            ..DiscriminatorSpec::new(self.image_size, self.disc_width)
        }
    }
}

/// Dataset order for one epoch; a pure function of `(seed, epoch)`, so a
/// resumed run needs no shuffle state.
pub fn epoch_order(seed: u64, epoch: u64, len: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    RngState::new(seed).split(TAG_SHUFFLE ^ epoch).shuffle(&mut order);
    order
}

/// Owns both players, their optimizers and the fake-image buffer.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub optimizers: Optimizers<f32>,
    pub buffer: ImageBuffer<f32>,
    /// Completed steps.
    pub step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, condition_channels: usize) -> Result<Self> {
        config.validate()?;
        let root = RngState::new(config.seed);
        let generator = Generator::build(config.generator_spec(condition_channels)?, &mut root.split(TAG_GENERATOR))?;
        let discriminator = Discriminator::build(config.discriminator_spec(), &mut root.split(TAG_DISCRIMINATOR))?;
        let optimizers = Optimizers {
            g: AdamState::new(&generator.params, config.adam),
            d: AdamState::new(&discriminator.params, config.adam),
        };
        let buffer = ImageBuffer::new(config.buffer_capacity, root.split(TAG_BUFFER));
        Ok(Self {
            config,
            generator,
            discriminator,
            optimizers,
            buffer,
            step: 0,
        })
    }

    /// Continues from `ckpt`. The run-defining settings (seed, size, widths)
    /// must match the checkpoint; epochs and step limits may differ.
    pub fn resume(config: TrainConfig, condition_channels: usize, ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(config, condition_channels)?;
        let echo = t.config.echo();
        for key in ["image_size", "seed", "base_width", "disc_width", "disc_hidden", "disc_norm", "buffer_capacity"] {
            let ours = echo.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
            if ckpt.echo(key) != ours {
                return Err(Error::Contract(format!(
                    "checkpoint {key}={} does not match configured {}",
                    ckpt.echo(key).unwrap_or("<missing>"),
                    ours.unwrap_or("<missing>")
                )));
            }
        }
        t.generator.params.load_from(&ckpt.generator)?;
        t.discriminator.params.load_from(&ckpt.discriminator)?;
        let check = |a: &AdamState<f32>, ps: &crate::nn::ParamSet<f32>| {
            a.m.iter().chain(&a.v).zip(ps.tensors().iter().chain(ps.tensors())).all(|(m, p)| m.shape() == p.shape())
        };
        if !check(&ckpt.adam_g, &t.generator.params) || !check(&ckpt.adam_d, &t.discriminator.params) {
            return Err(Error::Format("optimizer state does not match the network".into()));
        }
        if ckpt.buffer.len() > t.config.buffer_capacity {
            return Err(Error::Format("checkpoint buffer exceeds configured capacity".into()));
        }
        t.optimizers.g = AdamState { config: t.config.adam, ..ckpt.adam_g.clone() };
        t.optimizers.d = AdamState { config: t.config.adam, ..ckpt.adam_d.clone() };
        t.buffer = ImageBuffer::from_parts(t.config.buffer_capacity, ckpt.buffer.clone(), RngState::restore(ckpt.rng));
        t.step = ckpt.step;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_echo: self.config.echo(),
            step: self.step,
            rng: self.buffer.rng().snapshot(),
            generator: self.generator.params.clone(),
            discriminator: self.discriminator.params.clone(),
            adam_g: self.optimizers.g.clone(),
            adam_d: self.optimizers.d.clone(),
            buffer: self.buffer.stored().to_vec(),
        }
    }

    /// Step count at which [`Trainer::run`] stops for a dataset of `len`.
    pub fn total_steps(&self, len: usize) -> u64 {
        let full = self.config.epochs * len as u64;
        match self.config.max_steps {
            0 => full,
            m => m.min(full),
        }
    }

    /// Trains until [`Trainer::total_steps`], calling `on_step` after each
    /// step.
    pub fn run(&mut self, data: &[TrainPair<f32>], mut on_step: impl FnMut(&Self, &LossReport) -> Result<()>) -> Result<()> {
        let total = self.total_steps(data.len());
        if total > self.step && data.is_empty() {
            return Err(Error::Contract("training set is empty".into()));
        }
        let n = data.len() as u64;
        let mut order: Option<(u64, Vec<usize>)> = None;
        while self.step < total {
            let epoch = self.step / n;
            if order.as_ref().is_none_or(|(e, _)| *e != epoch) {
                order = Some((epoch, epoch_order(self.config.seed, epoch, data.len())));
            }
            let idx = order.as_ref().unwrap().1[(self.step % n) as usize];
            let report = train_step(
                &mut self.generator,
                &mut self.discriminator,
                &data[idx],
                &mut self.buffer,
                &mut self.optimizers,
                &self.config.loss,
                self.step,
            )?;
            self.step += 1;
            on_step(self, &report)?;
        }
        Ok(())
    }
}

pub fn format_loss_row(r: &LossReport) -> String {
    format!("{},{},{},{}", r.step, r.d_loss, r.g_gan, r.g_id)
}

/// Summary of a [`train_to_dir`] run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub checkpoint: PathBuf,
    pub losses: PathBuf,
}

/// Runs training, writing `losses.csv` and `checkpoint.pgan` into `out_dir`.
///
/// With `resume`, training continues from that checkpoint and loss rows
/// past its step are discarded before appending, so an interrupted and
/// resumed run leaves exactly the files of an uninterrupted one.
pub fn train_to_dir(
    config: TrainConfig,
    condition_channels: usize,
    data: &[TrainPair<f32>],
    out_dir: &Path,
    resume: Option<&Checkpoint>,
    extra_echo: &[(String, String)],
) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    let loss_path = out_dir.join(LOSS_FILE);
    let mut trainer = match resume {
        Some(c) => Trainer::resume(config, condition_channels, c)?,
        None => Trainer::new(config, condition_channels)?,
    };

    let mut kept = vec![LOSS_CSV_HEADER.to_string()];
    if trainer.step > 0 {
        let f = fs::File::open(&loss_path).map_err(|e| Error::io(&loss_path, e))?;
        for line in BufReader::new(f).lines().skip(1) {
            let line = line.map_err(|e| Error::io(&loss_path, e))?;
            let step: u64 = line
                .split(',')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Corrupt(format!("bad loss row {line:?}")))?;
            if step < trainer.step {
                kept.push(line);
            }
        }
        if kept.len() as u64 != trainer.step + 1 {
            return Err(Error::Corrupt(format!(
                "{} has {} rows but the checkpoint is at step {}",
                loss_path.display(),
                kept.len() - 1,
                trainer.step
            )));
        }
    }
    let file = fs::File::create(&loss_path).map_err(|e| Error::io(&loss_path, e))?;
    let mut csv = BufWriter::new(file);
    for line in &kept {
        writeln!(csv, "{line}").map_err(|e| Error::io(&loss_path, e))?;
    }

    let save = |t: &Trainer| -> Result<()> {
        let mut c = t.checkpoint();
        c.config_echo.extend(extra_echo.iter().cloned());
        c.save(&ckpt_path)
    };
    let every = trainer.config.checkpoint_every;
    trainer.run(data, |t, r| {
        writeln!(csv, "{}", format_loss_row(r)).map_err(|e| Error::io(&loss_path, e))?;
        if every > 0 && t.step % every == 0 {
            csv.flush().map_err(|e| Error::io(&loss_path, e))?;
            save(t)?;
        }
        if t.step % 100 == 0 {
            log::info!("step {} d={:.4} gan={:.4} id={:.4}", r.step, r.d_loss, r.g_gan, r.g_id);
        }
        Ok(())
    })?;
    csv.flush().map_err(|e| Error::io(&loss_path, e))?;
    save(&trainer)?;
    Ok(TrainOutcome {
        trainer,
        checkpoint: ckpt_path,
        losses: loss_path,
    })
}
