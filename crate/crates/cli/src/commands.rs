use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use polygan_core::autodiff::Graph;
use polygan_core::gradcheck::gradient_suite;
use polygan_core::losses::{discriminator_loss, generator_gan_loss, identity_loss, LossConfig};
use polygan_core::metrics::{evaluate_dir, ssim, EvalReport};
use polygan_core::net::{ConditionSet, Generator, GeneratorSpec, MAX_SKIP_RESOLUTION};
use polygan_core::pipeline::{export_cases, generator_from_checkpoint, Pipeline, PipelineInputs, PipelineOutputs};
use polygan_core::synth::{self, condition_channels, export_dataset, load_split, DatasetSpec, Split};
use polygan_core::train::{train_to_dir, Checkpoint, ImageBuffer, TrainOutcome, TrainPair, CHECKPOINT_FILE};
use polygan_core::{RngState, Tensor};

use crate::config::RunConfig;
use crate::error::CliError;

pub const EVAL_FILE: &str = "ssim.csv";

/// Writes a stage dataset (stages 1-3) or held-out pipeline inputs (stage 4).
pub fn gen_data(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let stage = cfg.require_stage(1..=4)?;
    let out = cfg.require_out_dir()?;
    if stage == 4 {
        let cases = export_cases(out, cfg.seed, cfg.image_size, cfg.test_count)?;
        info!("wrote {} pipeline cases to {}", cases.len(), out.display());
    } else {
        let spec = DatasetSpec {
            stage,
            seed: cfg.seed,
            size: cfg.image_size,
            train_count: cfg.train_count,
            test_count: cfg.test_count,
        };
        let m = export_dataset(out, &spec)?;
        info!(
            "stage {stage}: {} train / {} test samples in {}",
            m.count(Split::Train),
            m.count(Split::Test),
            out.display()
        );
    }
    Ok(out.to_path_buf())
}

/// Trains one stage model on `data_dir`'s training split.
pub fn train(cfg: &RunConfig, resume: bool) -> Result<TrainOutcome, CliError> {
    let stage = cfg.require_stage(1..=3)?;
    let out = cfg.require_out_dir()?;
    let samples = load_split(&cfg.data_dir, stage, Split::Train)?;
    let size = samples[0].target.shape()[1];
    if size != cfg.image_size {
        return Err(CliError::Config(format!(
            "dataset images are {size}px but image_size is {}",
            cfg.image_size
        )));
    }
    let data = samples.iter().map(|s| s.train_pair()).collect::<polygan_core::Result<Vec<TrainPair>>>()?;
    let tc = cfg.train_config();
    let ckpt = if resume {
        Some(Checkpoint::load(&out.join(CHECKPOINT_FILE), tc.adam)?)
    } else {
        None
    };
    if let Some(c) = &ckpt {
        if c.echo("stage") != Some(stage.to_string().as_str()) {
            return Err(CliError::Config(format!("checkpoint in {} is not a stage {stage} run", out.display())));
        }
    }
    let outcome = train_to_dir(
        tc,
        condition_channels(stage)?,
        &data,
        out,
        ckpt.as_ref(),
        &[("stage".into(), stage.to_string())],
    )?;
    info!(
        "stage {stage}: {} steps, checkpoint {}",
        outcome.trainer.step,
        outcome.checkpoint.display()
    );
    Ok(outcome)
}

fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(CHECKPOINT_FILE)
    } else {
        p.to_path_buf()
    }
}

/// Runs the four stages on one input directory and writes the five images.
pub fn pipeline(cfg: &RunConfig, checkpoints: [&Path; 3], inputs: &Path) -> Result<PipelineOutputs, CliError> {
    let out = cfg.require_out_dir()?;
    let tc = cfg.train_config();
    let mut gens = Vec::with_capacity(3);
    for (i, p) in checkpoints.iter().enumerate() {
        let ckpt = Checkpoint::load(&checkpoint_path(p), tc.adam)?;
        gens.push(generator_from_checkpoint(&ckpt, i as u8 + 1)?);
    }
    let stages: [Generator; 3] = gens.try_into().map_err(|_| CliError::Config("three stage models needed".into()))?;
    let p = Pipeline::new(stages, cfg.tau_diff)?;
    let inputs = PipelineInputs::read_dir(inputs)?;
    let result = p.run(&inputs)?;
    result.write_dir(out)?;
    info!(
        "pipeline: {} difference-mask pixels, outputs in {}",
        result.diff_mask.sum(),
        out.display()
    );
    Ok(result)
}

/// SSIM of identically named PNG pairs; the CSV also goes to
/// `out_dir/ssim.csv` when `out_dir` is set.
pub fn eval(cfg: &RunConfig, generated: &Path, target: &Path) -> Result<EvalReport, CliError> {
    let report = evaluate_dir(generated, target, &cfg.ssim_params())?;
    if let Some(out) = &cfg.out_dir {
        fs::create_dir_all(out).map_err(|e| polygan_core::Error::io(out, e))?;
        let path = out.join(EVAL_FILE);
        fs::write(&path, report.to_csv()).map_err(|e| polygan_core::Error::io(&path, e))?;
    }
    info!("{} pairs, mean SSIM {:.4}", report.count(), report.mean);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn structural_audit(size: usize) -> Result<Check, CliError> {
    let cc = condition_channels(1)?;
    let g = Generator::<f32>::build(GeneratorSpec::for_image(size, cc, 2)?, &mut RngState::new(size as u64))?;
    let mut rng = RngState::new(1);
    let cond = Tensor::from_fn(&[1, cc, size, size], |_| rng.range(-1.0, 1.0) as f32)?;
    let (out, trace) = g.forward_traced(&ConditionSet::new(vec![cond])?)?;
    let expected_skips: Vec<usize> = g
        .spec
        .resolutions
        .iter()
        .copied()
        .filter(|&r| r <= MAX_SKIP_RESOLUTION)
        .collect();
    let mut skips = trace.skip_edges.clone();
    skips.sort_unstable();
    skips.reverse();
    let injections_ok = trace.condition_injections.len() == g.encoder().len();
    let skips_ok = skips == expected_skips;
    let shape_ok = out.shape() == [1, 3, size, size];
    let range_ok = out.data().iter().all(|v| (-1.0..=1.0).contains(v));
    Ok(Check::new(
        format!("structure@{size}"),
        injections_ok && skips_ok && shape_ok && range_ok,
        format!(
            "{} injections / {} stages, skips {:?}, output {:?}",
            trace.condition_injections.len(),
            g.encoder().len(),
            skips,
            out.shape()
        ),
    ))
}

fn loss_zero_points() -> Result<Check, CliError> {
    let cfg = LossConfig::default();
    let mut g = Graph::<f64>::new();
    let ones = g.constant(Tensor::full(&[4, 1], 1.0)?);
    let zeros = g.constant(Tensor::zeros(&[4, 1])?);
    let d = discriminator_loss(&mut g, ones, zeros, &cfg)?;
    let gan = generator_gan_loss(&mut g, ones, &cfg)?;
    let x = g.constant(Tensor::from_fn(&[1, 3, 4, 4], |i| (i as f64).sin())?);
    let id = identity_loss(&mut g, x, x, &cfg)?;
    let vals = [d, gan, id].map(|v| g.value(v).data()[0]);
    Ok(Check::new(
        "loss zero points",
        vals.iter().all(|&v| v == 0.0),
        format!("{vals:?}"),
    ))
}

fn ssim_oracle() -> Result<Check, CliError> {
    let p = polygan_core::metrics::SsimParams::default();
    let mut rng = RngState::new(5);
    let x = Tensor::from_fn(&[3, 16, 16], |_| rng.uniform() as f32)?;
    let same = ssim(&x, &x, &p)?;
    let zeros = Tensor::zeros(&[3, 16, 16])?;
    let ones = Tensor::full(&[3, 16, 16], 1.0)?;
    let constant = ssim(&zeros, &ones, &p)?;
    let expected = p.c1() / (1.0 + p.c1());
    Ok(Check::new(
        "ssim oracle",
        (same - 1.0).abs() < 1e-9 && (constant - expected).abs() < 1e-8,
        format!("ssim(x,x)={same}, ssim(0,1)={constant:.6e}"),
    ))
}

fn buffer_statistics() -> Check {
    let mut buf = ImageBuffer::<f32>::new(ImageBuffer::<f32>::DEFAULT_CAPACITY, RngState::new(11));
    let img = Tensor::zeros(&[1, 3, 2, 2]).expect("static shape");
    for _ in 0..buf.capacity() {
        buf.query(img.clone());
    }
    let calls = 10_000;
    let stored = (0..calls).filter(|_| buf.query(img.clone()).is_stored()).count();
    let frac = stored as f64 / calls as f64;
    Check::new(
        "image buffer",
        (0.45..=0.55).contains(&frac) && buf.len() <= buf.capacity(),
        format!("stored fraction {frac:.4}"),
    )
}

fn hole_fractions() -> Result<Check, CliError> {
    let mut worst = (1.0f64, 0.0f64);
    for seed in 0..200 {
        let s = synth::sample(3, seed, 32)?;
        let holes = s.mask("hole_mask").expect("stage-3 samples carry a hole mask");
        let sil = s.mask("silhouette").expect("stage-3 samples carry a silhouette");
        let f = holes.sum() as f64 / sil.sum() as f64;
        worst = (worst.0.min(f), worst.1.max(f));
    }
    Ok(Check::new(
        "hole fraction",
        worst.0 >= 0.02 && worst.1 <= 0.15,
        format!("range [{:.4}, {:.4}] over 200 samples", worst.0, worst.1),
    ))
}

/// Fast internal consistency checks; every entry should pass on a healthy
/// build.
pub fn selfcheck() -> Result<Vec<Check>, CliError> {
    let mut checks: Vec<Check> = gradient_suite(20, 0)?
        .into_iter()
        .map(|r| {
            Check::new(
                format!("gradient {}", r.name),
                r.worst < 1e-5,
                format!("max rel err {:.2e} over {} instances", r.worst, r.instances),
            )
        })
        .collect();
    for size in [32, 64, 128] {
        checks.push(structural_audit(size)?);
    }
    checks.push(loss_zero_points()?);
    checks.push(ssim_oracle()?);
    checks.push(buffer_statistics());
    checks.push(hole_fractions()?);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selfcheck_passes() {
        for c in selfcheck().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
