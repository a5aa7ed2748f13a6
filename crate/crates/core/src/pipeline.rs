//! Four-stage inference: garment transform, stitching, inpainting, and the
//! head/body composite.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image_io::{png_read_mask, png_read_rgb, png_write, quantize_8bit};
use crate::net::{ConditionSet, Generator, GeneratorSpec};
use crate::rng::RngState;
use crate::synth::{composite_stage4, condition_channels, difference_mask, pipeline_case, sample_seed, PipelineCase};
use crate::tensor::Tensor;
use crate::train::{to_signed, to_unit, Checkpoint};

pub const OUTPUT_FILES: [&str; 5] = ["stage1.png", "stage2.png", "diff_mask.png", "stage3.png", "final.png"];

/// Rebuilds the generator stored in a stage checkpoint.
///
/// The architecture comes from the checkpoint header (`image_size`,
/// `base_width`); a `stage` entry, when present, must match `stage`.
pub fn generator_from_checkpoint(ckpt: &Checkpoint, stage: u8) -> Result<Generator> {
    let field = |key: &str| -> Result<usize> {
        ckpt.echo(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("checkpoint header lacks a numeric {key}")))
    };
    if let Some(s) = ckpt.echo("stage") {
        if s != stage.to_string() {
            return Err(Error::Contract(format!(
                "checkpoint was trained for stage {s}, used as stage {stage}"
            )));
        }
    }
    let spec = GeneratorSpec::for_image(field("image_size")?, condition_channels(stage)?, field("base_width")?)?;
    let mut g = Generator::build(spec, &mut RngState::new(0))?;
    g.params.load_from(&ckpt.generator)?;
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineInputs {
    pub skeleton: Tensor,
    pub garment: Tensor,
    /// Headless body with the garment region blanked.
    pub body: Tensor,
    pub silhouette: Tensor,
    pub head: Tensor,
    pub head_mask: Tensor,
}

impl PipelineInputs {
    pub const ROLES: [&'static str; 6] = ["skeleton", "garment", "body", "silhouette", "head", "head_mask"];

    /// Reads `{role}.png` for every role.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let rgb = |r: &str| png_read_rgb(&dir.join(format!("{r}.png")));
        let mask = |r: &str| png_read_mask(&dir.join(format!("{r}.png")));
        let inputs = Self {
            skeleton: rgb("skeleton")?,
            garment: rgb("garment")?,
            body: rgb("body")?,
            silhouette: mask("silhouette")?,
            head: rgb("head")?,
            head_mask: mask("head_mask")?,
        };
        inputs.size()?;
        Ok(inputs)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (role, t) in Self::ROLES.iter().zip(self.images()) {
            png_write(&dir.join(format!("{role}.png")), t)?;
        }
        Ok(())
    }

    pub fn quantized(&self) -> Self {
        Self {
            skeleton: quantize_8bit(&self.skeleton),
            garment: quantize_8bit(&self.garment),
            body: quantize_8bit(&self.body),
            silhouette: self.silhouette.clone(),
            head: quantize_8bit(&self.head),
            head_mask: self.head_mask.clone(),
        }
    }

    fn images(&self) -> [&Tensor; 6] {
        [&self.skeleton, &self.garment, &self.body, &self.silhouette, &self.head, &self.head_mask]
    }

    /// Shared square extent of all inputs.
    pub fn size(&self) -> Result<usize> {
        let s = self.skeleton.shape()[1];
        for (role, t) in Self::ROLES.iter().zip(self.images()) {
            let c = if role.ends_with("mask") || *role == "silhouette" { 1 } else { 3 };
            if t.shape() != [c, s, s] {
                return Err(Error::Contract(format!(
                    "pipeline input {role} is {:?}, expected [{c}, {s}, {s}]",
                    t.shape()
                )));
            }
        }
        Ok(s)
    }
}

impl From<&PipelineCase> for PipelineInputs {
    fn from(c: &PipelineCase) -> Self {
        Self {
            skeleton: c.skeleton.clone(),
            garment: c.garment.clone(),
            body: c.body.clone(),
            silhouette: c.silhouette.clone(),
            head: c.head.clone(),
            head_mask: c.head_mask.clone(),
        }
    }
}

/// Every intermediate is snapped to the 8-bit grid before the next stage
/// consumes it, so the written PNGs reproduce the run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutputs {
    pub stage1: Tensor,
    pub stage2: Tensor,
    pub diff_mask: Tensor,
    pub stage3: Tensor,
    pub final_image: Tensor,
}

impl PipelineOutputs {
    /// Writes the five images as 8-bit RGB PNGs (the mask as grey).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mask = &self.diff_mask;
        let mask_rgb = Tensor::concat(&[mask, mask, mask], 0)?;
        let images = [&self.stage1, &self.stage2, &mask_rgb, &self.stage3, &self.final_image];
        for (name, t) in OUTPUT_FILES.iter().zip(images) {
            png_write(&dir.join(name), t)?;
        }
        Ok(())
    }
}

pub const EXPECTED_FILE: &str = "expected.png";

/// Writes `count` held-out pipeline cases as `case_{seed}/` directories of
/// input PNGs plus the ground-truth `expected.png`.
pub fn export_cases(dir: &Path, dataset_seed: u64, size: usize, count: usize) -> Result<Vec<PathBuf>> {
    (0..count)
        .map(|i| {
            let seed = sample_seed(dataset_seed, i);
            let case = pipeline_case(seed, size)?;
            let case_dir = dir.join(format!("case_{seed}"));
            PipelineInputs::from(&case).write_dir(&case_dir)?;
            png_write(&case_dir.join(EXPECTED_FILE), &case.expected)?;
            Ok(case_dir)
        })
        .collect()
}

pub struct Pipeline {
    pub stages: [Generator; 3],
    pub tau: f64,
}

impl Pipeline {
    pub fn new(stages: [Generator; 3], tau: f64) -> Result<Self> {
        let size = stages[0].spec.image_size();
        for (i, g) in stages.iter().enumerate() {
            let cc = condition_channels(i as u8 + 1)?;
            if g.spec.condition_channels != cc || g.spec.image_size() != size {
                return Err(Error::Contract(format!(
                    "stage {} model takes {} channels at {}px, expected {cc} at {size}px",
                    i + 1,
                    g.spec.condition_channels,
                    g.spec.image_size()
                )));
            }
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")));
        }
        Ok(Self { stages, tau })
    }

    pub fn image_size(&self) -> usize {
        self.stages[0].spec.image_size()
    }

    fn generate(&self, stage: usize, conditions: &[&Tensor]) -> Result<Tensor> {
        let signed: Vec<Tensor> = conditions.iter().map(|t| to_signed(t)).collect();
        let refs: Vec<&Tensor> = signed.iter().collect();
        let out = self.stages[stage].forward(&ConditionSet::from_chw(&refs)?)?;
        Ok(quantize_8bit(&to_unit(&out.index_first(0)?)))
    }

    /// Runs all four stages. Inputs are first snapped to the 8-bit grid, as
    /// if they had been read from PNG files.
    pub fn run(&self, inputs: &PipelineInputs) -> Result<PipelineOutputs> {
        let size = inputs.size()?;
        let inputs = &inputs.quantized();
        if size != self.image_size() {
            return Err(Error::Contract(format!(
                "inputs are {size}px but the models expect {}px",
                self.image_size()
            )));
        }
        let stage1 = self.generate(0, &[&inputs.skeleton, &inputs.garment])?;
        let stage2 = self.generate(1, &[&inputs.body, &inputs.skeleton, &stage1])?;
        let diff_mask = difference_mask(&stage2, &inputs.silhouette, self.tau)?;
        // Stage 3 was trained on images whose holes are exactly black.
        let plane = diff_mask.len();
        let holed = Tensor::from_fn(stage2.shape(), |i| (1.0 - diff_mask.data()[i % plane]) * stage2.data()[i])?;
        let stage3 = self.generate(2, &[&holed, &diff_mask])?;
        let final_image = composite_stage4(&stage2, &stage3, &diff_mask, &inputs.head, &inputs.head_mask)?;
        Ok(PipelineOutputs {
            stage1,
            stage2,
            diff_mask,
            stage3,
            final_image,
        })
    }
}
