//! Procedural stand-in for photographic try-on data.
//!
//! A scene is a posed stick figure wearing a parametric shirt. Because the
//! renderer knows the exact geometry, every stage gets pixel-exact ground
//! truth: the posed garment (stage 1), the dressed body (stage 2) and the
//! clean composite behind irregular holes (stage 3). All images are
//! `C x H x W` in `[0, 1]`; masks are `1 x H x W` in `{0, 1}`.

mod dataset;
mod holes;
mod pose;
mod render;

pub use dataset::{export_dataset, load_split, sample_seed, DatasetSpec, Manifest, ManifestRow, Split, MANIFEST_FILE, MANIFEST_HEADER};
pub use holes::{irregular_hole_mask, HOLE_FRACTION, MAX_BLOBS};
pub use pose::{bones, PoseParams, Side, V2};
pub use render::{
    render_body, render_garment, render_head, render_skeleton, rotate_translate, BodyParams, GarmentParams, Texture,
    MIN_BRIGHTNESS,
};

use crate::error::{Error, Result};
use crate::net::ConditionSet;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::train::{to_signed, TrainPair};

pub const DEFAULT_TAU: f64 = 0.06;
/// Presentation angles of the stage-2 garment condition, in degrees.
pub const STAGE2_ROTATIONS: [f64; 5] = [-30.0, -15.0, 0.0, 15.0, 30.0];
/// Largest stage-2 garment shift, in pixels, along each axis.
pub const STAGE2_MAX_SHIFT: i32 = 3;

/// Per-stage condition roles, in network input order.
pub fn condition_roles(stage: u8) -> Result<&'static [&'static str]> {
    match stage {
        1 => Ok(&["skeleton", "garment"]),
        2 => Ok(&["body", "skeleton", "garment"]),
        3 => Ok(&["holed", "hole_mask"]),
        _ => Err(Error::Domain(format!("stage {stage} is not a trainable stage (1-3)"))),
    }
}

/// Total condition channels of a stage.
pub fn condition_channels(stage: u8) -> Result<usize> {
    Ok(condition_roles(stage)?.iter().map(|r| if r.ends_with("mask") { 1 } else { 3 }).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSample {
    pub stage: u8,
    pub seed: u64,
    /// Named condition images in network input order.
    pub conditions: Vec<(&'static str, Tensor)>,
    pub target: Tensor,
    pub masks: Vec<(&'static str, Tensor)>,
}

impl StageSample {
    pub fn condition(&self, role: &str) -> Option<&Tensor> {
        self.conditions.iter().find(|(r, _)| *r == role).map(|(_, t)| t)
    }

    pub fn mask(&self, role: &str) -> Option<&Tensor> {
        self.masks.iter().find(|(r, _)| *r == role).map(|(_, t)| t)
    }

    /// Conditions as a batch-of-one set, still in `[0, 1]`.
    pub fn condition_set(&self) -> Result<ConditionSet> {
        let refs: Vec<&Tensor> = self.conditions.iter().map(|(_, t)| t).collect();
        ConditionSet::from_chw(&refs)
    }

    /// Network-space training pair (`[-1, 1]`).
    pub fn train_pair(&self) -> Result<TrainPair> {
        Ok(TrainPair {
            conditions: to_signed(&self.condition_set()?.stacked()),
            target: to_signed(&self.target).unsqueeze0(),
        })
    }
}

/// Everything random about one rendered person.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scene {
    pub pose: PoseParams,
    pub garment: GarmentParams,
    pub body: BodyParams,
}

/// Rendered layers of a [`Scene`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneImages {
    pub skeleton: Tensor,
    pub garment: Tensor,
    pub garment_mask: Tensor,
    /// Headless body without garment.
    pub body: Tensor,
    pub body_mask: Tensor,
    /// Headless body with the garment region zeroed.
    pub blanked: Tensor,
    /// Headless dressed body.
    pub composite: Tensor,
    /// Support of `composite`.
    pub silhouette: Tensor,
    pub head: Tensor,
    pub head_mask: Tensor,
}

fn select(mask: &Tensor, on: &Tensor, off: &Tensor) -> Tensor {
    let plane = mask.len();
    Tensor::from_fn(on.shape(), |i| if mask.data()[i % plane] > 0.5 { on.data()[i] } else { off.data()[i] })
        .expect("shapes come from the renderer")
}

impl Scene {
    pub fn random(rng: &mut RngState) -> Self {
        Self {
            pose: PoseParams::random(rng),
            garment: GarmentParams::random(rng),
            body: BodyParams::random(rng),
        }
    }

    pub fn render(&self, size: usize) -> Result<SceneImages> {
        let skeleton = render_skeleton(&self.pose, size)?;
        let (garment, garment_mask) = render_garment(&self.garment, &self.pose, size)?;
        let (body, body_mask) = render_body(&self.body, &self.pose, size)?;
        let (head, head_mask) = render_head(&self.body, &self.pose, size)?;
        let black = Tensor::zeros(body.shape())?;
        let blanked = select(&garment_mask, &black, &body);
        let composite = select(&garment_mask, &garment, &body);
        let silhouette = body_mask.zip_map(&garment_mask, "silhouette", f32::max)?;
        Ok(SceneImages {
            skeleton,
            garment,
            garment_mask,
            body,
            body_mask,
            blanked,
            composite,
            silhouette,
            head,
            head_mask,
        })
    }
}

/// Garment at the canonical pose, the stage-1 reference input.
pub fn canonical_garment(g: &GarmentParams, size: usize) -> Result<Tensor> {
    Ok(render_garment(g, &PoseParams::CANONICAL, size)?.0)
}

pub fn make_stage1_sample(rng: &mut RngState, size: usize) -> Result<StageSample> {
    let scene = Scene::random(rng);
    stage1_from_scene(&scene, rng.seed(), size)
}

pub fn stage1_from_scene(scene: &Scene, seed: u64, size: usize) -> Result<StageSample> {
    let skeleton = render_skeleton(&scene.pose, size)?;
    let (target, mask) = render_garment(&scene.garment, &scene.pose, size)?;
    Ok(StageSample {
        stage: 1,
        seed,
        conditions: vec![("skeleton", skeleton), ("garment", canonical_garment(&scene.garment, size)?)],
        target,
        masks: vec![("garment_mask", mask)],
    })
}

pub fn make_stage2_sample(rng: &mut RngState, size: usize) -> Result<StageSample> {
    let scene = Scene::random(rng);
    let degrees = STAGE2_ROTATIONS[rng.below(STAGE2_ROTATIONS.len())];
    let span = 2 * STAGE2_MAX_SHIFT as usize + 1;
    let dx = rng.below(span) as i32 - STAGE2_MAX_SHIFT;
    let dy = rng.below(span) as i32 - STAGE2_MAX_SHIFT;
    stage2_from_scene(&scene, rng.seed(), size, degrees, (dx, dy))
}

/// Stage-2 sample with an explicit presentation of the garment condition.
pub fn stage2_from_scene(scene: &Scene, seed: u64, size: usize, degrees: f64, shift: (i32, i32)) -> Result<StageSample> {
    let im = scene.render(size)?;
    let presented = rotate_translate(&im.garment, degrees, shift.0, shift.1)?;
    Ok(StageSample {
        stage: 2,
        seed,
        conditions: vec![("body", im.blanked), ("skeleton", im.skeleton), ("garment", presented)],
        target: im.composite,
        masks: vec![("garment_mask", im.garment_mask), ("silhouette", im.silhouette)],
    })
}

pub fn make_stage3_sample(rng: &mut RngState, size: usize) -> Result<StageSample> {
    let scene = Scene::random(rng);
    let im = scene.render(size)?;
    let holes = irregular_hole_mask(rng, &im.silhouette)?;
    stage3_from_parts(rng.seed(), im.composite, im.silhouette, holes)
}

pub fn stage3_from_parts(seed: u64, composite: Tensor, silhouette: Tensor, holes: Tensor) -> Result<StageSample> {
    let keep = holes.map(|h| 1.0 - h);
    let holed = select(&keep, &composite, &Tensor::zeros(composite.shape())?);
    Ok(StageSample {
        stage: 3,
        seed,
        conditions: vec![("holed", holed), ("hole_mask", holes.clone())],
        target: composite,
        masks: vec![("hole_mask", holes), ("silhouette", silhouette)],
    })
}

/// Deterministic sample for `(stage, seed, size)`.
pub fn sample(stage: u8, seed: u64, size: usize) -> Result<StageSample> {
    let mut rng = RngState::new(seed).split(stage as u64);
    match stage {
        1 => make_stage1_sample(&mut rng, size),
        2 => make_stage2_sample(&mut rng, size),
        3 => make_stage3_sample(&mut rng, size),
        _ => Err(Error::Domain(format!("stage {stage} is not a trainable stage (1-3)"))),
    }
    .map(|mut s| {
        s.seed = seed;
        s
    })
}

fn check_mask(op: &'static str, image: &Tensor, mask: &Tensor) -> Result<()> {
    match (image.shape(), mask.shape()) {
        ([_, h, w], [1, mh, mw]) if h == mh && w == mw => Ok(()),
        (a, b) => Err(Error::shape(op, a, b)),
    }
}

/// Silhouette pixels whose brightest channel is below `tau`: body area the
/// stage-2 output left unfilled.
pub fn difference_mask(stage2: &Tensor, silhouette: &Tensor, tau: f64) -> Result<Tensor> {
    check_mask("difference_mask", stage2, silhouette)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("tau = {tau} must lie in (0, 1)")));
    }
    let plane = silhouette.len();
    let c = stage2.shape()[0];
    let tau = tau as f32;
    Tensor::from_fn(silhouette.shape(), |i| {
        let bright = (0..c).map(|ch| stage2.data()[ch * plane + i]).fold(f32::MIN, f32::max);
        if silhouette.data()[i] > 0.5 && bright < tau {
            1.0
        } else {
            0.0
        }
    })
}

/// `head_mask·head + (1 − head_mask)·(m·stage3 + (1 − m)·stage2)`.
pub fn composite_stage4(stage2: &Tensor, stage3: &Tensor, diff: &Tensor, head: &Tensor, head_mask: &Tensor) -> Result<Tensor> {
    for other in [stage3, head] {
        if other.shape() != stage2.shape() {
            return Err(Error::shape("composite_stage4", stage2.shape(), other.shape()));
        }
    }
    check_mask("composite_stage4", stage2, diff)?;
    check_mask("composite_stage4", stage2, head_mask)?;
    for m in [diff, head_mask] {
        if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Contract("composite masks must be binary".into()));
        }
    }
    let plane = diff.len();
    Tensor::from_fn(stage2.shape(), |i| {
        let (m, hm) = (diff.data()[i % plane], head_mask.data()[i % plane]);
        let body = m * stage3.data()[i] + (1.0 - m) * stage2.data()[i];
        hm * head.data()[i] + (1.0 - hm) * body
    })
}

/// Inputs of the four-stage inference pipeline for one held-out person,
/// with the ground-truth final image.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineCase {
    pub skeleton: Tensor,
    /// Reference garment at the canonical pose.
    pub garment: Tensor,
    /// Headless body with the garment region blanked.
    pub body: Tensor,
    pub silhouette: Tensor,
    pub head: Tensor,
    pub head_mask: Tensor,
    /// Dressed body with head.
    pub expected: Tensor,
}

pub const PIPELINE_INPUTS: [&str; 6] = ["skeleton", "garment", "body", "silhouette", "head", "head_mask"];

pub fn pipeline_case(seed: u64, size: usize) -> Result<PipelineCase> {
    let mut rng = RngState::new(seed).split(4);
    let scene = Scene::random(&mut rng);
    let im = scene.render(size)?;
    let expected = select(&im.head_mask, &im.head, &im.composite);
    Ok(PipelineCase {
        skeleton: im.skeleton,
        garment: canonical_garment(&scene.garment, size)?,
        body: im.blanked,
        silhouette: im.silhouette,
        head: im.head,
        head_mask: im.head_mask,
        expected,
    })
}
