use super::condition::ConditionSet;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2dLayer, ConvTranspose2dLayer, InstanceNormLayer, ParamSet, ResidualBlock};
use crate::rng::RngState;
use crate::tensor::{Scalar, Tensor};

/// Coarsest resolution the encoder reaches.
pub const BOTTLENECK_RESOLUTION: usize = 4;
/// Skips above this resolution leave the generator too rigid to reshape.
pub const MAX_SKIP_RESOLUTION: usize = 16;
/// Stage widths stop doubling after this many halvings.
pub const MAX_WIDTH_DOUBLINGS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSpec {
    /// Channels entering the stem; the stem reads the full condition stack.
    pub input_channels: usize,
    /// Sum of channels over the condition set.
    pub condition_channels: usize,
    pub base_width: usize,
    /// Encoder resolutions, top first, halving down to 4.
    pub resolutions: Vec<usize>,
    pub skip_resolutions: Vec<usize>,
    pub output_channels: usize,
}

impl GeneratorSpec {
    /// Spec for a square `image_size` input with the default 4/8/16 skips.
    pub fn for_image(image_size: usize, condition_channels: usize, base_width: usize) -> Result<Self> {
        if !image_size.is_power_of_two() || image_size < 2 * BOTTLENECK_RESOLUTION {
            return Err(Error::Spec(format!(
                "image size {image_size} must be a power of two >= {}",
                2 * BOTTLENECK_RESOLUTION
            )));
        }
        let resolutions: Vec<usize> = std::iter::successors(Some(image_size), |&r| (r > BOTTLENECK_RESOLUTION).then_some(r / 2)).collect();
        let skip_resolutions = resolutions.iter().copied().filter(|&r| r <= MAX_SKIP_RESOLUTION).collect();
        let spec = Self {
            input_channels: condition_channels,
            condition_channels,
            base_width,
            resolutions,
            skip_resolutions,
            output_channels: 3,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.condition_channels == 0 || self.output_channels == 0 {
            return Err(Error::Spec("channel counts must be positive".into()));
        }
        if self.input_channels != self.condition_channels {
            return Err(Error::Spec(format!(
                "stem reads the condition stack: input_channels {} != condition_channels {}",
                self.input_channels, self.condition_channels
            )));
        }
        if self.resolutions.is_empty() || self.resolutions.last() != Some(&BOTTLENECK_RESOLUTION) {
            return Err(Error::Spec(format!(
                "resolutions {:?} must end at {BOTTLENECK_RESOLUTION}",
                self.resolutions
            )));
        }
        if self.resolutions.windows(2).any(|w| w[1] * 2 != w[0]) {
            return Err(Error::Spec(format!(
                "resolutions {:?} must halve at every stage",
                self.resolutions
            )));
        }
        for &r in &self.skip_resolutions {
            if r > MAX_SKIP_RESOLUTION {
                return Err(Error::Spec(format!(
                    "skip at {r}x{r} rejected: skips are limited to {MAX_SKIP_RESOLUTION}x{MAX_SKIP_RESOLUTION} and coarser"
                )));
            }
            if !self.resolutions.contains(&r) {
                return Err(Error::Spec(format!(
                    "skip resolution {r} is not an encoder resolution {:?}",
                    self.resolutions
                )));
            }
        }
        Ok(())
    }

    pub fn image_size(&self) -> usize {
        self.resolutions[0]
    }

    pub fn stages(&self) -> usize {
        self.resolutions.len()
    }

    /// `base_width * 2^min(stage, 3)`.
    pub fn width(&self, stage: usize) -> usize {
        self.base_width << stage.min(MAX_WIDTH_DOUBLINGS)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStage {
    pub resolution: usize,
    pub width: usize,
    pub resnet: ResidualBlock,
    /// Three conv + ReLU layers mapping the pooled conditions to `width`.
    pub cond_conv: [Conv2dLayer; 3],
    /// Two conv + instance-norm + ReLU layers fusing `2 * width` to `width`.
    pub conv_norm: [(Conv2dLayer, InstanceNormLayer); 2],
    pub down: Option<(Conv2dLayer, InstanceNormLayer)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStage {
    pub resolution: usize,
    pub width: usize,
    pub resnet: ResidualBlock,
    /// 1x1 conv restoring `width` after concatenating the encoder skip.
    pub skip_fuse: Option<(Conv2dLayer, InstanceNormLayer)>,
    pub up: Option<(ConvTranspose2dLayer, InstanceNormLayer)>,
}

/// What a forward pass actually wired, for structural audits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ForwardTrace {
    /// Resolution of each condition-module application, in execution order.
    pub condition_injections: Vec<usize>,
    /// Resolution of each encoder-to-decoder skip concatenation.
    pub skip_edges: Vec<usize>,
    /// `[channels, height, width]` of each encoder stage's fused output.
    pub encoder_features: Vec<[usize; 3]>,
}

#[derive(Clone, Debug)]
pub struct Generator<T: Scalar = f32> {
    pub spec: GeneratorSpec,
    pub params: ParamSet<T>,
    stem: (Conv2dLayer, InstanceNormLayer),
    encoder: Vec<EncoderStage>,
    decoder: Vec<DecoderStage>,
    head: Conv2dLayer,
}

fn conv_norm_relu<T: Scalar>(g: &mut Graph<T>, p: &Bound, layer: &(Conv2dLayer, InstanceNormLayer), x: Var) -> Result<Var> {
    let h = layer.0.forward(g, p, x)?;
    let h = layer.1.forward(g, p, h)?;
    Ok(g.relu(h))
}

fn up_norm_relu<T: Scalar>(g: &mut Graph<T>, p: &Bound, layer: &(ConvTranspose2dLayer, InstanceNormLayer), x: Var) -> Result<Var> {
    let h = layer.0.forward(g, p, x)?;
    let h = layer.1.forward(g, p, h)?;
    Ok(g.relu(h))
}

impl<T: Scalar> Generator<T> {
    pub fn build(spec: GeneratorSpec, rng: &mut RngState) -> Result<Self> {
        spec.validate()?;
        let mut ps = ParamSet::new();
        let w0 = spec.width(0);
        let stem = (
            Conv2dLayer::same(&mut ps, "stem.conv", spec.input_channels, w0, rng)?,
            InstanceNormLayer::new(&mut ps, "stem.norm", w0)?,
        );

        let mut encoder = Vec::with_capacity(spec.stages());
        for (s, &res) in spec.resolutions.iter().enumerate() {
            let w = spec.width(s);
            let name = |part: &str| format!("enc{s}.{part}");
            let cond_conv = [
                Conv2dLayer::same(&mut ps, &name("cond0"), spec.condition_channels, w, rng)?,
                Conv2dLayer::same(&mut ps, &name("cond1"), w, w, rng)?,
                Conv2dLayer::same(&mut ps, &name("cond2"), w, w, rng)?,
            ];
            let resnet = ResidualBlock::new(&mut ps, &name("res"), w, rng)?;
            let conv_norm = [
                (
                    Conv2dLayer::same(&mut ps, &name("fuse0.conv"), 2 * w, w, rng)?,
                    InstanceNormLayer::new(&mut ps, &name("fuse0.norm"), w)?,
                ),
                (
                    Conv2dLayer::same(&mut ps, &name("fuse1.conv"), w, w, rng)?,
                    InstanceNormLayer::new(&mut ps, &name("fuse1.norm"), w)?,
                ),
            ];
            let down = if s + 1 < spec.stages() {
                let wn = spec.width(s + 1);
                Some((
                    Conv2dLayer::down(&mut ps, &name("down.conv"), w, wn, rng)?,
                    InstanceNormLayer::new(&mut ps, &name("down.norm"), wn)?,
                ))
            } else {
                None
            };
            encoder.push(EncoderStage {
                resolution: res,
                width: w,
                resnet,
                cond_conv,
                conv_norm,
                down,
            });
        }

        let mut decoder = Vec::with_capacity(spec.stages());
        for (s, &res) in spec.resolutions.iter().enumerate().rev() {
            let w = spec.width(s);
            let name = |part: &str| format!("dec{s}.{part}");
            let resnet = ResidualBlock::new(&mut ps, &name("res"), w, rng)?;
            let skip_fuse = if spec.skip_resolutions.contains(&res) {
                Some((
                    Conv2dLayer::new(&mut ps, &name("skip.conv"), 2 * w, w, 1, 1, 0, rng)?,
                    InstanceNormLayer::new(&mut ps, &name("skip.norm"), w)?,
                ))
            } else {
                None
            };
            let up = if s > 0 {
                let wp = spec.width(s - 1);
                Some((
                    ConvTranspose2dLayer::up(&mut ps, &name("up.conv"), w, wp, rng)?,
                    InstanceNormLayer::new(&mut ps, &name("up.norm"), wp)?,
                ))
            } else {
                None
            };
            decoder.push(DecoderStage {
                resolution: res,
                width: w,
                resnet,
                skip_fuse,
                up,
            });
        }
        let head = Conv2dLayer::same(&mut ps, "head.conv", w0, spec.output_channels, rng)?;

        Ok(Self {
            spec,
            params: ps,
            stem,
            encoder,
            decoder,
            head,
        })
    }

    pub fn encoder(&self) -> &[EncoderStage] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DecoderStage] {
        &self.decoder
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let size = self.spec.image_size();
        match *shape {
            [_, c, h, w] if c == self.spec.condition_channels && h == size && w == size => Ok(()),
            _ => Err(Error::shape(
                "generator input",
                shape,
                &[shape.first().copied().unwrap_or(1), self.spec.condition_channels, size, size],
            )),
        }
    }

    /// Records the generator into `g`. `conditions` is the stacked
    /// `B x C x H x W` condition tensor.
    pub fn forward_graph(&self, g: &mut Graph<T>, p: &Bound, conditions: Var) -> Result<(Var, ForwardTrace)> {
        self.check_input(g.shape(conditions))?;
        let mut trace = ForwardTrace::default();
        let top = self.spec.image_size();

        let mut h = conv_norm_relu(g, p, &self.stem, conditions)?;
        let mut skips: Vec<(usize, Var)> = Vec::new();
        for stage in &self.encoder {
            let r = stage.resnet.forward(g, p, h)?;

            let mut c = g.avg_pool2d(conditions, top / stage.resolution)?;
            for conv in &stage.cond_conv {
                let y = conv.forward(g, p, c)?;
                c = g.relu(y);
            }
            trace.condition_injections.push(stage.resolution);

            let mut f = g.concat(&[r, c], 1)?;
            for layer in &stage.conv_norm {
                f = conv_norm_relu(g, p, layer, f)?;
            }
            let s = g.shape(f);
            trace.encoder_features.push([s[1], s[2], s[3]]);
            if self.spec.skip_resolutions.contains(&stage.resolution) {
                skips.push((stage.resolution, f));
            }
            h = match &stage.down {
                Some(down) => conv_norm_relu(g, p, down, f)?,
                None => f,
            };
        }

        for stage in &self.decoder {
            h = stage.resnet.forward(g, p, h)?;
            if let Some(fuse) = &stage.skip_fuse {
                let skip = skips
                    .iter()
                    .find(|(res, _)| *res == stage.resolution)
                    .map(|&(_, v)| v)
                    .expect("every decoder skip has an encoder source");
                let cat = g.concat(&[h, skip], 1)?;
                h = conv_norm_relu(g, p, fuse, cat)?;
                trace.skip_edges.push(stage.resolution);
            }
            if let Some(up) = &stage.up {
                h = up_norm_relu(g, p, up, h)?;
            }
        }
        let out = self.head.forward(g, p, h)?;
        Ok((g.tanh(out), trace))
    }

    /// Inference on a condition set; output is `B x 3 x H x W` in `[-1, 1]`.
    pub fn forward(&self, conditions: &ConditionSet<T>) -> Result<Tensor<T>> {
        Ok(self.forward_traced(conditions)?.0)
    }

    pub fn forward_traced(&self, conditions: &ConditionSet<T>) -> Result<(Tensor<T>, ForwardTrace)> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let c = g.constant(conditions.stacked());
        let (out, trace) = self.forward_graph(&mut g, &p, c)?;
        Ok((g.value(out).clone(), trace))
    }
}

impl<T: Scalar> Generator<T> {
    /// Same architecture with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator {
            spec: self.spec.clone(),
            params: self.params.cast(),
            stem: self.stem.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            head: self.head.clone(),
        }
    }
}
