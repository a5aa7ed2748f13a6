use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2dLayer, InstanceNormLayer, LinearLayer, ParamSet, LEAKY_SLOPE};
use crate::rng::RngState;
use crate::tensor::{Scalar, Tensor};

/// Strided 3x3 conv blocks (widths `b, b, 2b, 2b, 4b, 4b, 8b, 8b`, strides
/// alternating 1/2) followed by `flatten -> dense(hidden) -> leaky ReLU ->
/// dense(1)`. The score is linear, as the least-squares objective expects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscriminatorSpec {
    pub input_channels: usize,
    pub image_size: usize,
    pub base_width: usize,
    pub hidden: usize,
    /// Instance norm after each block conv. Off by default: per-image
    /// normalisation hides absolute colour from the critic, and on flat-colour
    /// garments the generator then stops matching colours at all.
    pub instance_norm: bool,
}

impl DiscriminatorSpec {
    pub fn new(image_size: usize, base_width: usize) -> Self {
        Self {
            input_channels: 3,
            image_size,
            base_width,
            hidden: 1024,
            instance_norm: false,
        }
    }

    /// `(width, stride)` of each conv block after the first layer. Small
    /// images drop trailing stride-2 blocks so the final map stays >= 2x2.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let b = self.base_width;
        let full = [(b, 2), (2 * b, 1), (2 * b, 2), (4 * b, 1), (4 * b, 2), (8 * b, 1), (8 * b, 2)];
        let mut res = self.image_size;
        let mut out = Vec::new();
        for &(w, s) in &full {
            if s == 2 {
                if res / 2 < 2 {
                    break;
                }
                res /= 2;
            }
            out.push((w, s));
        }
        out
    }

    pub fn final_resolution(&self) -> usize {
        self.blocks().iter().fold(self.image_size, |r, &(_, s)| r / s)
    }

    fn validate(&self) -> Result<()> {
        if self.image_size < 4 || !self.image_size.is_power_of_two() {
            return Err(Error::Spec(format!(
                "discriminator input {} must be a power of two >= 4",
                self.image_size
            )));
        }
        if self.base_width == 0 || self.hidden == 0 || self.input_channels == 0 {
            return Err(Error::Spec("discriminator widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator<T: Scalar = f32> {
    pub spec: DiscriminatorSpec,
    pub params: ParamSet<T>,
    first: Conv2dLayer,
    blocks: Vec<(Conv2dLayer, Option<InstanceNormLayer>)>,
    dense: LinearLayer,
    out: LinearLayer,
}

impl<T: Scalar> Discriminator<T> {
    pub fn build(spec: DiscriminatorSpec, rng: &mut RngState) -> Result<Self> {
        spec.validate()?;
        let mut ps = ParamSet::new();
        let first = Conv2dLayer::same(&mut ps, "d.conv0", spec.input_channels, spec.base_width, rng)?;
        let mut blocks = Vec::new();
        let mut in_ch = spec.base_width;
        for (i, (w, s)) in spec.blocks().into_iter().enumerate() {
            blocks.push((
                Conv2dLayer::new(&mut ps, &format!("d.block{}.conv", i + 1), in_ch, w, 3, s, 1, rng)?,
                if spec.instance_norm {
                    Some(InstanceNormLayer::new(&mut ps, &format!("d.block{}.norm", i + 1), w)?)
                } else {
                    None
                },
            ));
            in_ch = w;
        }
        let fr = spec.final_resolution();
        let dense = LinearLayer::new(&mut ps, "d.dense", in_ch * fr * fr, spec.hidden, rng)?;
        let out = LinearLayer::new(&mut ps, "d.out", spec.hidden, 1, rng)?;
        Ok(Self {
            spec,
            params: ps,
            first,
            blocks,
            dense,
            out,
        })
    }

    /// Records the discriminator into `g`; `image` is `B x 3 x H x W`, the
    /// result `B x 1`.
    pub fn forward_graph(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<Var> {
        let s = self.spec.image_size;
        let shape = g.shape(image).to_vec();
        let batch = match *shape {
            [b, c, h, w] if c == self.spec.input_channels && h == s && w == s => b,
            _ => {
                return Err(Error::shape(
                    "discriminator input",
                    &shape,
                    &[shape.first().copied().unwrap_or(1), self.spec.input_channels, s, s],
                ))
            }
        };
        let slope = T::from_f64(LEAKY_SLOPE);
        let h = self.first.forward(g, p, image)?;
        let mut h = g.leaky_relu(h, slope);
        for (conv, norm) in &self.blocks {
            let y = conv.forward(g, p, h)?;
            let y = match norm {
                Some(n) => n.forward(g, p, y)?,
                None => y,
            };
            h = g.leaky_relu(y, slope);
        }
        let features: usize = g.shape(h)[1..].iter().product();
        let flat = g.reshape(h, &[batch, features])?;
        let d = self.dense.forward(g, p, flat)?;
        let d = g.leaky_relu(d, slope);
        self.out.forward(g, p, d)
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(image.clone());
        let out = self.forward_graph(&mut g, &p, x)?;
        Ok(g.value(out).clone())
    }
}

impl<T: Scalar> Discriminator<T> {
    pub fn cast<U: Scalar>(&self) -> Discriminator<U> {
        Discriminator {
            spec: self.spec.clone(),
            params: self.params.cast(),
            first: self.first.clone(),
            blocks: self.blocks.clone(),
            dense: self.dense.clone(),
            out: self.out.clone(),
        }
    }
}
