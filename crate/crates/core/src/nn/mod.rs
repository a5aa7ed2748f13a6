//! Layers and the optimizer.
//!
//! Layers are lightweight descriptors: hyperparameters plus [`ParamId`]s into
//! the [`ParamSet`] of the network that owns them. Forward passes are generic
//! over the scalar type so whole networks can be gradient-checked in `f64`.

mod adam;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use params::{Bound, ParamId, ParamSet};

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::rng::RngState;
use crate::tensor::{Scalar, Tensor};

/// Standard deviation of the normal weight initializer.
pub const INIT_STD: f64 = 0.02;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;

fn init_normal<T: Scalar>(shape: &[usize], rng: &mut RngState) -> Result<Tensor<T>> {
    Tensor::from_fn(shape, |_| T::from_f64(INIT_STD * rng.normal()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        let weight = params.insert(
            format!("{name}.weight"),
            init_normal(&[out_ch, in_ch, kernel, kernel], rng)?,
        );
        let bias = params.insert(format!("{name}.bias"), Tensor::zeros(&[out_ch])?);
        Ok(Self {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        })
    }

    /// 3x3, stride 1, padding 1: keeps the spatial extent.
    pub fn same<T: Scalar>(params: &mut ParamSet<T>, name: &str, in_ch: usize, out_ch: usize, rng: &mut RngState) -> Result<Self> {
        Self::new(params, name, in_ch, out_ch, 3, 1, 1, rng)
    }

    /// 4x4, stride 2, padding 1: halves the spatial extent.
    pub fn down<T: Scalar>(params: &mut ParamSet<T>, name: &str, in_ch: usize, out_ch: usize, rng: &mut RngState) -> Result<Self> {
        Self::new(params, name, in_ch, out_ch, 4, 2, 1, rng)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p.var(self.weight), p.var(self.bias), self.stride, self.padding)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        let weight = params.insert(
            format!("{name}.weight"),
            init_normal(&[in_ch, out_ch, kernel, kernel], rng)?,
        );
        let bias = params.insert(format!("{name}.bias"), Tensor::zeros(&[out_ch])?);
        Ok(Self {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        })
    }

    /// 4x4, stride 2, padding 1: doubles the spatial extent.
    pub fn up<T: Scalar>(params: &mut ParamSet<T>, name: &str, in_ch: usize, out_ch: usize, rng: &mut RngState) -> Result<Self> {
        Self::new(params, name, in_ch, out_ch, 4, 2, 1, rng)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.conv_transpose2d(x, p.var(self.weight), p.var(self.bias), self.stride, self.padding)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub eps: f64,
}

impl InstanceNormLayer {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, name: &str, channels: usize) -> Result<Self> {
        let gamma = params.insert(format!("{name}.gamma"), Tensor::full(&[channels], T::ONE)?);
        let beta = params.insert(format!("{name}.beta"), Tensor::zeros(&[channels])?);
        Ok(Self {
            gamma,
            beta,
            channels,
            eps: NORM_EPS,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.instance_norm(x, p.var(self.gamma), p.var(self.beta), T::from_f64(self.eps))
    }
}

/// Fully connected layer on `B x F` inputs; weight is stored `F x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl LinearLayer {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, name: &str, in_features: usize, out_features: usize, rng: &mut RngState) -> Result<Self> {
        let weight = params.insert(
            format!("{name}.weight"),
            init_normal(&[in_features, out_features], rng)?,
        );
        let bias = params.insert(format!("{name}.bias"), Tensor::zeros(&[out_features])?);
        Ok(Self {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.weight))?;
        g.bias_add(y, p.var(self.bias))
    }
}

/// Two 3x3 conv + instance-norm layers (ReLU between) on an identity shortcut.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv2dLayer,
    pub norm1: InstanceNormLayer,
    pub conv2: Conv2dLayer,
    pub norm2: InstanceNormLayer,
}

impl ResidualBlock {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, name: &str, channels: usize, rng: &mut RngState) -> Result<Self> {
        Ok(Self {
            conv1: Conv2dLayer::same(params, &format!("{name}.conv1"), channels, channels, rng)?,
            norm1: InstanceNormLayer::new(params, &format!("{name}.norm1"), channels)?,
            conv2: Conv2dLayer::same(params, &format!("{name}.conv2"), channels, channels, rng)?,
            norm2: InstanceNormLayer::new(params, &format!("{name}.norm2"), channels)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, p, x)?;
        let h = self.norm1.forward(g, p, h)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, p, h)?;
        let h = self.norm2.forward(g, p, h)?;
        g.add(x, h)
    }
}
