use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::kernels::{col2im, gemm, im2col, ConvGeom};
use crate::tensor::{Scalar, Tensor};

/// Checks that `x` is `B x C x H x W` and returns the four extents.
pub(crate) fn dims4(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [b, c, h, w] => Ok((b, c, h, w)),
        _ => Err(Error::Contract(format!(
            "{op} expects a B x C x H x W input, got {shape:?}"
        ))),
    }
}

impl<T: Scalar> Graph<T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push_op(v, Op::Add, vec![a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push_op(v, Op::Sub, vec![a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push_op(v, Op::Mul, vec![a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push_op(v, Op::Scale(s), vec![a])
    }

    /// `[m x k] * [k x n] -> [m x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = match (sa, sb) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            _ => return Err(Error::shape("matmul", sa, sb)),
        };
        let mut out = vec![T::ZERO; m * n];
        gemm(false, false, m, k, n, T::ONE, self.value(a).data(), self.value(b).data(), T::ZERO, &mut out);
        Ok(self.push_op(Tensor::from_parts(vec![m, n], out), Op::Matmul, vec![a, b]))
    }

    /// Adds `bias[c]` to every element of channel `c` (axis 1).
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || self.shape(bias) != [shape[1]] {
            return Err(Error::shape("bias_add", &shape, self.shape(bias)));
        }
        let channels = shape[1];
        let inner: usize = shape[2..].iter().product();
        let b = self.value(bias).data().to_vec();
        let mut v = self.value(x).clone();
        for (i, chunk) in v.data_mut().chunks_mut(inner).enumerate() {
            let bc = b[i % channels];
            chunk.iter_mut().for_each(|e| *e += bc);
        }
        Ok(self.push_op(v, Op::BiasAdd, vec![x, bias]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat(&tensors, axis)?;
        let sizes = tensors.iter().map(|t| t.shape()[axis]).collect();
        Ok(self.push_op(v, Op::Concat { axis, sizes }, parts.to_vec()))
    }

    /// Cross-correlation of `x [B x C x H x W]` with `weight [O x C x k x k]`
    /// plus `bias [O]`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let (b, c, h, w) = dims4("conv2d", self.shape(x))?;
        let (o, k) = match *self.shape(weight) {
            [o, ci, k, k2] if ci == c && k == k2 => (o, k),
            _ => return Err(Error::shape("conv2d", self.shape(x), self.shape(weight))),
        };
        if self.shape(bias) != [o] {
            return Err(Error::shape("conv2d bias", self.shape(weight), self.shape(bias)));
        }
        let g = ConvGeom::new(c, h, w, k, stride, pad).ok_or_else(|| {
            Error::Contract(format!(
                "conv2d: {h}x{w} input with padding {pad} is smaller than kernel {k} (stride {stride})"
            ))
        })?;
        let p = g.col_cols();
        let mut cols = vec![T::ZERO; g.col_rows() * p];
        let mut out = vec![T::ZERO; b * o * p];
        let xd = self.value(x).data();
        let wd = self.value(weight).data();
        let bd = self.value(bias).data();
        for bi in 0..b {
            im2col(&xd[bi * g.image_len()..(bi + 1) * g.image_len()], &g, &mut cols);
            let y = &mut out[bi * o * p..(bi + 1) * o * p];
            for (oc, row) in y.chunks_mut(p).enumerate() {
                row.fill(bd[oc]);
            }
            gemm(false, false, o, g.col_rows(), p, T::ONE, wd, &cols, T::ONE, y);
        }
        let v = Tensor::from_parts(vec![b, o, g.out_h, g.out_w], out);
        Ok(self.push_op(v, Op::Conv2d { stride, pad }, vec![x, weight, bias]))
    }

    /// Transposed convolution (gradient of [`Graph::conv2d`] w.r.t. its
    /// input). `weight` is `[C_in x C_out x k x k]`; output extent is
    /// `(H - 1) * stride - 2 * pad + k`.
    pub fn conv_transpose2d(&mut self, x: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let (b, ci, h, w) = dims4("conv_transpose2d", self.shape(x))?;
        let (co, k) = match *self.shape(weight) {
            [c, co, k, k2] if c == ci && k == k2 => (co, k),
            _ => return Err(Error::shape("conv_transpose2d", self.shape(x), self.shape(weight))),
        };
        if self.shape(bias) != [co] {
            return Err(Error::shape("conv_transpose2d bias", self.shape(weight), self.shape(bias)));
        }
        let g = transpose_geom(co, h, w, k, stride, pad)?;
        let hw = h * w;
        let mut cols = vec![T::ZERO; g.col_rows() * hw];
        let out_len = g.image_len();
        let mut out = vec![T::ZERO; b * out_len];
        let xd = self.value(x).data();
        let wd = self.value(weight).data();
        let bd = self.value(bias).data();
        for bi in 0..b {
            gemm(true, false, co * k * k, ci, hw, T::ONE, wd, &xd[bi * ci * hw..(bi + 1) * ci * hw], T::ZERO, &mut cols);
            let y = &mut out[bi * out_len..(bi + 1) * out_len];
            for (oc, plane) in y.chunks_mut(g.height * g.width).enumerate() {
                plane.fill(bd[oc]);
            }
            col2im(&cols, &g, y);
        }
        let v = Tensor::from_parts(vec![b, co, g.height, g.width], out);
        Ok(self.push_op(v, Op::ConvTranspose2d { stride, pad }, vec![x, weight, bias]))
    }

    /// Per-(batch, channel) plane normalization with affine `gamma`/`beta`.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (b, c, h, w) = dims4("instance_norm", self.shape(x))?;
        if h * w < 2 {
            return Err(Error::Degenerate(format!(
                "instance_norm over a {h}x{w} plane has no spatial variance"
            )));
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("instance_norm", self.shape(x), self.shape(gamma)));
        }
        let n = h * w;
        let inv_n = T::from_f64(1.0 / n as f64);
        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut normalized = vec![T::ZERO; xd.len()];
        let mut out = vec![T::ZERO; xd.len()];
        let mut inv_std = Vec::with_capacity(b * c);
        for plane in 0..b * c {
            let ch = plane % c;
            let src = &xd[plane * n..(plane + 1) * n];
            let mean = src.iter().fold(T::ZERO, |a, &v| a + v) * inv_n;
            let var = src.iter().fold(T::ZERO, |a, &v| a + (v - mean) * (v - mean)) * inv_n;
            let is = T::ONE / (var + eps).sqrt();
            inv_std.push(is);
            let dst_n = &mut normalized[plane * n..(plane + 1) * n];
            let dst_o = &mut out[plane * n..(plane + 1) * n];
            for ((dn, d_o), &v) in dst_n.iter_mut().zip(dst_o.iter_mut()).zip(src) {
                *dn = (v - mean) * is;
                *d_o = *dn * gd[ch] + bd[ch];
            }
        }
        let shape = vec![b, c, h, w];
        let op = Op::InstanceNorm {
            normalized: Tensor::from_parts(shape.clone(), normalized),
            inv_std,
        };
        Ok(self.push_op(Tensor::from_parts(shape, out), op, vec![x, gamma, beta]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| if e > T::ZERO { e } else { T::ZERO });
        self.push_op(v, Op::Relu, vec![x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let v = self.value(x).map(|e| if e > T::ZERO { e } else { e * slope });
        self.push_op(v, Op::LeakyRelu(slope), vec![x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| e.tanh());
        self.push_op(v, Op::Tanh, vec![x])
    }

    /// Mean over non-overlapping `factor x factor` blocks.
    pub fn avg_pool2d(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (b, c, h, w) = dims4("avg_pool2d", self.shape(x))?;
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::Contract(format!(
                "avg_pool2d factor {factor} does not divide {h}x{w}"
            )));
        }
        if factor == 1 {
            let v = self.value(x).clone();
            return Ok(self.push_op(v, Op::AvgPool(1), vec![x]));
        }
        let (oh, ow) = (h / factor, w / factor);
        let norm = T::from_f64(1.0 / (factor * factor) as f64);
        let xd = self.value(x).data();
        let mut out = vec![T::ZERO; b * c * oh * ow];
        for plane in 0..b * c {
            let src = &xd[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
            for y in 0..h {
                let row = &src[y * w..(y + 1) * w];
                let drow = &mut dst[(y / factor) * ow..(y / factor + 1) * ow];
                for (xi, &v) in row.iter().enumerate() {
                    drow[xi / factor] += v;
                }
            }
            dst.iter_mut().for_each(|v| *v *= norm);
        }
        let v = Tensor::from_parts(vec![b, c, oh, ow], out);
        Ok(self.push_op(v, Op::AvgPool(factor), vec![x]))
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.sum() / T::from_f64(t.len() as f64);
        self.push_op(Tensor::scalar(m), Op::Mean, vec![x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push_op(Tensor::scalar(s), Op::Sum, vec![x])
    }

    /// `mean(|a - b|)`.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let s = ta
            .data()
            .iter()
            .zip(tb.data())
            .fold(T::ZERO, |acc, (&x, &y)| acc + (x - y).abs());
        let m = s / T::from_f64(ta.len() as f64);
        Ok(self.push_op(Tensor::scalar(m), Op::L1, vec![a, b]))
    }

    /// `mean((a - b)^2)`.
    pub fn l2(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l2", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let s = ta
            .data()
            .iter()
            .zip(tb.data())
            .fold(T::ZERO, |acc, (&x, &y)| acc + (x - y) * (x - y));
        let m = s / T::from_f64(ta.len() as f64);
        Ok(self.push_op(Tensor::scalar(m), Op::L2, vec![a, b]))
    }

    /// Zero padding of the two spatial axes.
    pub fn pad2d(&mut self, x: Var, top: usize, bottom: usize, left: usize, right: usize) -> Result<Var> {
        let (b, c, h, w) = dims4("pad2d", self.shape(x))?;
        let (oh, ow) = (h + top + bottom, w + left + right);
        let xd = self.value(x).data();
        let mut out = vec![T::ZERO; b * c * oh * ow];
        for plane in 0..b * c {
            for y in 0..h {
                let src = &xd[(plane * h + y) * w..(plane * h + y + 1) * w];
                let start = (plane * oh + y + top) * ow + left;
                out[start..start + w].copy_from_slice(src);
            }
        }
        let v = Tensor::from_parts(vec![b, c, oh, ow], out);
        Ok(self.push_op(v, Op::Pad2d { top, bottom, left, right }, vec![x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push_op(v, Op::Reshape, vec![x]))
    }
}

/// Geometry of the convolution a transposed convolution is the adjoint of:
/// it maps the (larger) output back onto the `h x w` input.
pub(crate) fn transpose_geom(co: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<ConvGeom> {
    let oh = ((h - 1) * stride + k).checked_sub(2 * pad);
    let ow = ((w - 1) * stride + k).checked_sub(2 * pad);
    let bad = || {
        Error::Contract(format!(
            "conv_transpose2d: kernel {k}, stride {stride}, pad {pad} gives empty output for {h}x{w}"
        ))
    };
    let (oh, ow) = match (oh, ow) {
        (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
        _ => return Err(bad()),
    };
    let g = ConvGeom::new(co, oh, ow, k, stride, pad).ok_or_else(bad)?;
    debug_assert_eq!((g.out_h, g.out_w), (h, w));
    Ok(g)
}
