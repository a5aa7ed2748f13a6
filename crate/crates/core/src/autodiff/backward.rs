use super::ops::{dims4, transpose_geom};
use super::{Graph, Op, Var};
use crate::error::Result;
use crate::kernels::{col2im, gemm, im2col, ConvGeom};
use crate::tensor::{Scalar, Tensor};

/// `d root / d node` for every node that requires grad and lies upstream of
/// the root.
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::from_parts(shape.to_vec(), vec![T::ZERO; shape.iter().product()]))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

pub(super) fn run<T: Scalar>(graph: &Graph<T>, root: Var) -> Result<Gradients<T>> {
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; root.0 + 1];
    if !graph.requires_grad(root) {
        return Ok(Gradients { grads });
    }
    grads[root.0] = Some(Tensor::from_parts(
        graph.shape(root).to_vec(),
        vec![T::ONE],
    ));
    for i in (0..=root.0).rev() {
        let node = &graph.nodes[i];
        if !node.requires_grad || matches!(node.op, Op::Leaf) {
            continue;
        }
        let Some(g) = grads[i].take() else { continue };
        let wants = |p: usize| graph.nodes[node.parents[p].0].requires_grad;
        let parent_val = |p: usize| &graph.nodes[node.parents[p].0].value;
        let mut out: Vec<(usize, Tensor<T>)> = Vec::with_capacity(node.parents.len());

        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Add => {
                for p in 0..2 {
                    if wants(p) {
                        out.push((p, g.clone()));
                    }
                }
            }
            Op::Sub => {
                if wants(0) {
                    out.push((0, g.clone()));
                }
                if wants(1) {
                    out.push((1, g.map(|x| -x)));
                }
            }
            Op::Mul => {
                if wants(0) {
                    out.push((0, g.zip_map(parent_val(1), "mul", |a, b| a * b)?));
                }
                if wants(1) {
                    out.push((1, g.zip_map(parent_val(0), "mul", |a, b| a * b)?));
                }
            }
            Op::Scale(s) => out.push((0, g.map(|x| x * *s))),
            Op::Matmul => {
                let (a, b) = (parent_val(0), parent_val(1));
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                if wants(0) {
                    let mut da = vec![T::ZERO; m * k];
                    gemm(false, true, m, n, k, T::ONE, g.data(), b.data(), T::ZERO, &mut da);
                    out.push((0, Tensor::from_parts(vec![m, k], da)));
                }
                if wants(1) {
                    let mut db = vec![T::ZERO; k * n];
                    gemm(true, false, k, m, n, T::ONE, a.data(), g.data(), T::ZERO, &mut db);
                    out.push((1, Tensor::from_parts(vec![k, n], db)));
                }
            }
            Op::BiasAdd => {
                if wants(0) {
                    out.push((0, g.clone()));
                }
                if wants(1) {
                    out.push((1, channel_sums(&g)));
                }
            }
            Op::Concat { axis, sizes } => {
                for (p, part) in g.split(*axis, sizes)?.into_iter().enumerate() {
                    if wants(p) {
                        out.push((p, part));
                    }
                }
            }
            Op::Conv2d { stride, pad } => {
                let (x, w) = (parent_val(0), parent_val(1));
                let (b, c, h, wd) = dims4("conv2d", x.shape())?;
                let (o, k) = (w.shape()[0], w.shape()[2]);
                let geom = ConvGeom::new(c, h, wd, k, *stride, *pad).expect("validated in forward");
                let (rows, p) = (geom.col_rows(), geom.col_cols());
                let mut cols = vec![T::ZERO; rows * p];
                let mut dx = wants(0).then(|| vec![T::ZERO; x.len()]);
                let mut dw = wants(1).then(|| vec![T::ZERO; w.len()]);
                for bi in 0..b {
                    let gy = &g.data()[bi * o * p..(bi + 1) * o * p];
                    if let Some(dw) = dw.as_mut() {
                        im2col(&x.data()[bi * geom.image_len()..(bi + 1) * geom.image_len()], &geom, &mut cols);
                        gemm(false, true, o, p, rows, T::ONE, gy, &cols, T::ONE, dw);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(true, false, rows, o, p, T::ONE, w.data(), gy, T::ZERO, &mut cols);
                        col2im(&cols, &geom, &mut dx[bi * geom.image_len()..(bi + 1) * geom.image_len()]);
                    }
                }
                if let Some(dx) = dx {
                    out.push((0, Tensor::from_parts(x.shape().to_vec(), dx)));
                }
                if let Some(dw) = dw {
                    out.push((1, Tensor::from_parts(w.shape().to_vec(), dw)));
                }
                if wants(2) {
                    out.push((2, channel_sums(&g)));
                }
            }
            Op::ConvTranspose2d { stride, pad } => {
                let (x, w) = (parent_val(0), parent_val(1));
                let (b, ci, h, wd) = dims4("conv_transpose2d", x.shape())?;
                let (co, k) = (w.shape()[1], w.shape()[2]);
                let geom = transpose_geom(co, h, wd, k, *stride, *pad)?;
                let hw = h * wd;
                let rows = geom.col_rows();
                let mut cols = vec![T::ZERO; rows * hw];
                let mut dx = wants(0).then(|| vec![T::ZERO; x.len()]);
                let mut dw = wants(1).then(|| vec![T::ZERO; w.len()]);
                for bi in 0..b {
                    let gy = &g.data()[bi * geom.image_len()..(bi + 1) * geom.image_len()];
                    im2col(gy, &geom, &mut cols);
                    if let Some(dx) = dx.as_mut() {
                        gemm(false, false, ci, rows, hw, T::ONE, w.data(), &cols, T::ZERO, &mut dx[bi * ci * hw..(bi + 1) * ci * hw]);
                    }
                    if let Some(dw) = dw.as_mut() {
                        gemm(false, true, ci, hw, rows, T::ONE, &x.data()[bi * ci * hw..(bi + 1) * ci * hw], &cols, T::ONE, dw);
                    }
                }
                if let Some(dx) = dx {
                    out.push((0, Tensor::from_parts(x.shape().to_vec(), dx)));
                }
                if let Some(dw) = dw {
                    out.push((1, Tensor::from_parts(w.shape().to_vec(), dw)));
                }
                if wants(2) {
                    out.push((2, channel_sums(&g)));
                }
            }
            Op::InstanceNorm { normalized, inv_std } => {
                let gamma = parent_val(1);
                let (_, c, h, w) = dims4("instance_norm", g.shape())?;
                let n = h * w;
                let nf = T::from_f64(n as f64);
                let mut dx = vec![T::ZERO; g.len()];
                let mut dgamma = vec![T::ZERO; c];
                let mut dbeta = vec![T::ZERO; c];
                for (plane, &is) in inv_std.iter().enumerate() {
                    let ch = plane % c;
                    let gp = &g.data()[plane * n..(plane + 1) * n];
                    let xh = &normalized.data()[plane * n..(plane + 1) * n];
                    let mut sum_g = T::ZERO;
                    let mut sum_gx = T::ZERO;
                    for (&gv, &xv) in gp.iter().zip(xh) {
                        sum_g += gv;
                        sum_gx += gv * xv;
                    }
                    dgamma[ch] += sum_gx;
                    dbeta[ch] += sum_g;
                    // d/dx of gamma * xhat with xhat = (x - mean) * inv_std
                    let scale = gamma.data()[ch] * is / nf;
                    for ((d, &gv), &xv) in dx[plane * n..(plane + 1) * n].iter_mut().zip(gp).zip(xh) {
                        *d = scale * (nf * gv - sum_g - xv * sum_gx);
                    }
                }
                if wants(0) {
                    out.push((0, Tensor::from_parts(g.shape().to_vec(), dx)));
                }
                if wants(1) {
                    out.push((1, Tensor::from_parts(vec![c], dgamma)));
                }
                if wants(2) {
                    out.push((2, Tensor::from_parts(vec![c], dbeta)));
                }
            }
            Op::Relu => {
                let d = g.zip_map(parent_val(0), "relu", |gv, x| if x > T::ZERO { gv } else { T::ZERO })?;
                out.push((0, d));
            }
            Op::LeakyRelu(slope) => {
                let d = g.zip_map(parent_val(0), "leaky_relu", |gv, x| if x > T::ZERO { gv } else { gv * *slope })?;
                out.push((0, d));
            }
            Op::Tanh => {
                let d = g.zip_map(&node.value, "tanh", |gv, y| gv * (T::ONE - y * y))?;
                out.push((0, d));
            }
            Op::AvgPool(factor) => {
                let x = parent_val(0);
                let (_, _, h, w) = dims4("avg_pool2d", x.shape())?;
                let f = *factor;
                let (oh, ow) = (h / f, w / f);
                let norm = T::from_f64(1.0 / (f * f) as f64);
                let mut dx = vec![T::ZERO; x.len()];
                for (plane, dplane) in dx.chunks_mut(h * w).enumerate() {
                    let gp = &g.data()[plane * oh * ow..(plane + 1) * oh * ow];
                    for y in 0..h {
                        let grow = &gp[(y / f) * ow..(y / f + 1) * ow];
                        for (xi, d) in dplane[y * w..(y + 1) * w].iter_mut().enumerate() {
                            *d = grow[xi / f] * norm;
                        }
                    }
                }
                out.push((0, Tensor::from_parts(x.shape().to_vec(), dx)));
            }
            Op::Mean => {
                let x = parent_val(0);
                let v = g.data()[0] / T::from_f64(x.len() as f64);
                out.push((0, Tensor::from_parts(x.shape().to_vec(), vec![v; x.len()])));
            }
            Op::Sum => {
                let x = parent_val(0);
                out.push((0, Tensor::from_parts(x.shape().to_vec(), vec![g.data()[0]; x.len()])));
            }
            Op::L1 => {
                let (a, b) = (parent_val(0), parent_val(1));
                let s = g.data()[0] / T::from_f64(a.len() as f64);
                let da = a.zip_map(b, "l1", |x, y| {
                    if x > y {
                        s
                    } else if x < y {
                        -s
                    } else {
                        T::ZERO
                    }
                })?;
                if wants(1) {
                    out.push((1, da.map(|v| -v)));
                }
                if wants(0) {
                    out.push((0, da));
                }
            }
            Op::L2 => {
                let (a, b) = (parent_val(0), parent_val(1));
                let s = T::from_f64(2.0) * g.data()[0] / T::from_f64(a.len() as f64);
                let da = a.zip_map(b, "l2", |x, y| (x - y) * s)?;
                if wants(1) {
                    out.push((1, da.map(|v| -v)));
                }
                if wants(0) {
                    out.push((0, da));
                }
            }
            Op::Pad2d { top, left, .. } => {
                let x = parent_val(0);
                let (_, _, h, w) = dims4("pad2d", x.shape())?;
                let (_, _, _, ow) = dims4("pad2d", g.shape())?;
                let oh = g.shape()[2];
                let mut dx = vec![T::ZERO; x.len()];
                for (plane, dplane) in dx.chunks_mut(h * w).enumerate() {
                    for y in 0..h {
                        let start = (plane * oh + y + top) * ow + left;
                        dplane[y * w..(y + 1) * w].copy_from_slice(&g.data()[start..start + w]);
                    }
                }
                out.push((0, Tensor::from_parts(x.shape().to_vec(), dx)));
            }
            Op::Reshape => {
                out.push((0, g.reshape(parent_val(0).shape())?));
            }
        }

        for (p, t) in out {
            accumulate(&mut grads, node.parents[p], t);
        }
        grads[i] = Some(g);
    }
    Ok(Gradients { grads })
}

/// Sum of `g` over every axis except 1.
fn channel_sums<T: Scalar>(g: &Tensor<T>) -> Tensor<T> {
    let c = g.shape()[1];
    let inner: usize = g.shape()[2..].iter().product();
    let mut out = vec![T::ZERO; c];
    for (j, chunk) in g.data().chunks(inner).enumerate() {
        out[j % c] += chunk.iter().fold(T::ZERO, |a, &v| a + v);
    }
    Tensor::from_parts(vec![c], out)
}
