//! Central finite-difference oracle for the autodiff engine.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::losses::{discriminator_loss, generator_gan_loss, identity_loss, LossConfig};
use crate::nn::{LEAKY_SLOPE, NORM_EPS};
use crate::rng::RngState;
use crate::tensor::{Scalar, Tensor};

/// Compares the reverse-mode gradient of a scalar function against central
/// differences `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`.
///
/// `f` receives a fresh graph and the leaf holding `x` and must return a
/// scalar node. The result is `max_i |analytic_i - numeric_i| / max(|numeric_i|, 1e-8)`.
pub fn finite_diff_check<T, F>(f: F, x: &Tensor<T>, eps: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    let eval = |point: Tensor<T>| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.param(point);
        let out = f(&mut g, v)?;
        let y = g.value(out);
        if y.len() != 1 {
            return Err(Error::Contract(format!(
                "finite_diff_check needs a scalar function, got shape {:?}",
                y.shape()
            )));
        }
        let y = y.data()[0].to_f64();
        if !y.is_finite() {
            return Err(Error::Numeric("finite_diff_check: f(x) is not finite".into()));
        }
        Ok(y)
    };

    eval(x.clone())?;
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let root = f(&mut g, xv)?;
    let grads = g.backward(root)?;
    let analytic = grads.get_or_zeros(xv, x.shape());

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += T::from_f64(eps);
        let mut minus = x.clone();
        minus.data_mut()[i] -= T::from_f64(eps);
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (analytic.data()[i].to_f64() - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Worst relative error of one differentiable op over a batch of random
/// instances.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
}

// Every suite op is linear, quadratic or piecewise linear away from its kinks
// except instance norm, whose O(eps^2) truncation stays far below round-off
// at this step; smaller steps only amplify round-off.
const SUITE_EPS: f64 = 1e-4;

fn randn(shape: &[usize], rng: &mut RngState) -> Result<Tensor<f64>> {
    Tensor::from_fn(shape, |_| rng.normal())
}

/// Random values at least 0.1 away from zero, so no central difference
/// straddles the kink of relu, leaky relu or |x|.
fn away_from_zero(shape: &[usize], rng: &mut RngState) -> Result<Tensor<f64>> {
    Tensor::from_fn(shape, |_| {
        let v = rng.normal();
        v + 0.1 * v.signum()
    })
}

/// `sum(mix * y)` for a fixed random `mix`, so every output element carries
/// its own weight into the scalar.
fn mixed(g: &mut Graph<f64>, y: Var, rng_seed: u64) -> Result<Var> {
    let mix = randn(g.shape(y), &mut RngState::new(rng_seed))?;
    let m = g.constant(mix);
    let p = g.mul(y, m)?;
    Ok(g.sum(p))
}

/// Finite-difference checks of every layer op (on inputs and parameters)
/// and every loss (on each differentiable argument), each over `instances`
/// randomly shaped and valued cases, in `f64`.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<Vec<GradReport>> {
    type Case = Box<dyn Fn(&mut RngState) -> Result<f64>>;
    let c = |f: Case| f;
    let cases: Vec<(&'static str, Case)> = vec![
        ("conv2d", c(Box::new(|rng| {
            let (b, ci, co, hw) = (1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3), 4 + rng.below(3));
            let stride = 1 + rng.below(2);
            let x = randn(&[b, ci, hw, hw], rng)?;
            let w = randn(&[co, ci, 3, 3], rng)?;
            let bias = randn(&[co], rng)?;
            let mix = rng.next_u64();
            let ex = finite_diff_check(|g, v| {
                let (w, bb) = (g.constant(w.clone()), g.constant(bias.clone()));
                let y = g.conv2d(v, w, bb, stride, 1)?;
                mixed(g, y, mix)
            }, &x, SUITE_EPS)?;
            let ew = finite_diff_check(|g, v| {
                let (xc, bb) = (g.constant(x.clone()), g.constant(bias.clone()));
                let y = g.conv2d(xc, v, bb, stride, 1)?;
                mixed(g, y, mix)
            }, &w, SUITE_EPS)?;
            let eb = finite_diff_check(|g, v| {
                let (xc, wc) = (g.constant(x.clone()), g.constant(w.clone()));
                let y = g.conv2d(xc, wc, v, stride, 1)?;
                mixed(g, y, mix)
            }, &bias, SUITE_EPS)?;
            Ok(ex.max(ew).max(eb))
        }))),
        ("conv_transpose2d", c(Box::new(|rng| {
            let (b, ci, co, hw) = (1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3), 2 + rng.below(3));
            let x = randn(&[b, ci, hw, hw], rng)?;
            let w = randn(&[ci, co, 4, 4], rng)?;
            let bias = randn(&[co], rng)?;
            let mix = rng.next_u64();
            let ex = finite_diff_check(|g, v| {
                let (w, bb) = (g.constant(w.clone()), g.constant(bias.clone()));
                let y = g.conv_transpose2d(v, w, bb, 2, 1)?;
                mixed(g, y, mix)
            }, &x, SUITE_EPS)?;
            let ew = finite_diff_check(|g, v| {
                let (xc, bb) = (g.constant(x.clone()), g.constant(bias.clone()));
                let y = g.conv_transpose2d(xc, v, bb, 2, 1)?;
                mixed(g, y, mix)
            }, &w, SUITE_EPS)?;
            let eb = finite_diff_check(|g, v| {
                let (xc, wc) = (g.constant(x.clone()), g.constant(w.clone()));
                let y = g.conv_transpose2d(xc, wc, v, 2, 1)?;
                mixed(g, y, mix)
            }, &bias, SUITE_EPS)?;
            Ok(ex.max(ew).max(eb))
        }))),
        ("instance_norm", c(Box::new(|rng| {
            let (b, ch, hw) = (1 + rng.below(2), 1 + rng.below(3), 3 + rng.below(3));
            let x = randn(&[b, ch, hw, hw], rng)?;
            let gamma = randn(&[ch], rng)?;
            let beta = randn(&[ch], rng)?;
            let mix = rng.next_u64();
            let ex = finite_diff_check(|g, v| {
                let (ga, be) = (g.constant(gamma.clone()), g.constant(beta.clone()));
                let y = g.instance_norm(v, ga, be, NORM_EPS)?;
                mixed(g, y, mix)
            }, &x, SUITE_EPS)?;
            let eg = finite_diff_check(|g, v| {
                let (xc, be) = (g.constant(x.clone()), g.constant(beta.clone()));
                let y = g.instance_norm(xc, v, be, NORM_EPS)?;
                mixed(g, y, mix)
            }, &gamma, SUITE_EPS)?;
            let eb = finite_diff_check(|g, v| {
                let (xc, ga) = (g.constant(x.clone()), g.constant(gamma.clone()));
                let y = g.instance_norm(xc, ga, v, NORM_EPS)?;
                mixed(g, y, mix)
            }, &beta, SUITE_EPS)?;
            Ok(ex.max(eg).max(eb))
        }))),
        ("relu", c(Box::new(|rng| {
            let x = away_from_zero(&[1, 2, 4, 4], rng)?;
            let mix = rng.next_u64();
            finite_diff_check(|g, v| {
                let y = g.relu(v);
                mixed(g, y, mix)
            }, &x, SUITE_EPS)
        }))),
        ("leaky_relu", c(Box::new(|rng| {
            let x = away_from_zero(&[1, 2, 4, 4], rng)?;
            let mix = rng.next_u64();
            finite_diff_check(|g, v| {
                let y = g.leaky_relu(v, LEAKY_SLOPE);
                mixed(g, y, mix)
            }, &x, SUITE_EPS)
        }))),
        ("avg_pool", c(Box::new(|rng| {
            let factor = 1 << rng.below(3);
            let x = randn(&[1 + rng.below(2), 2, 2 * factor, factor], rng)?;
            let mix = rng.next_u64();
            finite_diff_check(|g, v| {
                let y = g.avg_pool2d(v, factor)?;
                mixed(g, y, mix)
            }, &x, SUITE_EPS)
        }))),
        ("discriminator_loss", c(Box::new(|rng| {
            let b = 1 + rng.below(4);
            let cfg = random_loss_config(rng);
            let real = randn(&[b, 1], rng)?;
            let fake = randn(&[b, 1], rng)?;
            let er = finite_diff_check(|g, v| {
                let f = g.constant(fake.clone());
                discriminator_loss(g, v, f, &cfg)
            }, &real, SUITE_EPS)?;
            let ef = finite_diff_check(|g, v| {
                let r = g.constant(real.clone());
                discriminator_loss(g, r, v, &cfg)
            }, &fake, SUITE_EPS)?;
            Ok(er.max(ef))
        }))),
        ("generator_gan_loss", c(Box::new(|rng| {
            let cfg = random_loss_config(rng);
            let fake = randn(&[1 + rng.below(4), 1], rng)?;
            finite_diff_check(|g, v| generator_gan_loss(g, v, &cfg), &fake, SUITE_EPS)
        }))),
        ("identity_loss", c(Box::new(|rng| {
            let cfg = random_loss_config(rng);
            let shape = [1 + rng.below(2), 3, 4, 4];
            let target = randn(&shape, rng)?;
            let gap = away_from_zero(&shape, rng)?;
            let gen = target.zip_map(&gap, "add", |a, d| a + d)?;
            finite_diff_check(|g, v| {
                let t = g.constant(target.clone());
                identity_loss(g, v, t, &cfg)
            }, &gen, SUITE_EPS)
        }))),
    ];
    let root = RngState::new(seed);
    cases
        .into_iter()
        .enumerate()
        .map(|(i, (name, case))| {
            let mut case_rng = root.split(i as u64 + 1);
            let mut worst = 0.0f64;
            for _ in 0..instances {
                worst = worst.max(case(&mut case_rng)?);
            }
            Ok(GradReport { name, instances, worst })
        })
        .collect()
}

fn random_loss_config(rng: &mut RngState) -> LossConfig {
    LossConfig {
        lambda1: rng.range(0.1, 2.0),
        lambda2: rng.range(0.1, 2.0),
        lambda3: rng.range(0.1, 2.0),
        lambda4: rng.range(0.1, 20.0),
        ..LossConfig::default()
    }
}
