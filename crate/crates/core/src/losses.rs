//! Least-squares adversarial objectives plus the L1 identity term.
//!
//! Every expectation is a mean, so the weights do not depend on batch or
//! image size. The discriminator minimises [`discriminator_loss`]; the
//! generator minimises [`generator_gan_loss`] + [`identity_loss`].

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of the real-sample term of the discriminator loss.
    pub lambda1: f64,
    /// Weight of the fake-sample term of the discriminator loss.
    pub lambda2: f64,
    /// Weight of the generator's adversarial term.
    pub lambda3: f64,
    /// Weight of the L1 identity term.
    pub lambda4: f64,
    pub real_label: f64,
    pub fake_label: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 1.0,
            lambda4: 10.0,
            real_label: 1.0,
            fake_label: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Domain(format!("loss weights must be finite and >= 0, got {bad}")));
        }
        if !self.real_label.is_finite() || !self.fake_label.is_finite() || self.real_label == self.fake_label {
            return Err(Error::Domain(format!(
                "real and fake labels must be distinct finite values, got {} and {}",
                self.real_label, self.fake_label
            )));
        }
        Ok(())
    }
}

fn label_l2<T: Scalar>(g: &mut Graph<T>, scores: Var, label: f64) -> Result<Var> {
    let target = g.constant(Tensor::full(g.shape(scores), T::from_f64(label))?);
    g.l2(scores, target)
}

/// `λ1·mean((d_real − R)²) + λ2·mean((d_fake − F)²)`.
pub fn discriminator_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var, cfg: &LossConfig) -> Result<Var> {
    if g.shape(d_real) != g.shape(d_fake) {
        return Err(Error::shape("discriminator_loss", g.shape(d_real), g.shape(d_fake)));
    }
    let real = label_l2(g, d_real, cfg.real_label)?;
    let fake = label_l2(g, d_fake, cfg.fake_label)?;
    let real = g.scale(real, T::from_f64(cfg.lambda1));
    let fake = g.scale(fake, T::from_f64(cfg.lambda2));
    g.add(real, fake)
}

/// `λ3·mean((d_fake − R)²)`: the generator wants its fakes scored as real.
pub fn generator_gan_loss<T: Scalar>(g: &mut Graph<T>, d_fake: Var, cfg: &LossConfig) -> Result<Var> {
    let l = label_l2(g, d_fake, cfg.real_label)?;
    Ok(g.scale(l, T::from_f64(cfg.lambda3)))
}

/// `λ4·mean(|generated − target|)`.
pub fn identity_loss<T: Scalar>(g: &mut Graph<T>, generated: Var, target: Var, cfg: &LossConfig) -> Result<Var> {
    let l = g.l1(generated, target)?;
    Ok(g.scale(l, T::from_f64(cfg.lambda4)))
}

pub fn total_generator_loss<T: Scalar>(g: &mut Graph<T>, gan: Var, id: Var) -> Result<Var> {
    for v in [gan, id] {
        if g.value(v).len() != 1 {
            return Err(Error::shape("total_generator_loss", g.shape(v), &[]));
        }
    }
    g.add(gan, id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use proptest::prelude::*;

    fn scalar(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v).data()[0]
    }

    fn leaf(g: &mut Graph<f64>, shape: &[usize], f: impl FnMut(usize) -> f64) -> Var {
        g.param(Tensor::from_fn(shape, f).unwrap())
    }

    #[test]
    fn hand_valued_cases() {
        let cfg = LossConfig::default();
        let mut g = Graph::new();
        let ones = leaf(&mut g, &[4, 1], |_| 1.0);
        let zeros = leaf(&mut g, &[4, 1], |_| 0.0);
        let d = discriminator_loss(&mut g, zeros, ones, &cfg).unwrap();
        assert!((scalar(&g, d) - 1.0).abs() < 1e-12);
        let gan = generator_gan_loss(&mut g, zeros, &cfg).unwrap();
        assert!((scalar(&g, gan) - 1.0).abs() < 1e-12);

        let t = leaf(&mut g, &[1, 3, 4, 4], |i| i as f64 / 48.0 - 0.5);
        let shifted = g.value(t).map(|v| v + 0.5);
        let gen = g.constant(shifted);
        let id = identity_loss(&mut g, gen, t, &cfg).unwrap();
        assert!((scalar(&g, id) - 5.0).abs() < 1e-12);

        let total = total_generator_loss(&mut g, gan, id).unwrap();
        assert!((scalar(&g, total) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_points() {
        let cfg = LossConfig::default();
        let mut g = Graph::new();
        let ones = leaf(&mut g, &[3, 1], |_| 1.0);
        let zeros = leaf(&mut g, &[3, 1], |_| 0.0);
        let d = discriminator_loss(&mut g, ones, zeros, &cfg).unwrap();
        assert_eq!(scalar(&g, d), 0.0);
        let gan = generator_gan_loss(&mut g, ones, &cfg).unwrap();
        assert_eq!(scalar(&g, gan), 0.0);
        let id = identity_loss(&mut g, ones, ones, &cfg).unwrap();
        assert_eq!(scalar(&g, id), 0.0);

        let off = LossConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..cfg
        };
        let d = discriminator_loss(&mut g, zeros, ones, &off).unwrap();
        assert_eq!(scalar(&g, d), 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cfg = LossConfig::default();
        let mut g = Graph::<f64>::new();
        let a = leaf(&mut g, &[2, 1], |_| 0.0);
        let b = leaf(&mut g, &[3, 1], |_| 0.0);
        assert!(matches!(discriminator_loss(&mut g, a, b, &cfg), Err(Error::Shape { .. })));
        assert!(identity_loss(&mut g, a, b, &cfg).is_err());
        assert!(total_generator_loss(&mut g, a, a).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let neg = LossConfig {
            lambda3: -1.0,
            ..LossConfig::default()
        };
        assert!(matches!(neg.validate(), Err(Error::Domain(_))));
        let same = LossConfig {
            fake_label: 1.0,
            ..LossConfig::default()
        };
        assert!(same.validate().is_err());
    }

    #[test]
    fn gan_gradient_direction() {
        let cfg = LossConfig {
            lambda3: 1.5,
            ..LossConfig::default()
        };
        let b = 5;
        let mut rng = RngState::new(3);
        let mut g = Graph::new();
        let d = leaf(&mut g, &[b, 1], |_| rng.range(-2.0, 3.0));
        let l = generator_gan_loss(&mut g, d, &cfg).unwrap();
        let grads = g.backward(l).unwrap();
        for (gr, &v) in grads.get(d).unwrap().data().iter().zip(g.value(d).data()) {
            let expect = 2.0 * cfg.lambda3 / b as f64 * (v - cfg.real_label);
            assert!((gr - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn total_gradient_splits_additively() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::scalar(1.0));
        let b = g.param(Tensor::scalar(5.0));
        let t = total_generator_loss(&mut g, a, b).unwrap();
        let grads = g.backward(t).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0]);
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n)
    }

    proptest! {
        #[test]
        fn losses_non_negative(
            real in vec_strategy(4),
            fake in vec_strategy(4),
            l in proptest::array::uniform4(0.0f64..5.0),
        ) {
            let cfg = LossConfig { lambda1: l[0], lambda2: l[1], lambda3: l[2], lambda4: l[3], ..LossConfig::default() };
            let mut g = Graph::new();
            let r = g.param(Tensor::new(&[4, 1], real).unwrap());
            let f = g.param(Tensor::new(&[4, 1], fake).unwrap());
            let d = discriminator_loss(&mut g, r, f, &cfg).unwrap();
            let gan = generator_gan_loss(&mut g, f, &cfg).unwrap();
            let id = identity_loss(&mut g, r, f, &cfg).unwrap();
            prop_assert!(scalar(&g, d) >= 0.0);
            prop_assert!(scalar(&g, gan) >= 0.0);
            prop_assert!(scalar(&g, id) >= 0.0);
        }

        #[test]
        fn discriminator_zero_only_at_labels(real in vec_strategy(3), fake in vec_strategy(3)) {
            let cfg = LossConfig::default();
            let at_labels = real.iter().all(|&v| v == 1.0) && fake.iter().all(|&v| v == 0.0);
            let mut g = Graph::new();
            let r = g.param(Tensor::new(&[3, 1], real).unwrap());
            let f = g.param(Tensor::new(&[3, 1], fake).unwrap());
            let d = discriminator_loss(&mut g, r, f, &cfg).unwrap();
            prop_assert_eq!(scalar(&g, d) == 0.0, at_labels);
        }

        #[test]
        fn identity_triangle_and_symmetry(a in vec_strategy(6), b in vec_strategy(6), c in vec_strategy(6)) {
            let cfg = LossConfig::default();
            let mut g = Graph::new();
            let [a, b, c] = [a, b, c].map(|v| g.param(Tensor::new(&[1, 6], v).unwrap()));
            let ab = identity_loss(&mut g, a, b, &cfg).unwrap();
            let ba = identity_loss(&mut g, b, a, &cfg).unwrap();
            let bc = identity_loss(&mut g, b, c, &cfg).unwrap();
            let ac = identity_loss(&mut g, a, c, &cfg).unwrap();
            prop_assert_eq!(scalar(&g, ab), scalar(&g, ba));
            prop_assert!(scalar(&g, ac) <= scalar(&g, ab) + scalar(&g, bc) + 1e-12);
        }

        #[test]
        fn gan_loss_linear_in_weight(fake in vec_strategy(4), w in 0.0f64..10.0) {
            let base = LossConfig::default();
            let scaled = LossConfig { lambda3: w, ..base };
            let mut g = Graph::new();
            let f = g.param(Tensor::new(&[4, 1], fake).unwrap());
            let one = generator_gan_loss(&mut g, f, &base).unwrap();
            let many = generator_gan_loss(&mut g, f, &scaled).unwrap();
            prop_assert!((scalar(&g, many) - w * scalar(&g, one)).abs() < 1e-9);
        }
    }
}
