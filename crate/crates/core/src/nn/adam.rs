use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros = |t: &Tensor<T>| Tensor::from_parts(t.shape().to_vec(), vec![T::ZERO; t.len()]);
        Self {
            config,
            m: params.tensors().iter().map(zeros).collect(),
            v: params.tensors().iter().map(zeros).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
///
/// Gradients are validated before anything is touched, so a non-finite
/// gradient leaves parameters and state unchanged.
pub fn adam_step<T: Scalar>(params: &mut ParamSet<T>, grads: &[Tensor<T>], state: &mut AdamState<T>) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "adam_step: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.tensors().iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
        if !g.all_finite() {
            return Err(Error::Numeric(format!(
                "gradient of parameter {}",
                params.name(super::params::ParamId(i))
            )));
        }
    }

    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
    // lr * mhat / (sqrt(vhat) + eps) == step * m / (sqrt(v) + eps * sqrt(bc2))
    let step = T::from_f64(c.lr * bc2.sqrt() / bc1);
    let eps_hat = T::from_f64(c.eps * bc2.sqrt());

    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + one_b1 * g[j];
            v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
            *w -= step * m[j] / (v[j].sqrt() + eps_hat);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(&[1], vec![v]).unwrap());
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = single(0.3);
        let mut s = AdamState::new(&p, AdamConfig::default());
        let g = vec![Tensor::zeros(&[1]).unwrap()];
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p.tensors()[0].data(), &[0.3]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        for &g in &[0.7, -3.0, 1e-6] {
            let mut p = single(1.0);
            let mut s = AdamState::new(&p, cfg);
            adam_step(&mut p, &[Tensor::new(&[1], vec![g]).unwrap()], &mut s).unwrap();
            // mhat = g, vhat = g^2 after bias correction
            let want = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((p.tensors()[0].data()[0] - want).abs() < 1e-15, "g={g}");
        }
    }

    #[test]
    fn constant_gradient_approaches_lr_sign() {
        let cfg = AdamConfig::default();
        let mut p = single(0.0);
        let mut s = AdamState::new(&p, cfg);
        let g = vec![Tensor::new(&[1], vec![-0.05]).unwrap()];
        let mut prev = 0.0;
        let mut last_delta = 0.0;
        for _ in 0..500 {
            adam_step(&mut p, &g, &mut s).unwrap();
            let now = p.tensors()[0].data()[0];
            last_delta = now - prev;
            prev = now;
        }
        assert!((last_delta - cfg.lr).abs() < 1e-9, "{last_delta}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = single(1.0);
        let mut s = AdamState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &[Tensor::new(&[1], vec![f64::NAN]).unwrap()], &mut s).unwrap_err();
        assert!(err.to_string().contains('w'));
        assert_eq!(s.t, 0);
        assert_eq!(p.tensors()[0].data(), &[1.0]);
    }

    #[test]
    fn independent_of_parameter_order() {
        let mut a = ParamSet::<f64>::new();
        a.insert("x", Tensor::new(&[2], vec![0.1, 0.2]).unwrap());
        a.insert("y", Tensor::new(&[1], vec![-0.4]).unwrap());
        let mut b = ParamSet::<f64>::new();
        b.insert("y", Tensor::new(&[1], vec![-0.4]).unwrap());
        b.insert("x", Tensor::new(&[2], vec![0.1, 0.2]).unwrap());
        let gx = Tensor::new(&[2], vec![0.5, -1.5]).unwrap();
        let gy = Tensor::new(&[1], vec![2.0]).unwrap();
        let mut sa = AdamState::new(&a, AdamConfig::default());
        let mut sb = AdamState::new(&b, AdamConfig::default());
        for _ in 0..3 {
            adam_step(&mut a, &[gx.clone(), gy.clone()], &mut sa).unwrap();
            adam_step(&mut b, &[gy.clone(), gx.clone()], &mut sb).unwrap();
        }
        assert_eq!(a.tensors()[0], b.tensors()[1]);
        assert_eq!(a.tensors()[1], b.tensors()[0]);
    }
}
