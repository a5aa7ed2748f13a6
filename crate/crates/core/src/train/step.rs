use super::buffer::ImageBuffer;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::losses::{discriminator_loss, generator_gan_loss, identity_loss, total_generator_loss, LossConfig};
use crate::net::{Discriminator, Generator};
use crate::nn::{adam_step, AdamState, Bound, ParamSet};
use crate::tensor::{Scalar, Tensor};

/// A network mapping a stacked condition tensor to an image.
pub trait ConditionalGenerator<T: Scalar> {
    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;
    fn generate(&self, g: &mut Graph<T>, p: &Bound, conditions: Var) -> Result<Var>;
}

/// A network scoring a batch of images, `B x 1`.
pub trait Critic<T: Scalar> {
    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;
    fn score(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<Var>;
}

impl<T: Scalar> ConditionalGenerator<T> for Generator<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn generate(&self, g: &mut Graph<T>, p: &Bound, conditions: Var) -> Result<Var> {
        Ok(self.forward_graph(g, p, conditions)?.0)
    }
}

impl<T: Scalar> Critic<T> for Discriminator<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn score(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<Var> {
        self.forward_graph(g, p, image)
    }
}

/// One training example in network space (`[-1, 1]`), batch of one.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair<T: Scalar = f32> {
    /// Stacked conditions, `1 x C x H x W`.
    pub conditions: Tensor<T>,
    /// Ground truth, `1 x 3 x H x W`.
    pub target: Tensor<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub d_loss: f64,
    pub g_gan: f64,
    pub g_id: f64,
}

/// Optimizer state for both players.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers<T: Scalar = f32> {
    pub g: AdamState<T>,
    pub d: AdamState<T>,
}

fn finite_scalar<T: Scalar>(g: &Graph<T>, v: Var, step: u64, loss: &'static str) -> Result<f64> {
    let x = g.value(v).data()[0].to_f64();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFiniteLoss { step, loss })
    }
}

/// One alternation: the discriminator learns from the target and a
/// (possibly historical) detached fake, then the generator learns against
/// the freshly updated discriminator. `step` only labels errors and the
/// report.
pub fn train_step<T, G, D>(
    gen: &mut G,
    disc: &mut D,
    pair: &TrainPair<T>,
    buffer: &mut ImageBuffer<T>,
    opt: &mut Optimizers<T>,
    loss: &LossConfig,
    step: u64,
) -> Result<LossReport>
where
    T: Scalar,
    G: ConditionalGenerator<T>,
    D: Critic<T>,
{
    let mut gg = Graph::new();
    let gp = gen.params().bind(&mut gg, true);
    let cond = gg.constant(pair.conditions.clone());
    let fake = gen.generate(&mut gg, &gp, cond)?;
    if gg.shape(fake) != pair.target.shape() {
        return Err(Error::shape("train_step target", gg.shape(fake), pair.target.shape()));
    }

    // Discriminator half: fakes enter as constants, so nothing reaches G.
    let pooled = buffer.query(gg.value(fake).clone()).into_image();
    let d_loss = {
        let mut dg = Graph::new();
        let dp = disc.params().bind(&mut dg, true);
        let real = dg.constant(pair.target.clone());
        let fk = dg.constant(pooled);
        let d_real = disc.score(&mut dg, &dp, real)?;
        let d_fake = disc.score(&mut dg, &dp, fk)?;
        let l = discriminator_loss(&mut dg, d_real, d_fake, loss)?;
        let value = finite_scalar(&dg, l, step, "d_loss")?;
        let grads = dg.backward(l)?;
        let grads = disc.params().gradients(&dp, &grads);
        adam_step(disc.params_mut(), &grads, &mut opt.d)?;
        value
    };

    // Generator half: D's (updated) parameters are frozen constants.
    let dp = disc.params().bind(&mut gg, false);
    let d_fake = disc.score(&mut gg, &dp, fake)?;
    let gan = generator_gan_loss(&mut gg, d_fake, loss)?;
    let target = gg.constant(pair.target.clone());
    let id = identity_loss(&mut gg, fake, target, loss)?;
    let total = total_generator_loss(&mut gg, gan, id)?;
    let g_gan = finite_scalar(&gg, gan, step, "g_gan")?;
    let g_id = finite_scalar(&gg, id, step, "g_id")?;
    let grads = gg.backward(total)?;
    let grads = gen.params().gradients(&gp, &grads);
    adam_step(gen.params_mut(), &grads, &mut opt.g)?;

    Ok(LossReport { step, d_loss, g_gan, g_id })
}
