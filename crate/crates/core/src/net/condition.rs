use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Ordered condition images fed to every encoder stage.
///
/// Order is part of the value: the stack is concatenated in this order, so
/// two sets holding the same images in a different order are different
/// inputs (and compare unequal).
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSet<T: Scalar = f32> {
    images: Vec<Tensor<T>>,
}

impl<T: Scalar> ConditionSet<T> {
    /// Every image must be `B x C_i x H x W` with shared `B`, `H`, `W`.
    pub fn new(images: Vec<Tensor<T>>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Contract("a condition set needs at least one image".into()))?;
        if first.rank() != 4 {
            return Err(Error::Contract(format!(
                "condition images must be B x C x H x W, got {:?}",
                first.shape()
            )));
        }
        for img in &images[1..] {
            let s = img.shape();
            if img.rank() != 4 || s[0] != first.shape()[0] || s[2..] != first.shape()[2..] {
                return Err(Error::shape("condition set", first.shape(), s));
            }
        }
        Ok(Self { images })
    }

    /// Builds a batch-of-one set from `C x H x W` images.
    pub fn from_chw(images: &[&Tensor<T>]) -> Result<Self> {
        Self::new(images.iter().map(|t| t.unsqueeze0()).collect())
    }

    pub fn images(&self) -> &[Tensor<T>] {
        &self.images
    }

    pub fn channels(&self) -> usize {
        self.images.iter().map(|t| t.shape()[1]).sum()
    }

    pub fn batch(&self) -> usize {
        self.images[0].shape()[0]
    }

    pub fn height(&self) -> usize {
        self.images[0].shape()[2]
    }

    pub fn width(&self) -> usize {
        self.images[0].shape()[3]
    }

    /// Channel-wise concatenation in set order.
    pub fn stacked(&self) -> Tensor<T> {
        let refs: Vec<&Tensor<T>> = self.images.iter().collect();
        Tensor::concat(&refs, 1).expect("shapes validated on construction")
    }

    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.images.len()];
        for &i in order {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Contract(format!("{order:?} is not a permutation")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Contract(format!("{order:?} is not a permutation")));
        }
        Ok(Self {
            images: order.iter().map(|&i| self.images[i].clone()).collect(),
        })
    }
}
