use crate::rng::RngState;
use crate::tensor::{Scalar, Tensor};

/// Where a [`ImageBuffer::query`] result came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Draw<T: Scalar = f32> {
    /// The image just passed in.
    Incoming(Tensor<T>),
    /// An older fake, swapped out for the incoming one.
    Stored(Tensor<T>),
}

impl<T: Scalar> Draw<T> {
    pub fn image(&self) -> &Tensor<T> {
        match self {
            Draw::Incoming(t) | Draw::Stored(t) => t,
        }
    }

    pub fn into_image(self) -> Tensor<T> {
        match self {
            Draw::Incoming(t) | Draw::Stored(t) => t,
        }
    }

    pub fn is_stored(&self) -> bool {
        matches!(self, Draw::Stored(_))
    }
}

/// Fixed-capacity history of generated images. Once full, each query hands
/// the discriminator an old fake half of the time, which damps oscillation
/// between the two players.
#[derive(Clone, Debug)]
pub struct ImageBuffer<T: Scalar = f32> {
    capacity: usize,
    store: Vec<Tensor<T>>,
    rng: RngState,
}

impl<T: Scalar> ImageBuffer<T> {
    pub const DEFAULT_CAPACITY: usize = 50;

    /// A zero capacity disables the history: every query returns its input.
    pub fn new(capacity: usize, rng: RngState) -> Self {
        Self {
            capacity,
            store: Vec::with_capacity(capacity),
            rng,
        }
    }

    /// Rebuilds a buffer from checkpointed contents.
    pub fn from_parts(capacity: usize, store: Vec<Tensor<T>>, rng: RngState) -> Self {
        debug_assert!(store.len() <= capacity);
        Self { capacity, store, rng }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn stored(&self) -> &[Tensor<T>] {
        &self.store
    }

    pub fn rng(&self) -> &RngState {
        &self.rng
    }

    pub fn query(&mut self, incoming: Tensor<T>) -> Draw<T> {
        if self.capacity == 0 {
            return Draw::Incoming(incoming);
        }
        if self.store.len() < self.capacity {
            self.store.push(incoming.clone());
            return Draw::Incoming(incoming);
        }
        if self.rng.coin(0.5) {
            let i = self.rng.below(self.capacity);
            Draw::Stored(std::mem::replace(&mut self.store[i], incoming))
        } else {
            Draw::Incoming(incoming)
        }
    }
}
