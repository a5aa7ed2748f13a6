//! Generator (per-stage condition injection, coarse-only skips) and the
//! strided-conv discriminator.

mod condition;
mod discriminator;
mod generator;

pub use condition::ConditionSet;
pub use discriminator::{Discriminator, DiscriminatorSpec};
pub use generator::{
    DecoderStage, EncoderStage, ForwardTrace, Generator, GeneratorSpec, BOTTLENECK_RESOLUTION,
    MAX_SKIP_RESOLUTION,
};
