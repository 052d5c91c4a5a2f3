//! A small dense-tensor neural network engine.
//!
//! Networks are sequential stacks of [`Layer`]s. Each layer caches what its
//! backward pass needs during `forward`, and `backward` walks the stack in
//! reverse, accumulating parameter gradients into each parameter tensor's
//! gradient buffer. Everything is generic over [`Real`]: models run in `f32`
//! and the same code runs in `f64` for gradient checks.

mod layers;
mod loss;
mod network;
mod optim;
mod tensor;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use layers::{ActivationKind, Layer, LayerSpec, SampleShape};
pub use loss::{bce_smoothed, bce_smoothed_f64, PROB_CLAMP};
pub use network::Network;
pub use optim::{
    adam_step, best_epoch, clip_global_norm, l2_penalty, plateau_schedule, AdamState, EarlyStopping,
    Monitor, PlateauScheduler,
};
pub use tensor::Tensor;
pub use train::{
    fit, predict, EpochLog, FeatureSet, SampleSet, TrainConfig, TrainHistory, WindowSet,
};

/// Floating point element type of tensors.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + Sum + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
