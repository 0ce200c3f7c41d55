//! Numerical core: dense classifier, cross-entropy, gradients and Adam.
//!
//! All arithmetic is `f64` and every reduction runs in a fixed order, so two
//! runs with the same inputs produce bit-identical parameters.

mod batch;
pub mod checkpoint;
mod loss;
mod model;
mod optim;
mod params;

use rand::Rng;

pub use batch::{Batch, Matrix};
pub use loss::{cross_entropy, sample_cross_entropy, softmax};
pub use model::{forward, gradient, loss_and_gradient, predict, Workspace};
pub use optim::{adam_step, AdamHyper, OptimizerState, WeightDecayMode};
pub use params::{Activation, Layout, LayoutEntry, ModelSpec, ParameterVector};

pub(crate) use model::argmax;

/// Fan-in scaled uniform initialisation: every weight and bias of a layer
/// with fan-in `n` is drawn from `U(-1/sqrt(n), 1/sqrt(n))`.
pub fn init_params<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> ParameterVector {
    let mut values = Vec::with_capacity(spec.num_params());
    for (fan_in, fan_out) in spec.layer_dims() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..(fan_in + 1) * fan_out {
            values.push(rng.random_range(-bound..bound));
        }
    }
    ParameterVector::new(values, spec.layout()).expect("initialisation matches layout")
}
