use std::mem;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Client, ClientUpdate, FederationConfig};
use crate::datagen::{train_transform_into, LabeledSample, NormStats};
use crate::error::{Error, Result};
use crate::rng::{self, purpose, StreamRng};
use crate::tensor::{loss_and_gradient, AdamHyper, Batch, Matrix, ModelSpec, OptimizerState, ParameterVector, Workspace};

/// Hyperparameters of one stretch of mini-batch training.
#[derive(Clone, Copy, Debug)]
pub struct TrainSettings<'a> {
    pub spec: &'a ModelSpec,
    pub hyper: &'a AdamHyper,
    pub batch_size: usize,
    pub norm: &'a NormStats,
}

/// Runs `epochs` epochs of Adam from a fresh optimizer state and returns the
/// mean per-sample loss of the last epoch (`None` when `epochs == 0`).
///
/// Each epoch shuffles the sample order, then draws one augmentation per
/// sample as batches are assembled. All draws come from `rng`.
pub fn train_epochs<R: Rng + ?Sized>(
    settings: TrainSettings<'_>,
    params: &mut ParameterVector,
    samples: &[LabeledSample],
    epochs: usize,
    rng: &mut R,
) -> Result<Option<f64>> {
    if samples.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if settings.batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let dim = settings.spec.input_dim;
    let mut opt = OptimizerState::new(params.len(), *settings.hyper);
    let mut ws = Workspace::new();
    let mut grad = vec![0.0; params.len()];
    let mut row = Vec::with_capacity(dim);
    let mut data = Vec::with_capacity(settings.batch_size * dim);
    let mut labels = Vec::with_capacity(settings.batch_size);
    let mut order: Vec<usize> = Vec::with_capacity(samples.len());
    let mut last = None;
    for _ in 0..epochs {
        order.clear();
        order.extend(0..samples.len());
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(settings.batch_size) {
            data.clear();
            labels.clear();
            for &i in chunk {
                train_transform_into(&samples[i].image, rng, settings.norm, &mut row);
                data.extend_from_slice(&row);
                labels.push(samples[i].label);
            }
            let batch = Batch::new(Matrix::new(chunk.len(), dim, mem::take(&mut data))?, mem::take(&mut labels))?;
            total += chunk.len() as f64 * loss_and_gradient(settings.spec, params, &batch, &mut ws, &mut grad)?;
            opt.step(params.values_mut(), &grad)?;
            let (inputs, l) = batch.into_parts();
            data = inputs.into_data();
            labels = l;
        }
        last = Some(total / samples.len() as f64);
    }
    if !params.is_finite() {
        return Err(Error::Numeric("training produced non-finite parameters".into()));
    }
    Ok(last)
}

/// The local-training stream of `client_id` in `round_index`. Centralized
/// training keyed by the same binding id consumes identical draws.
pub fn client_rng(seed: u64, round_index: u64, client_id: &str) -> StreamRng {
    rng::stream(seed, &[purpose::LOCAL_TRAIN, round_index, rng::label_of(client_id)])
}

/// Trains `client` for `config.local_epochs` epochs starting from `global`.
/// The optimizer state is fresh on every call.
pub fn local_train<R: Rng + ?Sized>(
    client: &Client,
    global: &ParameterVector,
    round_index: u64,
    config: &FederationConfig,
    rng: &mut R,
) -> Result<ClientUpdate> {
    let train = client.train();
    if train.is_empty() {
        return Err(Error::config(format!("client `{}` has no training samples", client.id())));
    }
    let mut params = global.clone();
    let train_loss = train_epochs(config.settings(), &mut params, train, config.local_epochs, rng)?
        .ok_or_else(|| Error::config("federation.local_epochs must be >= 1"))?;
    let val_loss = client
        .validation_set()
        .map(|set| super::evaluate_global(&config.model, &params, set).map(|e| e.loss))
        .transpose()?;
    Ok(ClientUpdate {
        client_id: client.id().to_string(),
        params,
        num_examples: train.len(),
        train_loss,
        round_index,
        val_loss,
    })
}

/// Centralized training on one dataset: `n_rounds` segments of
/// `local_epochs` epochs, resetting the optimizer between segments exactly
/// as a federation resets client optimizers every round.
pub fn train_centralized(
    config: &FederationConfig,
    binding_id: &str,
    samples: &[LabeledSample],
    init: ParameterVector,
) -> Result<ParameterVector> {
    config.validate()?;
    let mut params = init;
    params.check_matches(&config.model)?;
    for round in 1..=config.n_rounds as u64 {
        let mut rng = client_rng(config.seed, round, binding_id);
        train_epochs(config.settings(), &mut params, samples, config.local_epochs, &mut rng)?;
    }
    Ok(params)
}
