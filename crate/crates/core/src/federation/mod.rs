//! FedAvg rounds over an in-process transport.
//!
//! A round broadcasts the global parameters to every client, lets each
//! client train locally from a fresh optimizer state, collects the updates,
//! sorts them by client id and averages them weighted by example count.

mod eval;
mod local;
pub mod log;
pub mod transport;

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{DatasetPartition, LabeledSample, NormStats, Split};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::tensor::{init_params, AdamHyper, ModelSpec, ParameterVector};

pub use eval::{evaluate_global, evaluate_samples, EvalSet, Evaluation};
pub use local::{client_rng, local_train, train_centralized, train_epochs, TrainSettings};
pub use transport::{Broadcast, InProcessBus, Transport};

/// What a client sends back after local training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: String,
    pub params: ParameterVector,
    pub num_examples: usize,
    pub train_loss: f64,
    pub round_index: u64,
    /// Loss on the client's validation split, monitored only.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundStats {
    pub client_id: String,
    pub train_loss: f64,
    pub num_examples: usize,
    pub val_loss: Option<f64>,
}

/// One line of the round log. `wall_time` is kept out of the serialized
/// record so logs stay byte-reproducible; see [`log::write_timing`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u64,
    pub per_client: Vec<ClientRoundStats>,
    pub global_accuracy: f64,
    pub global_loss: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Weight each client by its training-set size.
    #[default]
    ExampleCount,
    /// Every client counts once.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationConfig {
    pub n_rounds: usize,
    pub local_epochs: usize,
    pub model: ModelSpec,
    pub optimizer: AdamHyper,
    pub batch_size: usize,
    pub aggregation: AggregationMode,
    pub norm: NormStats,
    pub seed: u64,
}

impl FederationConfig {
    pub fn new(model: ModelSpec, n_rounds: usize, local_epochs: usize, seed: u64) -> Self {
        FederationConfig {
            n_rounds,
            local_epochs,
            model,
            optimizer: AdamHyper::default(),
            batch_size: 4,
            aggregation: AggregationMode::default(),
            norm: NormStats::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds < 1 {
            return Err(Error::config("federation.n_rounds must be >= 1"));
        }
        if self.local_epochs < 1 {
            return Err(Error::config("federation.local_epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("federation.batch_size must be >= 1"));
        }
        self.model.validate()?;
        self.optimizer.validate()?;
        Ok(())
    }

    pub(crate) fn settings(&self) -> TrainSettings<'_> {
        TrainSettings {
            spec: &self.model,
            hyper: &self.optimizer,
            batch_size: self.batch_size,
            norm: &self.norm,
        }
    }
}

/// A participant bound to its own dataset partition.
#[derive(Clone, Debug)]
pub struct Client {
    id: String,
    data: DatasetPartition,
    validation: Option<EvalSet>,
}

impl Client {
    pub fn new(id: impl Into<String>, data: DatasetPartition, norm: &NormStats) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::config("client id must not be empty"));
        }
        let validation = match data.validation.is_empty() {
            true => None,
            false => Some(EvalSet::build(&data.validation, norm)?),
        };
        Ok(Client { id, data, validation })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn data(&self) -> &DatasetPartition {
        &self.data
    }

    pub fn train(&self) -> &[LabeledSample] {
        &self.data.train
    }

    pub fn test(&self) -> &[LabeledSample] {
        &self.data.test
    }

    fn validation_set(&self) -> Option<&EvalSet> {
        self.validation.as_ref()
    }
}

/// Returns `warm_start` verbatim when given, else a seeded fan-in uniform
/// initialisation.
pub fn init_global(spec: &ModelSpec, seed: u64, warm_start: Option<&ParameterVector>) -> Result<ParameterVector> {
    match warm_start {
        Some(p) => {
            p.check_matches(spec)?;
            Ok(p.clone())
        }
        None => Ok(init_params(spec, &mut rng::stream(seed, &[purpose::INIT]))),
    }
}

/// Example-count weighted FedAvg.
pub fn fedavg(updates: &[ClientUpdate]) -> Result<ParameterVector> {
    aggregate(updates, AggregationMode::ExampleCount)
}

/// Coordinate-wise weighted mean of the update parameters.
///
/// Updates are sorted by client id first so the summation order, and hence
/// every bit of the result, is independent of arrival order. Each output
/// coordinate is clamped into the range spanned by the inputs so rounding can
/// never leave the convex hull.
pub fn aggregate(updates: &[ClientUpdate], mode: AggregationMode) -> Result<ParameterVector> {
    if updates.is_empty() {
        return Err(Error::protocol("cannot aggregate an empty update list"));
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by(|a, b| a.client_id.cmp(&b.client_id));
    for pair in sorted.windows(2) {
        if pair[0].client_id == pair[1].client_id {
            return Err(Error::protocol(format!("duplicate update from client `{}`", pair[0].client_id)));
        }
    }
    let layout = sorted[0].params.layout();
    for u in &sorted {
        if u.params.layout() != layout {
            return Err(Error::protocol(format!("update from `{}` has a different layout", u.client_id)));
        }
        if !u.params.is_finite() {
            return Err(Error::protocol(format!("update from `{}` contains non-finite values", u.client_id)));
        }
        if u.num_examples == 0 {
            return Err(Error::protocol(format!("update from `{}` reports zero examples", u.client_id)));
        }
    }
    if sorted.len() == 1 {
        return Ok(sorted[0].params.clone());
    }
    let weights: Vec<f64> = sorted
        .iter()
        .map(|u| match mode {
            AggregationMode::ExampleCount => u.num_examples as f64,
            AggregationMode::Uniform => 1.0,
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; layout.num_values()];
    for (u, &w) in sorted.iter().zip(&weights) {
        for (o, &v) in out.iter_mut().zip(u.params.values()) {
            *o += w * v;
        }
    }
    for (j, o) in out.iter_mut().enumerate() {
        let (lo, hi) = sorted.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| {
            let v = u.params.values()[j];
            (lo.min(v), hi.max(v))
        });
        *o = (*o / total).clamp(lo, hi);
    }
    ParameterVector::new(out, layout.clone())
}

/// Checks client ids are unique and no sample id is bound to two clients.
pub fn check_clients(clients: &[Client]) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::config("federation.clients must not be empty"));
    }
    let mut ids = BTreeSet::new();
    let mut samples = BTreeSet::new();
    for c in clients {
        if !ids.insert(c.id()) {
            return Err(Error::config(format!("duplicate client id `{}`", c.id())));
        }
        for split in Split::ALL {
            for s in c.data().split(split) {
                if !samples.insert(s.id) {
                    return Err(Error::config(format!("sample {} is bound to more than one client", s.id)));
                }
            }
        }
    }
    Ok(())
}

/// The union of every client's test split.
pub fn union_test_set(clients: &[Client]) -> Vec<LabeledSample> {
    clients.iter().flat_map(|c| c.test().iter().cloned()).collect()
}

/// One synchronous round: broadcast, local training, FedAvg, evaluation.
/// Any client failure aborts the round before aggregation.
pub fn run_round<T: Transport>(
    global: &ParameterVector,
    clients: &[Client],
    config: &FederationConfig,
    eval_set: &EvalSet,
    round_index: u64,
    transport: &mut T,
) -> Result<(ParameterVector, RoundRecord)> {
    let started = Instant::now();
    for c in clients {
        transport.send_params(
            c.id(),
            Broadcast {
                round_index,
                local_epochs: config.local_epochs,
                params: global.clone(),
            },
        )?;
    }
    for c in clients {
        let msg = transport.recv_params(c.id())?;
        if msg.round_index != round_index {
            return Err(Error::protocol(format!(
                "client `{}` received round {} during round {round_index}",
                c.id(),
                msg.round_index
            )));
        }
        let mut rng = client_rng(config.seed, round_index, c.id());
        let update = local_train(c, &msg.params, round_index, config, &mut rng)?;
        transport.send_update(update)?;
    }
    let mut updates = Vec::with_capacity(clients.len());
    for _ in clients {
        let u = transport.recv_update()?;
        if u.round_index != round_index {
            return Err(Error::protocol(format!("stale update from `{}`", u.client_id)));
        }
        updates.push(u);
    }
    updates.sort_by(|a, b| a.client_id.cmp(&b.client_id));
    let next = aggregate(&updates, config.aggregation)?;
    let eval = evaluate_global(&config.model, &next, eval_set)?;
    let record = RoundRecord {
        round_index,
        per_client: updates
            .iter()
            .map(|u| ClientRoundStats {
                client_id: u.client_id.clone(),
                train_loss: u.train_loss,
                num_examples: u.num_examples,
                val_loss: u.val_loss,
            })
            .collect(),
        global_accuracy: eval.accuracy,
        global_loss: eval.loss,
        per_class_accuracy: eval.per_class_accuracy,
        wall_time: started.elapsed().as_secs_f64(),
    };
    Ok((next, record))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationRun {
    pub params: ParameterVector,
    pub records: Vec<RoundRecord>,
}

/// Runs `config.n_rounds` rounds from `init`, evaluating on the union of the
/// clients' test splits.
pub fn run_federation(config: &FederationConfig, clients: &[Client], init: ParameterVector) -> Result<FederationRun> {
    run_federation_observed(config, clients, init, |_, _| Ok(()))
}

/// As [`run_federation`], calling `observer` after every round with the
/// round record and the new global parameters.
pub fn run_federation_observed<F>(
    config: &FederationConfig,
    clients: &[Client],
    init: ParameterVector,
    mut observer: F,
) -> Result<FederationRun>
where
    F: FnMut(&RoundRecord, &ParameterVector) -> Result<()>,
{
    config.validate()?;
    check_clients(clients)?;
    init.check_matches(&config.model)?;
    let eval_set = EvalSet::build(&union_test_set(clients), &config.norm)?;
    let mut bus = InProcessBus::new();
    let mut params = init;
    let mut records = Vec::with_capacity(config.n_rounds);
    for round in 1..=config.n_rounds as u64 {
        let (next, record) = run_round(&params, clients, config, &eval_set, round, &mut bus)?;
        observer(&record, &next)?;
        params = next;
        records.push(record);
    }
    Ok(FederationRun { params, records })
}
