//! The two-stage protocol: a grid search over local epochs and rounds on
//! clean two-client data, then a four-client robustness run (good and
//! corrupted halves of each source) at the selected optimum.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corruption::{corrupt_dataset_seeded, CorruptionPlan};
use crate::datagen::manifest::{records_of, ManifestRecord};
use crate::datagen::{
    generate_dataset, partition_dataset, split_good_corrupted, DatasetPartition, ImageShape, Source,
    NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::federation::{
    init_global, run_federation, run_federation_observed, train_epochs, Client, FederationConfig, FederationRun,
    RoundRecord,
};
use crate::rng::{self, purpose};
use crate::tensor::ParameterVector;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Dataset size and split parameters shared by every source.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSettings {
    pub shape: ImageShape,
    pub num_per_class: usize,
    pub per_class_test: usize,
    pub validation_fraction: f64,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            shape: ImageShape::default(),
            num_per_class: 2000,
            per_class_test: 200,
            validation_fraction: 0.10,
        }
    }
}

/// Generates and partitions one source. Generation and partitioning share
/// `seed`; their streams are separated by purpose tags.
pub fn build_partition(source: Source, data: &DataSettings, seed: u64) -> Result<DatasetPartition> {
    let samples = generate_dataset(source, data.num_per_class, seed, data.shape)?;
    partition_dataset(samples, data.per_class_test, data.validation_fraction, seed)
}

/// The (n_e, n_r) values to sweep, each strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_e: Vec<usize>,
    pub n_r: Vec<usize>,
}

impl GridSpec {
    pub fn desk() -> Self {
        GridSpec {
            n_e: vec![1, 2, 4, 7, 10],
            n_r: vec![1, 2, 4, 7, 10],
        }
    }

    pub fn full() -> Self {
        GridSpec {
            n_e: (1..=10).collect(),
            n_r: (1..=10).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("grid.n_e", &self.n_e), ("grid.n_r", &self.n_r)] {
            if axis.is_empty() {
                return Err(Error::config(format!("{name} must not be empty")));
            }
            if axis.contains(&0) {
                return Err(Error::config(format!("{name} values must be >= 1")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(format!("{name} must be strictly increasing")));
            }
        }
        Ok(())
    }
}

/// Accuracy per (n_e, n_r); rows follow `n_e`, columns follow `n_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub n_e: Vec<usize>,
    pub n_r: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(n_e: Vec<usize>, n_r: Vec<usize>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != n_e.len() || values.iter().any(|row| row.len() != n_r.len()) {
            return Err(Error::input(format!(
                "accuracy matrix must be {}x{} to match its axes",
                n_e.len(),
                n_r.len()
            )));
        }
        Ok(AccuracyMatrix { n_e, n_r, values })
    }

    pub fn get(&self, n_e: usize, n_r: usize) -> Option<f64> {
        let i = self.n_e.iter().position(|&v| v == n_e)?;
        let j = self.n_r.iter().position(|&v| v == n_r)?;
        Some(self.values[i][j])
    }

    /// CSV with one row per n_e and one column per n_r. Values print in
    /// shortest round-trip form, so the text is a pure function of the bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_e\\n_r");
        for r in &self.n_r {
            let _ = write!(out, ",{r}");
        }
        out.push('\n');
        for (e, row) in self.n_e.iter().zip(&self.values) {
            let _ = write!(out, "{e}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::input(format!("grid csv: {what}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let mut cols = header.split(',');
        if cols.next() != Some("n_e\\n_r") {
            return Err(bad("first header cell must be `n_e\\n_r`"));
        }
        let n_r = cols.map(|c| c.trim().parse().map_err(|_| bad("bad n_r header"))).collect::<Result<Vec<usize>>>()?;
        let mut n_e = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let mut cells = line.split(',');
            n_e.push(cells.next().unwrap_or("").trim().parse().map_err(|_| bad("bad n_e label"))?);
            values.push(cells.map(|c| c.trim().parse().map_err(|_| bad("bad value"))).collect::<Result<Vec<f64>>>()?);
        }
        AccuracyMatrix::new(n_e, n_r, values)
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_csv().as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub n_e: usize,
    pub n_r: usize,
    pub accuracy: f64,
}

/// Highest-accuracy cell. Ties go to the smaller n_r, then the smaller n_e.
pub fn select_optimal(matrix: &AccuracyMatrix) -> Result<Selection> {
    let mut best: Option<Selection> = None;
    for (i, &e) in matrix.n_e.iter().enumerate() {
        for (j, &r) in matrix.n_r.iter().enumerate() {
            let acc = matrix.values[i][j];
            if acc.is_nan() {
                return Err(Error::input(format!("accuracy at (n_e={e}, n_r={r}) is NaN")));
            }
            let better = match best {
                None => true,
                Some(b) => acc > b.accuracy || (acc == b.accuracy && (r, e) < (b.n_r, b.n_e)),
            };
            if better {
                best = Some(Selection {
                    n_e: e,
                    n_r: r,
                    accuracy: acc,
                });
            }
        }
    }
    best.ok_or_else(|| Error::input("cannot select from an empty accuracy matrix"))
}

/// Clients, starting parameters and a config template whose `n_rounds` and
/// `local_epochs` are overridden per run.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub base: FederationConfig,
    pub clients: Vec<Client>,
    pub init: ParameterVector,
}

impl Experiment {
    fn config_for(&self, n_e: usize, n_r: usize) -> FederationConfig {
        FederationConfig {
            n_rounds: n_r,
            local_epochs: n_e,
            ..self.base.clone()
        }
    }
}

/// One fresh federation at (n_e, n_r) from the experiment's initial params.
pub fn run_cell(experiment: &Experiment, n_e: usize, n_r: usize) -> Result<FederationRun> {
    run_federation(&experiment.config_for(n_e, n_r), &experiment.clients, experiment.init.clone())
        .map_err(|e| e.context(format!("cell (n_e={n_e}, n_r={n_r})")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub matrix: AccuracyMatrix,
    pub best: Selection,
    /// Round records of each n_e row, up to the largest n_r. The log of cell
    /// (n_e, n_r) is the first n_r records of its row.
    pub row_records: Vec<Vec<RoundRecord>>,
}

pub fn run_lpo(grid: &GridSpec, experiment: &Experiment) -> Result<GridResult> {
    run_lpo_with(grid, experiment, |_, _| Ok(()))
}

/// Runs the grid row by row, calling `on_row` with each finished row.
///
/// Every cell starts from the same initial parameters, and a run is a pure
/// function of (config, init, data), so the first n_r rounds of an n_e run
/// with more rounds are bit-identical to a fresh n_r-round run. Each row is
/// therefore computed by one federation to the largest n_r, reading off the
/// accuracy after every requested round count.
pub fn run_lpo_with<F>(grid: &GridSpec, experiment: &Experiment, mut on_row: F) -> Result<GridResult>
where
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    grid.validate()?;
    let max_r = *grid.n_r.last().expect("validated non-empty");
    let mut values = Vec::with_capacity(grid.n_e.len());
    let mut row_records = Vec::with_capacity(grid.n_e.len());
    for &e in &grid.n_e {
        let mut row = Vec::with_capacity(grid.n_r.len());
        let run = run_federation_observed(&experiment.config_for(e, max_r), &experiment.clients, experiment.init.clone(), |rec, _| {
            if grid.n_r.contains(&(rec.round_index as usize)) {
                row.push(rec.global_accuracy);
            }
            Ok(())
        })
        .map_err(|err| {
            let r = grid.n_r.get(row.len()).copied().unwrap_or(max_r);
            err.context(format!("cell (n_e={e}, n_r={r})"))
        })?;
        on_row(e, &row)?;
        values.push(row);
        row_records.push(run.records);
    }
    let matrix = AccuracyMatrix::new(grid.n_e.clone(), grid.n_r.clone(), values)?;
    let best = select_optimal(&matrix)?;
    Ok(GridResult {
        matrix,
        best,
        row_records,
    })
}

/// Source-task pre-training used as a warm start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainSpec {
    pub enabled: bool,
    pub epochs: usize,
    pub num_per_class: usize,
}

impl Default for PretrainSpec {
    fn default() -> Self {
        PretrainSpec {
            enabled: false,
            epochs: 2,
            num_per_class: 500,
        }
    }
}

/// Centralized training on the synthetic source task S, starting from the
/// seeded initialisation. Returns `None` when disabled.
pub fn pretrain_source(
    spec: &PretrainSpec,
    config: &FederationConfig,
    shape: ImageShape,
    seed: u64,
) -> Result<Option<ParameterVector>> {
    if !spec.enabled {
        return Ok(None);
    }
    if shape.len() != config.model.input_dim {
        return Err(Error::config(format!(
            "pretrain: source images have {} values but model.input_dim is {}",
            shape.len(),
            config.model.input_dim
        )));
    }
    if config.model.num_classes != NUM_CLASSES {
        return Err(Error::config(format!("pretrain: source task has {NUM_CLASSES} classes, model has {}", config.model.num_classes)));
    }
    if spec.num_per_class < 1 {
        return Err(Error::config("pretrain.num_per_class must be >= 1"));
    }
    let mut params = init_global(&config.model, seed, None)?;
    let samples = generate_dataset(Source::S, spec.num_per_class, seed, shape)?;
    let mut rng = rng::stream(seed, &[purpose::PRETRAIN]);
    train_epochs(config.settings(), &mut params, &samples, spec.epochs, &mut rng)?;
    Ok(Some(params))
}

/// The grid optimum an FRV run is bound to, with the content hash of the
/// grid it was selected from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpoLink {
    pub best: Selection,
    pub grid_hash: String,
}

impl LpoLink {
    /// Re-derives the optimum from `matrix` and checks it against the link.
    pub fn verify(&self, matrix: &AccuracyMatrix) -> Result<()> {
        if matrix.content_hash() != self.grid_hash {
            return Err(Error::Provenance("grid content hash does not match the recorded hash".into()));
        }
        if select_optimal(matrix)? != self.best {
            return Err(Error::Provenance("recorded optimum is not the optimum of the recorded grid".into()));
        }
        Ok(())
    }
}

/// Inputs of the robustness stage.
#[derive(Clone, Debug)]
pub struct FrvSetup {
    pub base: FederationConfig,
    /// Clean partitions of sources A and B.
    pub partitions: [DatasetPartition; 2],
    pub init: ParameterVector,
    pub plan: CorruptionPlan,
    pub corruption_seed: u64,
}

/// Halves each source into good and corrupted clients. With `corrupt`
/// false the "corrupted" halves stay clean, giving the paired clean run.
pub fn frv_clients(setup: &FrvSetup, corrupt: bool) -> Result<Vec<Client>> {
    let mut clients = Vec::with_capacity(4);
    for part in &setup.partitions {
        let code = part.source.code();
        let (good, mut bad) = split_good_corrupted(part.clone(), setup.base.seed);
        if corrupt {
            for split in [&mut bad.train, &mut bad.validation, &mut bad.test] {
                *split = corrupt_dataset_seeded(std::mem::take(split), setup.corruption_seed, &setup.plan);
            }
        }
        clients.push(Client::new(format!("{code}-good"), good, &setup.base.norm)?);
        clients.push(Client::new(format!("{code}-corrupted"), bad, &setup.base.norm)?);
    }
    Ok(clients)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrvResult {
    pub applied: (usize, usize),
    pub lpo: LpoLink,
    pub clients: Vec<String>,
    pub final_accuracy: f64,
    pub final_params: ParameterVector,
    pub round_records: Vec<RoundRecord>,
    /// Dataset manifest records of each client, in `clients` order.
    pub datasets: Vec<Vec<ManifestRecord>>,
}

fn run_four_client(link: &LpoLink, setup: &FrvSetup, corrupt: bool) -> Result<FrvResult> {
    let (n_e, n_r) = (link.best.n_e, link.best.n_r);
    let clients = frv_clients(setup, corrupt)?;
    let experiment = Experiment {
        base: setup.base.clone(),
        clients,
        init: setup.init.clone(),
    };
    let run = run_cell(&experiment, n_e, n_r)?;
    let final_accuracy = run.records.last().map_or(f64::NAN, |r| r.global_accuracy);
    Ok(FrvResult {
        applied: (n_e, n_r),
        lpo: link.clone(),
        clients: experiment.clients.iter().map(|c| c.id().to_string()).collect(),
        datasets: experiment
            .clients
            .iter()
            .map(|c| records_of(c.data(), c.data().seed))
            .collect(),
        final_accuracy,
        final_params: run.params,
        round_records: run.records,
    })
}

/// Four-client federation with corrupted halves, at the linked optimum,
/// evaluated on the union of all four test splits.
pub fn run_frv(link: &LpoLink, setup: &FrvSetup) -> Result<FrvResult> {
    run_four_client(link, setup, true)
}

/// The same four-client federation with every half left clean.
pub fn run_clean_four_client(link: &LpoLink, setup: &FrvSetup) -> Result<FrvResult> {
    run_four_client(link, setup, false)
}

/// Accuracy of untrained parameters on the union test set.
pub fn random_baseline(config: &FederationConfig, clients: &[Client], seed: u64) -> Result<f64> {
    let params = init_global(&config.model, seed, None)?;
    let test = crate::federation::union_test_set(clients);
    Ok(crate::federation::evaluate_samples(&config.model, &params, &test, &config.norm)?.accuracy)
}
