mod corrupt;
mod eval;
mod frv;
mod lpo;
mod train;

use std::path::PathBuf;

use fedstone_core::config::RunConfig;
use fedstone_core::datagen::{DatasetPartition, Source};
use fedstone_core::federation::init_global;
use fedstone_core::orchestrator::{build_partition, pretrain_source};
use fedstone_core::tensor::ParameterVector;
use fedstone_core::{Error, Result};

use crate::RunArgs;

pub use corrupt::corrupt;
pub use eval::eval;
pub use frv::frv;
pub use lpo::lpo;
pub use train::train;

/// A validated config with CLI overrides applied, and the output directory.
struct Loaded {
    config: RunConfig,
    out: PathBuf,
}

fn load(args: &RunArgs) -> Result<Loaded> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    let out = config.output_dir.clone();
    Ok(Loaded { config, out })
}

/// Both stages of the protocol run on exactly the two hospital sources.
fn require_two_sources(config: &RunConfig) -> Result<()> {
    if config.federation.clients != [Source::A, Source::B] {
        return Err(Error::Config("federation.clients: grid search and robustness runs use [\"A\", \"B\"]".into()));
    }
    Ok(())
}

fn partitions(config: &RunConfig) -> Result<Vec<DatasetPartition>> {
    let data = config.data_settings();
    config
        .federation
        .clients
        .iter()
        .map(|&s| build_partition(s, &data, config.seed))
        .collect()
}

/// The shared starting point: the seeded initialisation, or the pre-trained
/// source-task parameters when pre-training is enabled.
fn initial_params(config: &RunConfig) -> Result<ParameterVector> {
    let fed = config.federation_config()?;
    let warm = pretrain_source(&config.pretrain_spec(), &fed, config.shape(), config.seed)?;
    init_global(&fed.model, config.seed, warm.as_ref())
}
