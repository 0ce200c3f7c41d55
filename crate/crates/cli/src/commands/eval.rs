use std::path::Path;

use fedstone_core::corruption::{corrupt_dataset_seeded, CorruptionPlan, RELEASE_TABLES};
use fedstone_core::federation::evaluate_samples;
use fedstone_core::tensor::checkpoint;
use fedstone_core::Result;

use super::{load, partitions};
use crate::RunArgs;

pub fn eval(args: &RunArgs, ckpt: &Path, severity: Option<u8>) -> Result<()> {
    let super::Loaded { config, .. } = load(args)?;
    let fed = config.federation_config()?;
    let params = checkpoint::load(ckpt)?;
    params.check_matches(&fed.model)?;
    let mut test: Vec<_> = partitions(&config)?.into_iter().flat_map(|p| p.test).collect();
    if let Some(level) = severity {
        let plan = CorruptionPlan {
            tables: RELEASE_TABLES,
            fixed_severity: Some(level),
        };
        test = corrupt_dataset_seeded(test, config.frv.corruption_seed, &plan);
    }
    let eval = evaluate_samples(&fed.model, &params, &test, &fed.norm)?;
    println!("{}", serde_json::to_string_pretty(&eval).expect("evaluation serializes"));
    Ok(())
}
