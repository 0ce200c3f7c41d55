use std::path::Path;

use fedstone_core::datagen::manifest::render;
use fedstone_core::federation::log::{render_round_log, write_timing};
use fedstone_core::manifest::{FrvRecord, RunManifest, Seeds, Stage};
use fedstone_core::orchestrator::{run_frv, FrvSetup};
use fedstone_core::tensor::checkpoint;
use fedstone_core::tensor::checkpoint::write_atomic;
use fedstone_core::{Error, Result};
use serde_json::json;

use super::{initial_params, load, partitions, require_two_sources};
use crate::output::write_ref;
use crate::RunArgs;

pub fn frv(args: &RunArgs, lpo_manifest: &Path) -> Result<()> {
    let super::Loaded { config, out } = load(args)?;
    require_two_sources(&config)?;
    let text = std::fs::read_to_string(lpo_manifest)
        .map_err(|e| Error::Config(format!("cannot read grid-search manifest {}: {e}", lpo_manifest.display())))?;
    let lpo = RunManifest::parse(&text)?;
    if lpo.config_hash != config.content_hash() {
        return Err(Error::Provenance(format!(
            "config hash {} does not match the grid-search manifest ({})",
            config.content_hash(),
            lpo.config_hash
        )));
    }
    let link = lpo.lpo_link()?;
    let root = out.join("frv");

    let parts = partitions(&config)?;
    let setup = FrvSetup {
        base: config.federation_config()?,
        partitions: [parts[0].clone(), parts[1].clone()],
        init: initial_params(&config)?,
        plan: config.corruption_plan(),
        corruption_seed: config.frv.corruption_seed,
    };
    drop(parts);
    let result = run_frv(&link, &setup)?;

    let mut manifest = RunManifest::new(
        Stage::Frv,
        &config,
        Seeds {
            run: config.seed,
            corruption: Some(config.frv.corruption_seed),
        },
    );
    for (id, records) in result.clients.iter().zip(&result.datasets) {
        let text = render(config.shape(), records);
        manifest.datasets.push(write_ref(&root, &format!("data/{id}.manifest"), text.as_bytes())?);
    }
    let log = render_round_log(&result.round_records)?;
    manifest.outputs.push(write_ref(&root, "rounds.jsonl", log.as_bytes())?);
    write_timing(&root.join("timing.jsonl"), &result.round_records)?;
    let ckpt = checkpoint::encode(&result.final_params);
    manifest.outputs.push(write_ref(&root, "final.ckpt", &ckpt)?);
    let summary = json!({
        "applied": { "n_e": result.applied.0, "n_r": result.applied.1 },
        "clients": result.clients,
        "final_accuracy": result.final_accuracy,
        "round_accuracy": result.round_records.iter().map(|r| r.global_accuracy).collect::<Vec<_>>(),
        "lpo_grid_hash": result.lpo.grid_hash,
    });
    let summary = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    manifest.outputs.push(write_ref(&root, "result.json", summary.as_bytes())?);
    manifest.frv = Some(FrvRecord {
        applied: result.applied,
        lpo: result.lpo.clone(),
        lpo_manifest_hash: lpo.manifest_hash.clone(),
        clients: result.clients.clone(),
        final_accuracy: result.final_accuracy,
        round_log: "rounds.jsonl".into(),
    });
    write_atomic(&root.join("manifest.json"), manifest.render().as_bytes())?;
    println!(
        "applied: n_e={} n_r={}\nfinal accuracy: {}",
        result.applied.0, result.applied.1, result.final_accuracy
    );
    Ok(())
}
