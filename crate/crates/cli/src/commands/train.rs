use fedstone_core::config::TrainMode;
use fedstone_core::federation::log::{render_round_log, write_timing};
use fedstone_core::federation::{evaluate_samples, run_federation_observed, train_centralized, union_test_set, Client};
use fedstone_core::manifest::{RunManifest, Seeds, Stage};
use fedstone_core::tensor::checkpoint::{self, write_atomic};
use fedstone_core::Result;

use super::{initial_params, load, partitions};
use crate::output::{write_dataset_manifest, write_ref};
use crate::RunArgs;

pub fn train(args: &RunArgs) -> Result<()> {
    let super::Loaded { config, out } = load(args)?;
    let root = out.join("train");
    let fed = config.federation_config()?;
    let mut manifest = RunManifest::new(
        Stage::Train,
        &config,
        Seeds {
            run: config.seed,
            corruption: None,
        },
    );
    let mut clients = Vec::new();
    for part in partitions(&config)? {
        let code = part.source.code();
        manifest
            .datasets
            .push(write_dataset_manifest(&root, &format!("data/{code}.manifest"), &part, config.shape())?);
        clients.push(Client::new(code, part, &fed.norm)?);
    }
    let init = initial_params(&config)?;

    let params = match config.federation.mode {
        TrainMode::Federated => {
            let run = run_federation_observed(&fed, &clients, init, |rec, params| {
                eprintln!("round {}: accuracy {}", rec.round_index, rec.global_accuracy);
                checkpoint::save(&root.join(format!("round_{}.ckpt", rec.round_index)), params)
            })?;
            let log = render_round_log(&run.records)?;
            manifest.outputs.push(write_ref(&root, "rounds.jsonl", log.as_bytes())?);
            write_timing(&root.join("timing.jsonl"), &run.records)?;
            run.params
        }
        TrainMode::Centralized => {
            // Validation guarantees exactly one client here.
            let client = &clients[0];
            train_centralized(&fed, client.id(), client.train(), init)?
        }
    };
    manifest
        .outputs
        .push(write_ref(&root, "final.ckpt", &checkpoint::encode(&params))?);
    write_atomic(&root.join("manifest.json"), manifest.render().as_bytes())?;
    let eval = evaluate_samples(&fed.model, &params, &union_test_set(&clients), &fed.norm)?;
    println!("final accuracy: {}", eval.accuracy);
    println!("checkpoint: {}", root.join("final.ckpt").display());
    Ok(())
}
