use fedstone_core::federation::log::{render_round_log, write_timing};
use fedstone_core::federation::Client;
use fedstone_core::manifest::{GridRecord, RunManifest, Seeds, Stage};
use fedstone_core::orchestrator::{run_lpo_with, AccuracyMatrix, Experiment, GridSpec};
use fedstone_core::tensor::checkpoint::write_atomic;
use fedstone_core::Result;

use super::{initial_params, load, partitions, require_two_sources};
use crate::output::{write_dataset_manifest, write_ref};
use crate::RunArgs;

pub fn lpo(args: &RunArgs, grid_full: bool) -> Result<()> {
    let super::Loaded { mut config, out } = load(args)?;
    if grid_full {
        let full = GridSpec::full();
        config.grid.n_e = full.n_e;
        config.grid.n_r = full.n_r;
    }
    require_two_sources(&config)?;
    let root = out.join("lpo");
    let grid = config.grid_spec();
    let fed = config.federation_config()?;

    let parts = partitions(&config)?;
    let mut manifest = RunManifest::new(
        Stage::Lpo,
        &config,
        Seeds {
            run: config.seed,
            corruption: None,
        },
    );
    let mut clients = Vec::with_capacity(parts.len());
    for part in parts {
        let code = part.source.code();
        manifest
            .datasets
            .push(write_dataset_manifest(&root, &format!("data/{code}.manifest"), &part, config.shape())?);
        clients.push(Client::new(code, part, &fed.norm)?);
    }
    let experiment = Experiment {
        base: fed,
        clients,
        init: initial_params(&config)?,
    };

    // Completed rows are kept on disk so a failed grid leaves partial results.
    let partial_path = root.join("grid.partial.csv");
    let mut done_e = Vec::new();
    let mut done_rows = Vec::new();
    let result = run_lpo_with(&grid, &experiment, |e, row| {
        done_e.push(e);
        done_rows.push(row.to_vec());
        let partial = AccuracyMatrix::new(done_e.clone(), grid.n_r.clone(), done_rows.clone())?;
        eprintln!("n_e={e}: {row:?}");
        write_atomic(&partial_path, partial.to_csv().as_bytes())
    })?;

    let mut cell_logs = Vec::new();
    for (e, records) in grid.n_e.iter().zip(&result.row_records) {
        for &r in &grid.n_r {
            let rel = format!("logs/ne{e:02}_nr{r:02}.jsonl");
            write_ref(&root, &rel, render_round_log(&records[..r])?.as_bytes())?;
            cell_logs.push(rel);
        }
        write_timing(&root.join(format!("timing/ne{e:02}.jsonl")), records)?;
    }
    let csv = result.matrix.to_csv();
    manifest.outputs.push(write_ref(&root, "grid.csv", csv.as_bytes())?);
    std::fs::remove_file(&partial_path)?;
    manifest.grid = Some(GridRecord {
        grid_hash: result.matrix.content_hash(),
        matrix: result.matrix,
        best: result.best,
        cell_logs,
    });
    write_atomic(&root.join("manifest.json"), manifest.render().as_bytes())?;
    println!(
        "best: n_e={} n_r={} accuracy={}",
        result.best.n_e, result.best.n_r, result.best.accuracy
    );
    println!("manifest: {}", root.join("manifest.json").display());
    Ok(())
}
