use std::path::Path;

use fedstone_core::corruption::{contact_sheet, corrupt_dataset_seeded, CorruptionPlan, RELEASE_TABLES};
use fedstone_core::datagen::manifest::{parse, render, ManifestRecord};
use fedstone_core::rng::{self, purpose};
use fedstone_core::tensor::checkpoint::write_atomic;
use fedstone_core::{Error, Result};

use crate::output::write_png;

const SHEET_SCALE: u32 = 4;

pub fn corrupt(
    manifest: Option<&Path>,
    seed: u64,
    out: &Path,
    severity: Option<u8>,
    emit_grid: bool,
    print_tables: bool,
) -> Result<()> {
    if print_tables {
        print!("{}", RELEASE_TABLES.render());
        return Ok(());
    }
    let path = manifest.ok_or_else(|| Error::Input("--manifest is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read dataset manifest {}: {e}", path.display())))?;
    let dataset = parse(&text)?;
    if dataset.records.is_empty() {
        return Err(Error::Input("dataset manifest holds no samples".into()));
    }

    let plan = CorruptionPlan {
        tables: RELEASE_TABLES,
        fixed_severity: severity,
    };
    let mut records = Vec::with_capacity(dataset.records.len());
    for r in &dataset.records {
        let clean = r.regenerate(dataset.shape)?;
        let corrupted = corrupt_dataset_seeded(vec![clean], seed, &plan);
        records.push(ManifestRecord {
            corruption: corrupted[0].corruption,
            ..r.clone()
        });
    }
    write_atomic(&out.join("corrupted.manifest"), render(dataset.shape, &records).as_bytes())?;
    println!("wrote {} records to {}", records.len(), out.join("corrupted.manifest").display());

    if emit_grid {
        let first = dataset.records[0].regenerate(dataset.shape)?;
        let level = severity.unwrap_or(3);
        let mut r = rng::stream(seed, &[purpose::CORRUPT]);
        let sheet = contact_sheet(&first.image, level, &mut r)?;
        let png = out.join(format!("grid_severity{level}.png"));
        write_png(&png, &sheet, SHEET_SCALE)?;
        println!("contact sheet of {} at severity {level}: {}", first.id, png.display());
    }
    Ok(())
}
