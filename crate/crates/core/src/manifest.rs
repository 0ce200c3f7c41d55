//! Run manifests: the JSON record each stage writes next to its outputs.
//!
//! A manifest carries the config and its hash, seeds, severity-table version, the
//! dataset manifests used, and the stage results. It is sealed with the
//! SHA-256 of its own rendering (taken with the seal field empty), so any
//! edit is detected on load.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corruption::TABLES_VERSION;
use crate::error::{Error, Result};
use crate::orchestrator::{sha256_hex, AccuracyMatrix, LpoLink, Selection};

pub const FORMAT: &str = "fedstone-run-manifest/1";
const SEAL_KEY: &str = "\"manifest_hash\": ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Lpo,
    Frv,
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub corruption: Option<u64>,
}

/// A file referenced by the manifest, relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub matrix: AccuracyMatrix,
    pub best: Selection,
    pub grid_hash: String,
    pub cell_logs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrvRecord {
    pub applied: (usize, usize),
    pub lpo: LpoLink,
    /// Seal of the grid-search manifest this run was bound to.
    pub lpo_manifest_hash: String,
    pub clients: Vec<String>,
    pub final_accuracy: f64,
    pub round_log: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub stage: Stage,
    pub config_version: u32,
    pub config_hash: String,
    /// The run's config as TOML, with `output_dir` blanked.
    pub config: String,
    pub seeds: Seeds,
    pub severity_tables_version: String,
    pub datasets: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
    pub grid: Option<GridRecord>,
    pub frv: Option<FrvRecord>,
    pub manifest_hash: String,
}

impl RunManifest {
    pub fn new(stage: Stage, config: &RunConfig, seeds: Seeds) -> Self {
        RunManifest {
            format: FORMAT.to_string(),
            stage,
            config_version: config.config_version,
            config_hash: config.content_hash(),
            config: config.portable_toml(),
            seeds,
            severity_tables_version: TABLES_VERSION.to_string(),
            datasets: Vec::new(),
            outputs: Vec::new(),
            grid: None,
            frv: None,
            manifest_hash: String::new(),
        }
    }

    fn render_unsealed(&self) -> String {
        let mut copy = self.clone();
        copy.manifest_hash = String::new();
        let mut text = serde_json::to_string_pretty(&copy).expect("manifest serializes");
        text.push('\n');
        text
    }

    /// Seals the manifest and returns its text.
    pub fn render(&mut self) -> String {
        self.manifest_hash = sha256_hex(self.render_unsealed().as_bytes());
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    /// Parses and checks the seal against the raw text.
    pub fn parse(text: &str) -> Result<Self> {
        let manifest: RunManifest =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("run manifest: {e}")))?;
        if manifest.format != FORMAT {
            return Err(Error::Format(format!("unsupported run manifest format `{}`", manifest.format)));
        }
        let sealed = format!("{SEAL_KEY}\"{}\"", manifest.manifest_hash);
        if text.matches(&sealed).count() != 1 {
            return Err(Error::Provenance("run manifest seal is missing or duplicated".into()));
        }
        let unsealed = text.replacen(&sealed, &format!("{SEAL_KEY}\"\""), 1);
        if sha256_hex(unsealed.as_bytes()) != manifest.manifest_hash {
            return Err(Error::Provenance("run manifest hash mismatch: the file was modified after it was written".into()));
        }
        Ok(manifest)
    }

    /// The embedded config, checked against the recorded hash.
    pub fn run_config(&self) -> Result<RunConfig> {
        let config = RunConfig::from_toml(&self.config).map_err(|e| Error::Provenance(format!("embedded config: {e}")))?;
        if config.content_hash() != self.config_hash {
            return Err(Error::Provenance("embedded config does not match the recorded config hash".into()));
        }
        Ok(config)
    }

    /// The grid optimum, re-derived from the recorded grid and checked
    /// against the recorded link.
    pub fn lpo_link(&self) -> Result<LpoLink> {
        if self.stage != Stage::Lpo {
            return Err(Error::Provenance("manifest is not from a grid-search run".into()));
        }
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::Provenance("grid-search manifest holds no grid".into()))?;
        let link = LpoLink {
            best: grid.best,
            grid_hash: grid.grid_hash.clone(),
        };
        link.verify(&grid.matrix)?;
        Ok(link)
    }
}
