//! Round logs as JSON lines, with wall-clock timing in a separate sidecar.

use std::path::Path;

use serde::Serialize;

use super::RoundRecord;
use crate::error::{Error, Result};
use crate::tensor::checkpoint::write_atomic;

pub fn render_round_log(records: &[RoundRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_round_log(text: &str) -> Result<Vec<RoundRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("bad round record: {e}"))))
        .collect()
}

pub fn write_round_log(path: &Path, records: &[RoundRecord]) -> Result<()> {
    write_atomic(path, render_round_log(records)?.as_bytes())
}

#[derive(Serialize)]
struct Timing {
    round_index: u64,
    wall_time: f64,
}

pub fn write_timing(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let t = Timing {
            round_index: r.round_index,
            wall_time: r.wall_time,
        };
        out.push_str(&serde_json::to_string(&t).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
