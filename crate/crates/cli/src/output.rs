//! File writers. Every CSV starts with a `# config_hash: ...` comment line
//! so outputs can be traced back to the inputs that produced them.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use rydberg_dqc::circuit::Readout;
use rydberg_dqc::problem::Problem;

/// First 16 hex digits of SHA-256 over the canonical JSON of the inputs that
/// determine every result. Worker count is deliberately excluded.
pub fn config_hash(problem: &Problem, readout: &Readout, seed: u64) -> Result<String> {
    #[derive(Serialize)]
    struct Key<'a> {
        problem: &'a Problem,
        readout: &'a Readout,
        seed: u64,
    }
    let json = serde_json::to_string(&Key { problem, readout, seed })?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(hex::encode(&digest[..8]))
}

pub fn write_csv<T: Serialize>(path: &Path, hash: &str, rows: &[T]) -> Result<()> {
    let mut file = std::fs::File::create(path).with_context(|| format!("[output] creating {}", path.display()))?;
    writeln!(file, "# config_hash: {hash}")?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("[output] writing {}", path.display()))
}
