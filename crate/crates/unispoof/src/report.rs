//! Machine-readable run reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const REPORT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    /// Seconds since the Unix epoch; omitted with `--no-timestamp`.
    #[serde(skip_serializing_if = "Option::is_none")]
    created_unix: Option<u64>,
    config: &'a RunConfig,
    result: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `report.json` into `dir`.
pub fn write_report<T: Serialize>(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    timestamp: bool,
    result: &T,
) -> Result<PathBuf> {
    let created_unix = timestamp.then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    let path = dir.join("report.json");
    write_json(
        &path,
        &Report {
            schema_version: REPORT_VERSION,
            command,
            created_unix,
            config,
            result,
        },
    )?;
    Ok(path)
}
