//! Score files: CSV `pair_or_sample_id,score,label`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use unispoof_core::metrics::ScoreRecord;

use crate::error::{CliError, Result};

#[derive(Serialize, Deserialize)]
struct Row {
    pair_or_sample_id: String,
    score: f64,
    label: u8,
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    for r in records {
        w.serialize(Row {
            pair_or_sample_id: r.id.clone(),
            score: r.score,
            label: r.label,
        })
        .map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(|e| CliError::format(path, e))?;
            if row.label > 1 || !row.score.is_finite() {
                return Err(CliError::format(
                    path,
                    format!("bad row for {}: labels are 0/1, scores finite", row.pair_or_sample_id),
                ));
            }
            Ok(ScoreRecord {
                id: row.pair_or_sample_id,
                score: row.score,
                label: row.label,
            })
        })
        .collect()
}
