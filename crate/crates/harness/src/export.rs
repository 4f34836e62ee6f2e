//! Long-format export of metrics files for external plotting.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{read_metrics_file, MetricsError};

/// One `(run, episode, frame, metric, value)` observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub run: String,
    pub episode: usize,
    pub frame: usize,
    pub metric: String,
    pub value: f64,
}

fn run_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads every metrics file and tags its rows with the file stem as run id.
/// Each episode's frames must run 0, 1, 2, ... without gaps.
pub fn export_plot_data(paths: &[PathBuf]) -> Result<Vec<LongRow>, MetricsError> {
    let mut out = Vec::new();
    for path in paths {
        let rows = read_metrics_file(path)?;
        let run = run_id(path);
        let mut next_frame: BTreeMap<usize, usize> = BTreeMap::new();
        for row in &rows {
            let expected = next_frame.entry(row.episode).or_insert(0);
            if row.frame != *expected {
                return Err(MetricsError::Invalid {
                    path: path.clone(),
                    message: format!(
                        "episode {} jumps to frame {} where frame {} was expected",
                        row.episode, row.frame, expected
                    ),
                });
            }
            *expected += 1;
            for (metric, value) in row.values() {
                out.push(LongRow {
                    run: run.clone(),
                    episode: row.episode,
                    frame: row.frame,
                    metric: metric.to_string(),
                    value,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_long<W: Write>(out: W, rows: &[LongRow]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_long<R: Read>(input: R) -> Result<Vec<LongRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
