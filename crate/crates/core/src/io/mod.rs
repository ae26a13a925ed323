//! Scenario files, trajectory and sweep CSVs, JSON run summaries.

mod config;
mod output;

use std::path::Path;

pub use config::{load_scenario, parse_scenario, scenario_to_string, write_scenario};
pub use output::{
    emit_plot_data, fmt_sig, plot_csv, read_summary, scenario_hash, trajectory_csv, write_summary,
    write_trajectory, RunSummary, TRAJECTORY_HEADER,
};

use crate::error::{Error, Result};

/// Writes through a temporary sibling file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
