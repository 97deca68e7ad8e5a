//! Run configuration and on-disk formats.

mod config;
mod snapshot;

use thiserror::Error;

use crate::coupling::CouplingError;
use crate::dynamics::DynamicsError;
use crate::spectral::SpectralError;

pub use config::{EnsembleSettings, ErgodicitySettings, ModelConfig, RunConfig, RunSetup};
pub use snapshot::{read_snapshot, read_state, write_snapshot, write_state, Snapshot, MAGIC, VERSION};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not a snapshot file (bad magic)")]
    Magic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot is truncated")]
    Truncated,
    #[error("snapshot has trailing bytes")]
    Trailing,
    #[error("snapshot field {0:?} is missing")]
    MissingField(String),
    #[error("snapshot field {name:?} is not Hermitian (residual {residual:e})")]
    NotHermitian { name: String, residual: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl From<DynamicsError> for IoError {
    fn from(e: DynamicsError) -> Self {
        IoError::Config(e.to_string())
    }
}

impl From<CouplingError> for IoError {
    fn from(e: CouplingError) -> Self {
        IoError::Config(e.to_string())
    }
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Writes `<stem>.csv` and its metadata `<stem>.meta.json` into `dir`.
pub fn write_ledger(dir: &std::path::Path, stem: &str, ledger: &crate::diagnostics::EnergyLedger) -> Result<(), IoError> {
    let mut csv = Vec::new();
    ledger.write_csv(&mut csv)?;
    std::fs::write(dir.join(format!("{stem}.csv")), csv)?;
    write_json(&dir.join(format!("{stem}.meta.json")), &ledger.meta)
}

pub fn read_ledger(dir: &std::path::Path, stem: &str) -> Result<crate::diagnostics::EnergyLedger, IoError> {
    let meta = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.meta.json")))?)?;
    let file = std::fs::File::open(dir.join(format!("{stem}.csv")))?;
    let rows = crate::diagnostics::EnergyLedger::read_csv(std::io::BufReader::new(file))
        .map_err(|e| IoError::Config(e.to_string()))?;
    Ok(crate::diagnostics::EnergyLedger { meta, rows })
}

/// Ledger stems in `dir`, sorted.
pub fn ledger_stems(dir: &std::path::Path) -> Result<Vec<String>, IoError> {
    let mut stems: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|s| s.strip_suffix(".meta.json")).map(str::to_string))
        .collect();
    stems.sort();
    Ok(stems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, random_state, InitialData, ModelParams, StepSchedule};
    use crate::noise::{IncrementStream, NoiseBasis};
    use crate::spectral::FourierGrid;

    #[test]
    fn ledger_round_trip_and_row_count() {
        let g = FourierGrid::new(16).unwrap();
        let s = random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 1.0, ..Default::default() });
        let schedule = StepSchedule::new(0.01, 0.35).with_ledger_stride(3);
        let t = integrate(&s, &ModelParams::zero(&g), &NoiseBasis::empty(&g), &schedule, &mut IncrementStream::new(0, 0, 0.01)).unwrap();
        assert_eq!(t.ledger.rows.len(), (0.35f64 / 0.03).floor() as usize + 1);
        let dir = tempfile::tempdir().unwrap();
        write_ledger(dir.path(), "ledger", &t.ledger).unwrap();
        assert_eq!(read_ledger(dir.path(), "ledger").unwrap(), t.ledger);
        assert_eq!(ledger_stems(dir.path()).unwrap(), vec!["ledger".to_string()]);
    }
}
