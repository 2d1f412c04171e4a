//! Reading inputs and writing artifacts.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use insightlens_core::eventlog::{IngestConfig, Ingestor, SessionLog};
use insightlens_core::model::{read_notes, Note};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A flag that has no default.
pub fn required<'a, T>(value: Option<&'a T>, flag: &str) -> Result<&'a T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required flag {flag}")))
}

/// An input file that must exist.
pub fn input<'a>(value: Option<&'a PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    let path = required(value, flag)?;
    if !path.is_file() {
        return Err(CliError::Usage(format!("{flag}: no such file {}", path.display())));
    }
    Ok(path)
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::data(path.display(), e))
}

/// Write `bytes` to a temporary file beside `path`, flush it to disk and
/// rename it into place, so readers never see a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::data(format!("writing {}", path.display()), e);
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::Builder::new().prefix(".insightlens-").tempfile_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644)).map_err(fail)?;
    }
    tmp.persist(path).map_err(|e| fail(e.error))?;
    // Make the rename itself durable. Directories cannot be opened for sync
    // on every platform, so failure here is not an error.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

/// Artifacts without a version of their own are wrapped in this envelope.
#[derive(Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::data(path.display(), e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_versioned<T: Serialize>(path: &Path, body: T) -> Result<(), CliError> {
    write_json(path, &Versioned { schema_version: insightlens_core::SCHEMA_VERSION, body })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::data(path.display(), e))
}

pub fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let v: Versioned<T> = read_json(path)?;
    if v.schema_version != insightlens_core::SCHEMA_VERSION {
        return Err(CliError::data(
            path.display(),
            format!("schema_version {} is not supported", v.schema_version),
        ));
    }
    Ok(v.body)
}

/// Read an event log as written by `ingest`. No hover filter is applied
/// here; that decision belongs to the ingest step.
pub fn read_logs(path: &Path) -> Result<Vec<SessionLog>, CliError> {
    let mut ingestor = Ingestor::new(IngestConfig { hover_min_ms: 0 });
    ingestor.read(open(path)?).map_err(|e| CliError::data(path.display(), e))?;
    Ok(ingestor.finish().logs)
}

pub fn read_note_file(path: &Path) -> Result<Vec<Note>, CliError> {
    read_notes(open(path)?).map_err(|e| CliError::data(path.display(), e))
}
