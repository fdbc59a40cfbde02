//! Output files with schema validation and cleanup on failure.
//!
//! Every file is re-read with its own parser right after writing; if any
//! step of a command fails, the files written so far are removed so no
//! partial output survives.

use std::path::{Path, PathBuf};

use crate::{CliError, CliResult};

pub struct OutputSet {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputSet {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `bytes` to `name` and validates the result by re-parsing.
    pub fn write_validated<T>(
        &mut self,
        name: &str,
        bytes: &[u8],
        validate: impl Fn(&[u8]) -> Result<T, String>,
    ) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.clone());
        validate(bytes).map_err(|e| {
            CliError::Runtime(format!("output {} failed validation: {e}", path.display()))
        })?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// JSON output validated by a full round trip through the target type.
    pub fn write_json<T: serde::Serialize + serde::de::DeserializeOwned>(
        &mut self,
        name: &str,
        value: &T,
    ) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write_validated(name, text.as_bytes(), |bytes| {
            serde_json::from_slice::<T>(bytes).map(|_| ()).map_err(|e| e.to_string())
        })
    }

    /// JSON output for report types; validated as well-formed JSON.
    pub fn write_json_report<T: serde::Serialize>(
        &mut self,
        name: &str,
        value: &T,
    ) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write_validated(name, text.as_bytes(), |bytes| {
            serde_json::from_slice::<serde_json::Value>(bytes)
                .map(|_| ())
                .map_err(|e| e.to_string())
        })
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                if let Err(e) = std::fs::remove_file(path) {
                    log::warn!("could not remove partial output {}: {e}", path.display());
                }
            }
        }
    }
}
