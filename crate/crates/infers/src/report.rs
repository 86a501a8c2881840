//! Run metadata: what was executed, with which configuration and seed,
//! how long each stage took, and which output files were produced.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Machine-readable record of one tool invocation, written alongside the
/// data outputs. On success every file in `outputs` exists and is
/// non-empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub command: String,
    /// Echo of the effective configuration (flags or config file).
    pub config_echo: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<usize>,
    /// (stage name, elapsed milliseconds), in execution order.
    pub timings_ms: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    /// Paths of every file this run wrote, including the report itself.
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(command: &str, config_echo: serde_json::Value) -> Self {
        RunReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_echo,
            seed: None,
            rng: None,
            chunk_size: None,
            timings_ms: Vec::new(),
            warnings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Times a stage and records it.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .push((name.to_string(), start.elapsed().as_secs_f64() * 1e3));
        out
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Serializes the report itself (listed in its own manifest) next to
    /// the primary output.
    pub fn write(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(path.to_path_buf());
        let body = serde_json::to_vec_pretty(self).expect("report serializes");
        write_atomic(path, &body)
    }
}

/// Writes via a temporary file in the destination directory followed by a
/// rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    std::fs::write(tmp.path(), bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
