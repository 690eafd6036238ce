use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Writes to the named file, or standard output for `None` / `-`.
pub fn write_data(path: Option<&str>, data: &str) -> Result<(), CliError> {
    match path {
        None | Some("-") => {
            let mut out = std::io::stdout().lock();
            out.write_all(data.as_bytes()).map_err(|e| CliError::io(format!("stdout: {e}")))
        }
        Some(p) => std::fs::write(p, data).map_err(|e| CliError::io(format!("cannot write {p}: {e}"))),
    }
}

/// `fig3b.csv` → `fig3b.manifest.json`; without a file output the manifest
/// is named after the scenario in the working directory.
pub fn manifest_path(explicit: Option<&str>, output: Option<&str>, scenario: &str) -> PathBuf {
    if let Some(m) = explicit {
        return PathBuf::from(m);
    }
    match output {
        Some(o) if o != "-" => Path::new(o).with_extension("manifest.json"),
        _ => PathBuf::from(format!("{scenario}.manifest.json")),
    }
}

pub fn digest(v: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(v).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
pub struct Versions {
    pub qms: &'static str,
    pub qms_core: &'static str,
}

pub const VERSIONS: Versions = Versions { qms: env!("CARGO_PKG_VERSION"), qms_core: qms_core::VERSION };

#[derive(Serialize)]
pub struct Manifest {
    pub scenario: &'static str,
    pub status: &'static str,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_digest: String,
    pub config: Value,
    pub seed: u64,
    pub threads: usize,
    pub versions: Versions,
    pub started_unix_s: f64,
    pub wall_time_s: f64,
    pub output: String,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Value>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(format!("cannot write manifest {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_names() {
        assert_eq!(manifest_path(None, Some("out/fig3b.csv"), "x"), PathBuf::from("out/fig3b.manifest.json"));
        assert_eq!(manifest_path(None, Some("-"), "scatter"), PathBuf::from("scatter.manifest.json"));
        assert_eq!(manifest_path(Some("m.json"), Some("a.csv"), "x"), PathBuf::from("m.json"));
        assert_eq!(manifest_path(None, Some("data"), "x"), PathBuf::from("data.manifest.json"));
    }
}
