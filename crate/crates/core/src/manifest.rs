//! Reproducibility manifests written next to every CLI artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Content hash of one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Wall-clock time of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Provenance of one CLI run: how it was invoked, what it read and wrote,
/// and how long each stage took. Timings live here so that the artifacts
/// themselves stay byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<StageTiming>,
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Path of the manifest that accompanies `artifact`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

impl RunManifest {
    pub fn new(command: Vec<String>, subcommand: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            subcommand: subcommand.to_string(),
            seed: None,
            jobs: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// Reads an input file, recording its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    /// Writes an output artifact, recording its digest.
    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        std::fs::write(path, bytes)?;
        self.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes the manifest next to `artifact`.
    pub fn write_beside(&self, artifact: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| crate::Error::Io(e.into()))?;
        std::fs::write(manifest_path(artifact), json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            manifest_path(Path::new("/tmp/out/net.json")),
            PathBuf::from("/tmp/out/net.json.manifest.json")
        );
    }

    #[test]
    fn records_io_and_timings() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        let mut m = RunManifest::new(vec!["x".into()], "simulate");
        m.write_output(&p, b"abc").unwrap();
        assert_eq!(m.read_input(&p).unwrap(), b"abc");
        assert_eq!(m.inputs[0].sha256, m.outputs[0].sha256);
        let v = m.time("stage", || 3);
        assert_eq!(v, 3);
        m.write_beside(&p).unwrap();
        let back: RunManifest = serde_json::from_slice(&std::fs::read(manifest_path(&p)).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
