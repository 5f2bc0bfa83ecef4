//! JSON run manifests: what was run, on which inputs, with which settings.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 over `blob <len>\0<bytes>`, the way git hashes blobs.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_time() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct HashedFile {
    pub path: String,
    pub sha256: String,
}

impl HashedFile {
    pub fn read(path: &Path) -> std::io::Result<Self> {
        Ok(HashedFile {
            path: path.display().to_string(),
            sha256: content_hash(&std::fs::read(path)?),
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Throughput {
    pub frames: usize,
    pub pixels: u64,
    pub seconds: f64,
    pub pixels_per_second: f64,
}

impl Throughput {
    /// Total pixels over wall time.
    pub fn new(frames: usize, pixels: u64, seconds: f64) -> Self {
        Throughput {
            frames,
            pixels,
            seconds,
            pixels_per_second: pixels as f64 / seconds,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Every setting that influenced the run.
    pub config: serde_json::Value,
    pub inputs: Vec<HashedFile>,
    /// Hash over the input hashes, in order.
    pub inputs_digest: String,
    pub outputs: Vec<HashedFile>,
    pub throughput: Option<Throughput>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        RunManifest {
            tool: "atrm",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            threads: rayon::current_num_threads(),
            started_unix: unix_time(),
            finished_unix: 0.0,
            config,
            inputs: Vec::new(),
            inputs_digest: String::new(),
            outputs: Vec::new(),
            throughput: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(HashedFile::read(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(HashedFile::read(path)?);
        Ok(())
    }

    pub fn write(&mut self, path: &Path) -> std::io::Result<()> {
        self.finished_unix = unix_time();
        let joined: String = self.inputs.iter().map(|f| f.sha256.as_str()).collect::<Vec<_>>().join("\n");
        self.inputs_digest = content_hash(joined.as_bytes());
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, json + "\n")
    }
}
