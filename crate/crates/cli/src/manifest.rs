//! Run manifests: everything needed to reproduce an output file.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Resolved settings, defaults included, in a fixed order.
    pub config: Vec<(String, String)>,
    /// `(path, sha256)` of every input file.
    pub inputs: Vec<(String, String)>,
    pub seed: u64,
    pub version: &'static str,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            config: Vec::new(),
            inputs: Vec::new(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.into(), value.to_string()));
    }

    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        self.inputs.push((path.display().to_string(), format!("{digest:x}")));
    }

    /// `manifest.*` lines; no timestamps, so equal runs render equal manifests.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "manifest.command = {}", self.command);
        let _ = writeln!(s, "manifest.version = {}", self.version);
        let _ = writeln!(s, "manifest.seed = {}", self.seed);
        for (path, digest) in &self.inputs {
            let _ = writeln!(s, "manifest.input = {path} sha256:{digest}");
        }
        for (k, v) in &self.config {
            let _ = writeln!(s, "manifest.config.{k} = {v}");
        }
        s
    }
}
