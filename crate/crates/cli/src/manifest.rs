//! Run manifests: input and output hashes plus a digest over the manifest
//! itself, so that edits to any recorded file or to the manifest are
//! detected.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub engine_version: String,
    pub subcommand: String,
    pub arguments: Vec<String>,
    pub seed: Option<u64>,
    pub solver: String,
    pub inputs: Vec<FileHash>,
    /// Paths relative to the run directory.
    pub outputs: Vec<FileHash>,
    /// SHA-256 of this manifest serialized with an empty digest.
    pub digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileHash { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

impl Manifest {
    pub fn new(subcommand: &str, arguments: Vec<String>, seed: Option<u64>) -> Self {
        Self {
            tool: "gridvolt".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            engine_version: gridvolt::VERSION.into(),
            subcommand: subcommand.into(),
            arguments,
            seed,
            solver: std::env::var("GRIDVOLT_SOLVER").unwrap_or_else(|_| "internal".into()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            digest: String::new(),
        }
    }

    fn body_digest(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.digest.clear();
        Ok(sha256_hex(serde_json::to_string(&copy)?.as_bytes()))
    }

    /// Seals the manifest and writes it into `dir`.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.digest = self.body_digest()?;
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    /// Loads the manifest of `dir` and checks its digest and every output hash.
    pub fn verify(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text).context("malformed manifest")?;
        if m.body_digest()? != m.digest {
            bail!("integrity error: manifest digest does not match its content");
        }
        for out in &m.outputs {
            let p = dir.join(&out.path);
            let actual = sha256_hex(&std::fs::read(&p).with_context(|| format!("missing artifact {}", p.display()))?);
            if actual != out.sha256 {
                bail!("integrity error: {} differs from the manifest", out.path);
            }
        }
        Ok(m)
    }
}
