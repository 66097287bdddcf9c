//! Experiment manifests and reproducible output files. Every artifact
//! embeds the manifest hash and the seed, so re-running one manifest
//! reproduces byte-identical files.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const MANIFEST_SCHEMA: &str = "mfgt-manifest/1";

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub kind: String,
    pub spec_path: Option<String>,
    /// SHA-256 of the specification document content, when a file is used.
    pub spec_sha256: Option<String>,
    pub case: Option<String>,
    pub n_list: Vec<usize>,
    pub paths: usize,
    pub seed: u64,
    pub grid: usize,
    pub check: bool,
}

impl Manifest {
    pub fn new(kind: &str) -> Self {
        Self {
            schema: MANIFEST_SCHEMA,
            kind: kind.to_string(),
            spec_path: None,
            spec_sha256: None,
            case: None,
            n_list: Vec::new(),
            paths: 0,
            seed: 0,
            grid: 0,
            check: false,
        }
    }

    /// Short content hash of the canonical manifest encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("manifest serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..12].to_string()
    }

    /// Structural sanity of the numeric parameters.
    pub fn validate(&self) -> Result<(), String> {
        if self.kind != "validate" && self.grid == 0 {
            return Err("grid size must be positive".into());
        }
        if self.n_list.iter().any(|&n| n < 2) {
            return Err("every population size must be at least 2".into());
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes experiment artifacts under one directory, stamping each file
/// with the manifest hash and seed.
pub struct OutputWriter {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl OutputWriter {
    pub fn new(dir: &Path, manifest: &Manifest) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let writer = Self { dir: dir.to_path_buf(), hash: manifest.hash(), seed: manifest.seed };
        let manifest_json = serde_json::to_string_pretty(&serde_json::json!({
            "manifest": manifest,
            "manifest_hash": writer.hash,
        }))
        .expect("manifest serializes");
        fs::write(dir.join("manifest.json"), manifest_json + "\n")?;
        Ok(writer)
    }

    pub fn write_csv(&self, name: &str, body: &str) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        let stamped = format!("# manifest_hash={} seed={}\n{}", self.hash, self.seed, body);
        fs::write(&path, stamped)?;
        Ok(path)
    }

    pub fn write_json(&self, name: &str, value: serde_json::Value) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut wrapped = serde_json::Map::new();
        wrapped.insert("manifest_hash".into(), self.hash.clone().into());
        wrapped.insert("seed".into(), self.seed.into());
        match value {
            serde_json::Value::Object(map) => wrapped.extend(map),
            other => {
                wrapped.insert("data".into(), other);
            }
        }
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(wrapped))
            .expect("report serializes");
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, body: &str) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        Ok(path)
    }
}

/// One declared-tolerance check evaluated by a command.
#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckItem {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

pub fn summarize_checks(title: &str, writer: &OutputWriter, checks: &[CheckItem]) -> String {
    let mut out = format!("{title}\nmanifest_hash: {}\nseed: {}\n\n", writer.hash, writer.seed);
    for c in checks {
        out.push_str(&format!(
            "[{}] {}: {}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    out
}
