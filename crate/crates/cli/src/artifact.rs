//! Self-contained run directories and their manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Command, RunConfig};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";
/// The only file allowed to differ between two runs of the same config.
pub const TIMESTAMPS: &str = "timestamps.json";
pub const REPORT_DIR: &str = "report";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub tool_version: String,
    pub command: Command,
    pub seed: u64,
    pub config_sha256: String,
    /// File name to SHA-256 of its bytes, for every file except the timestamps.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Names of files whose content no longer matches the recorded hash.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|(name, hash)| {
                fs::read(dir.join(name))
                    .map(|b| sha256_hex(&b) != **hash)
                    .unwrap_or(true)
            })
            .map(|(name, _)| name.clone())
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct Timestamps {
    started_unix_ms: u128,
    finished_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Writes files under one directory and records their hashes.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    started: u128,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
            started: now_ms(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        if name.contains("..") || Path::new(name).is_absolute() {
            bail!("artifact file name '{name}' leaves the artifact directory");
        }
        let bytes = bytes.as_ref();
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// One JSON document per line.
    pub fn write_jsonl<T: Serialize>(
        &mut self,
        name: &str,
        items: impl IntoIterator<Item = T>,
    ) -> Result<()> {
        let mut out = String::new();
        for item in items {
            out.push_str(&serde_json::to_string(&item)?);
            out.push('\n');
        }
        self.write(name, out)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(mut self, config: &RunConfig, command: Command) -> Result<Manifest> {
        let config_text = config.to_toml();
        self.write(CONFIG, &config_text)?;
        let manifest = Manifest {
            format: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            seed: config.seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            files: self.files.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        let stamps = Timestamps {
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
        };
        fs::write(
            self.dir.join(TIMESTAMPS),
            serde_json::to_string_pretty(&stamps)? + "\n",
        )?;
        Ok(manifest)
    }
}

/// Reads a JSON-lines file, naming it in every error.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("missing or unreadable {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1))
        })
        .collect()
}
