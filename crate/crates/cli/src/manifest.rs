use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ridgecast::evaluation::write_atomic;
use ridgecast::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Serialize)]
struct Seeds {
    master: Option<u64>,
    init: u64,
    batch: u64,
}

#[derive(Debug, Serialize)]
struct ManifestFile<'a> {
    tool: &'static str,
    version: &'static str,
    status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    config: &'a RunConfig,
    seeds: Seeds,
    inputs: &'a BTreeMap<String, String>,
    artifacts: &'a BTreeMap<String, String>,
    started_unix_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<u128>,
    details: &'a serde_json::Map<String, serde_json::Value>,
}

/// Record of one command run, rewritten atomically as the run progresses.
pub struct Manifest {
    path: PathBuf,
    config: RunConfig,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
    details: serde_json::Map<String, serde_json::Value>,
    started_unix_ms: u128,
    clock: Instant,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    /// Creates the output directory and writes the initial manifest.
    pub fn begin(config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
        let m = Self {
            path: config.out.join(MANIFEST_FILE),
            config: config.clone(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            details: serde_json::Map::new(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            clock: Instant::now(),
        };
        m.write(RunStatus::Running, None)?;
        Ok(m)
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out
    }

    /// Hashes an input file and records it.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Writes an artifact atomically under the output directory and records its hash.
    pub fn artifact(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.config.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_atomic(&path, bytes)?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.details.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Rewrites the manifest mid-run so partial progress is visible.
    pub fn checkpoint(&self) -> Result<()> {
        self.write(RunStatus::Running, None)
    }

    pub fn finish(self, error: Option<&str>) -> Result<()> {
        match error {
            None => self.write(RunStatus::Ok, None),
            Some(e) => self.write(RunStatus::Failed, Some(e)),
        }
    }

    fn write(&self, status: RunStatus, error: Option<&str>) -> Result<()> {
        let file = ManifestFile {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            status,
            error,
            config: &self.config,
            seeds: Seeds {
                master: self.config.seed,
                init: self.config.train.seed_init,
                batch: self.config.train.seed_batch,
            },
            inputs: &self.inputs,
            artifacts: &self.artifacts,
            started_unix_ms: self.started_unix_ms,
            wall_ms: (status != RunStatus::Running).then(|| self.clock.elapsed().as_millis()),
            details: &self.details,
        };
        let text = serde_json::to_string_pretty(&file)? + "\n";
        write_atomic(&self.path, text.as_bytes())
    }
}
