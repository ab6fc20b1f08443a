//! Run manifests: what went in, which configuration, what came out.
//!
//! The run id hashes the tool version, the command, the effective config and
//! the input file digests, so reruns on the same inputs share it. Timestamps
//! are recorded but not hashed.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "tcube";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let mut file = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
        let mut hasher = Sha256::new();
        io::copy(&mut file, &mut hasher)?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: format!("{:x}", hasher.finalize()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub run_id: String,
    pub config: serde_json::Value,
    pub config_digest: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl RunManifest {
    pub fn begin<C: Serialize>(command: &str, config: &C, inputs: &[&Path]) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        // serde_json maps are ordered, so this rendering is canonical.
        let config_digest = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        let inputs = inputs
            .iter()
            .map(|p| FileDigest::of(p))
            .collect::<Result<Vec<_>>>()?;
        let mut hasher = Sha256::new();
        for part in [TOOL, VERSION, command, &config_digest] {
            hasher.update(part.as_bytes());
            hasher.update([0]);
        }
        for input in &inputs {
            hasher.update(input.sha256.as_bytes());
            hasher.update([0]);
        }
        Ok(Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            run_id: format!("{:x}", hasher.finalize()),
            config,
            config_digest,
            inputs,
            outputs: Vec::new(),
            started: Utc::now(),
            finished: None,
        })
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        self.finished = Some(Utc::now());
        let mut w = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Ok(serde_json::from_str(&text)?)
    }
}
