//! Run manifest: input hashes, stage record counts and an output inventory.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub records: BTreeMap<String, u64>,
    pub elapsed_s: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub scenario_sha256: Option<String>,
    pub config_sha256: String,
    pub duty_cycle: f64,
    pub duty_cycle_note: String,
    pub thresholds: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<(u64, String)> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut n = 0u64;
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        n += k as u64;
    }
    Ok((n, hex::encode(h.finalize())))
}

impl RunManifest {
    pub fn new(config_toml: &str, scenario_toml: Option<&str>, duty_cycle: f64, thresholds: BTreeMap<String, String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: env!("CARGO_PKG_VERSION").into(),
            scenario_sha256: scenario_toml.map(|s| sha256_hex(s.as_bytes())),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            duty_cycle,
            duty_cycle_note: format!(
                "{:.1}% of wall time is integrated; exposure counts integration seconds only",
                duty_cycle * 100.0
            ),
            thresholds,
            stages: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> anyhow::Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Some(
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        ))
    }

    /// Replace any earlier record of the same stage.
    pub fn record_stage(&mut self, stage: StageRecord) {
        self.stages.retain(|s| s.stage != stage.stage);
        self.stages.push(stage);
    }

    /// Re-digest every file under `dir` except the manifest itself.
    pub fn refresh_outputs(&mut self, dir: &Path) -> anyhow::Result<()> {
        let mut files = Vec::new();
        collect(dir, dir, &mut files)?;
        files.sort();
        self.outputs = files
            .into_iter()
            .map(|rel| {
                let (bytes, sha256) = sha256_file(&dir.join(&rel)).with_context(|| format!("hashing {rel}"))?;
                Ok(OutputFile {
                    path: rel,
                    bytes,
                    sha256,
                })
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn digest_of(&self, rel: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.path == rel).map(|o| o.sha256.as_str())
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            let rel = rel.to_string_lossy().replace('\\', "/");
            if rel != MANIFEST_FILE {
                out.push(rel);
            }
        }
    }
    Ok(())
}
