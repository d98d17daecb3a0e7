//! Run manifests: every command records its resolved configuration, a hash
//! of that configuration, and content hashes of every input and output
//! artifact, as line-delimited `key=value`. Reruns with identical inputs
//! produce byte-identical manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone)]
pub struct Manifest {
    command: String,
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Manifest {
        let mut lines = vec![("command".to_string(), command.to_string())];
        let mut canonical = String::new();
        for (k, v) in cfg.canonical_pairs() {
            writeln!(canonical, "{k}={v}").unwrap();
            lines.push((format!("config.{k}"), v));
        }
        lines.push(("config_hash".into(), sha256_hex(canonical.as_bytes())));
        lines.push(("seed".into(), cfg.seed.to_string()));
        Manifest {
            command: command.to_string(),
            lines,
        }
    }

    /// Record an input file's content hash under its role name.
    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.lines.push((format!("input.{name}"), hash));
        Ok(())
    }

    /// Record an output artifact's content hash under its file name.
    pub fn output(&mut self, name: &str, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.lines.push((format!("output.{name}"), hash));
        Ok(())
    }

    /// Write `<out>/<command>.manifest`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.lines {
            writeln!(text, "{k}={v}").unwrap();
        }
        let path = out_dir.join(format!("{}.manifest", self.command));
        fs::write(&path, text)
            .with_context(|| format!("cannot write manifest {}", path.display()))?;
        Ok(())
    }
}
