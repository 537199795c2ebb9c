//! Run-directory bookkeeping: every file a command reads or writes goes
//! through [`RunDir`] so the manifest can list it with its content hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Hash over the sorted `path sha256` lines of all inputs.
    pub inputs_sha256: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub struct RunDir {
    root: PathBuf,
    command: String,
    seed: u64,
    config_hash: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| runtime(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

impl RunDir {
    /// Creates the directory and stores the resolved configuration as
    /// `configs/<command>.toml`.
    pub fn open(root: &Path, command: &str, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| runtime(root, e))?;
        let mut run = RunDir {
            root: root.to_path_buf(),
            command: command.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        run.write(&format!("configs/{command}.toml"), cfg.to_toml().as_bytes())?;
        Ok(run)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.root.join(rel).is_file()
    }

    /// Registers `rel` as an input and returns its absolute path. `hint`
    /// names the command that produces it.
    pub fn input(&mut self, rel: &str, hint: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if !path.is_file() {
            return Err(CliError::Runtime(format!(
                "missing input {}; run `ftdyn {hint}` with the same --out first",
                path.display()
            )));
        }
        let h = sha256_file(&path)?;
        self.inputs.insert(rel.to_string(), h);
        Ok(path)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.prepare(rel)?;
        fs::write(&path, bytes).map_err(|e| runtime(&path, e))?;
        self.outputs.insert(rel.to_string(), hex(&Sha256::digest(bytes)));
        Ok(())
    }

    /// Writes through a library saver, then hashes what it produced.
    pub fn write_with(&mut self, rel: &str, save: impl FnOnce(&Path) -> ftdyn::Result<()>) -> Result<(), CliError> {
        let path = self.prepare(rel)?;
        save(&path)?;
        let h = sha256_file(&path)?;
        self.outputs.insert(rel.to_string(), h);
        Ok(())
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let text = csv_text(header, rows);
        self.write(rel, text.as_bytes())
    }

    fn prepare(&self, rel: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
        }
        Ok(path)
    }

    pub fn manifest(&self) -> RunManifest {
        let list = |m: &BTreeMap<String, String>| -> Vec<FileHash> {
            m.iter()
                .map(|(p, h)| FileHash {
                    path: p.clone(),
                    sha256: h.clone(),
                })
                .collect()
        };
        let mut digest = Sha256::new();
        for (p, h) in &self.inputs {
            digest.update(format!("{p} {h}\n").as_bytes());
        }
        RunManifest {
            command: self.command.clone(),
            seed: self.seed,
            config_sha256: self.config_hash.clone(),
            inputs_sha256: hex(&digest.finalize()),
            inputs: list(&self.inputs),
            outputs: list(&self.outputs),
        }
    }

    /// Writes `manifests/<command>.json`.
    pub fn finish(self) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        let path = self.prepare(&format!("manifests/{}.json", self.command))?;
        fs::write(&path, json + "\n").map_err(|e| runtime(&path, e))
    }
}

pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Shortest decimal that round-trips; always a period separator.
pub fn num(x: f64) -> String {
    format!("{x}")
}
