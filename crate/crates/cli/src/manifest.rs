//! Run manifests and output bookkeeping.
//!
//! A manifest records everything needed to repeat a run: the argument list,
//! the resolved configuration, the seed, input hashes and the files written.
//! It is written before any output so an interrupted run still leaves a trace.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zae_core::rng::Stream;

use crate::error::{io_error, read_file, write_file, CliError, CliResult};
use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command_line: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// Sub-stream ids derived from `seed`.
    pub streams: BTreeMap<String, u64>,
    pub inputs: Vec<InputHash>,
    pub artifacts: Vec<String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = read_file(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn read_manifest(path: &Path) -> CliResult<RunManifest> {
    Ok(serde_json::from_slice(&read_file(path)?)?)
}

/// One command invocation: its inputs, its outputs and where they go.
pub struct Run {
    name: String,
    out_dir: PathBuf,
    force: bool,
    argv: Vec<String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(name: &str, out_dir: &str, force: bool, argv: &[String]) -> Self {
        Self {
            name: name.to_string(),
            out_dir: PathBuf::from(out_dir),
            force,
            argv: argv.to_vec(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> PathBuf {
        let p = path.as_ref().to_path_buf();
        self.inputs.push(p.clone());
        p
    }

    pub fn output(&mut self, file: &str) -> PathBuf {
        let p = self.out_dir.join(file);
        self.outputs.push(p.clone());
        p
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join(format!("{}.manifest.json", self.name))
    }

    /// Check for clobbering, then write the manifest. Call once all inputs and
    /// outputs are declared and all settings resolved.
    pub fn begin(&self, settings: &Settings, seed: u64) -> CliResult<RunManifest> {
        let config = settings.finish()?;
        let manifest_path = self.manifest_path();
        if !self.force {
            if let Some(p) = self
                .outputs
                .iter()
                .chain(std::iter::once(&manifest_path))
                .find(|p| p.exists())
            {
                return Err(CliError::usage(format!(
                    "{} exists; pass --force to overwrite",
                    p.display()
                )));
            }
        }
        std::fs::create_dir_all(&self.out_dir).map_err(|e| io_error(&self.out_dir, e))?;
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(InputHash {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let streams = [
            ("init", Stream::Init),
            ("shuffle", Stream::Shuffle),
            ("corruption", Stream::Corruption),
            ("cv_split", Stream::CvSplit),
            ("data", Stream::Data),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v as u64))
        .collect();
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command_line: self.argv.clone(),
            config,
            seed,
            streams,
            inputs,
            artifacts: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_file(&manifest_path, text)?;
        Ok(manifest)
    }
}
