use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use airgrad_core::{CoreError, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Common;

/// Record of one subcommand run: inputs by content hash, every output
/// file, and stage timings. Written last so its presence marks a complete
/// run. Because it carries wall-clock timings it is the only artifact
/// exempt from the byte-identical-rerun guarantee.
#[derive(Serialize)]
pub struct Manifest {
    subcommand: String,
    config: Option<String>,
    seed: Option<u64>,
    workers: Option<usize>,
    /// Input path → SHA-256 of its bytes.
    inputs: BTreeMap<String, String>,
    /// Files written into the run directory, in write order.
    outputs: Vec<String>,
    timings_ms: Vec<Stage>,
    #[serde(skip)]
    start: Instant,
}

#[derive(Serialize)]
struct Stage {
    stage: String,
    ms: u128,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl Manifest {
    pub fn new(subcommand: &str, common: &Common) -> Manifest {
        Manifest {
            subcommand: subcommand.to_string(),
            config: common.config.as_ref().map(|p| p.display().to_string()),
            seed: common.seed,
            workers: common.workers,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timings_ms: Vec::new(),
            start: Instant::now(),
        }
    }

    /// Hashes one input file. The config file, if any, should be recorded
    /// with this as well.
    pub fn input_file(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_hex(path)?);
        Ok(())
    }

    /// Hashes every regular file directly inside an input directory.
    pub fn input_dir(&mut self, dir: &Path) -> Result<()> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| CoreError::io(dir, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| CoreError::io(dir, e))?
            .into_iter()
            .map(|entry| entry.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            self.input_file(&file)?;
        }
        Ok(())
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Records the time elapsed since `started` under a stage label.
    pub fn timing(&mut self, stage: &str, started: Instant) {
        self.timings_ms.push(Stage {
            stage: stage.to_string(),
            ms: started.elapsed().as_millis(),
        });
    }

    /// Appends the total wall time and writes `manifest.json` into the run
    /// directory. Consumes the manifest: nothing may be recorded after.
    pub fn write(mut self, out_dir: &Path) -> Result<()> {
        self.timings_ms.push(Stage {
            stage: "total".to_string(),
            ms: self.start.elapsed().as_millis(),
        });
        self.outputs.push(MANIFEST_FILE.to_string());
        let text = serde_json::to_string_pretty(&self)
            .map_err(|e| CoreError::Invalid(format!("cannot serialize manifest: {e}")))?;
        let path = out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, text + "\n").map_err(|e| CoreError::io(&path, e))
    }
}
