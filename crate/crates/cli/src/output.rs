use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Single writer for every artifact of a run; remembers what it wrote.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.written.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(CliError::internal)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Config echo, seed, versions and artifact list. Timing goes to a
    /// separate file so reruns reproduce this one byte for byte.
    pub fn manifest(&mut self, cfg: &ExperimentConfig, status: &str) -> Result<(), CliError> {
        let mut artifacts = self.written.clone();
        artifacts.sort();
        artifacts.dedup();
        let body = json!({
            "command": cfg.command,
            "status": status,
            "seed": cfg.seed,
            "versions": {
                "dysonlab": dysonlab::VERSION,
                "dysonlab-cli": env!("CARGO_PKG_VERSION"),
            },
            "config": cfg,
            "artifacts": artifacts,
        });
        self.json("manifest.json", &body)
    }
}
