//! Run directories: `runs/<run_id>/` with a config copy, artifacts and a
//! `run.json` manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    pub parameters: serde_json::Value,
    pub tolerances: serde_json::Value,
    pub outputs: Vec<OutputFile>,
}

pub struct RunDir {
    pub path: PathBuf,
    pub run_id: String,
    outputs: Vec<OutputFile>,
}

impl RunDir {
    /// Creates a fresh directory named after the current UTC time and the
    /// config hash; a numeric suffix disambiguates runs started within the
    /// same millisecond.
    pub fn create(root: &Path, config_hash: &str) -> io::Result<RunDir> {
        fs::create_dir_all(root)?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
        let base = format!("{stamp}-{}", &config_hash[..8]);
        for n in 0.. {
            let run_id = if n == 0 { base.clone() } else { format!("{base}-{n}") };
            let path = root.join(&run_id);
            match fs::create_dir(&path) {
                Ok(()) => {
                    return Ok(RunDir {
                        path,
                        run_id,
                        outputs: Vec::new(),
                    })
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e),
            }
        }
        unreachable!()
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let path = self.path.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.outputs.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(
        self,
        command: &str,
        config_hash: &str,
        parameters: serde_json::Value,
        tolerances: serde_json::Value,
    ) -> io::Result<PathBuf> {
        let record = RunRecord {
            run_id: self.run_id.clone(),
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            parameters,
            tolerances,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&record).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.path.join("run.json"), text)?;
        Ok(self.path)
    }
}
