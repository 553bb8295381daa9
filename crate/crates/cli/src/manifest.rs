//! Append-only JSON-lines record of every command run.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use sawr::nn::checkpoint::file_hash;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// A file written by a run, with the SHA-256 of its final contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// One training epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_las: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Seconds since the Unix epoch at start.
    pub started: u64,
    /// The fully resolved configuration, as TOML.
    pub config: String,
    pub artifacts: Vec<Artifact>,
    pub trace: Vec<EpochRecord>,
    /// Command-specific summary (scores, counts, selected epoch).
    pub results: serde_json::Value,
    pub seconds: f64,
}

/// Collects a manifest while a command runs.
pub struct Recorder {
    pub manifest: RunManifest,
    clock: Instant,
}

impl Recorder {
    pub fn start(command: &str, config: String) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Recorder {
            manifest: RunManifest {
                command: command.to_string(),
                started,
                config,
                artifacts: Vec::new(),
                trace: Vec::new(),
                results: serde_json::Value::Object(Default::default()),
                seconds: 0.0,
            },
            clock: Instant::now(),
        }
    }

    /// Registers a finished output file. Registering the same path again
    /// replaces the earlier entry.
    pub fn artifact(&mut self, role: &str, path: &Path) -> CliResult<()> {
        let sha256 = file_hash(path)?;
        self.manifest.artifacts.retain(|a| a.path != path);
        self.manifest.artifacts.push(Artifact { role: role.to_string(), path: path.to_path_buf(), sha256 });
        Ok(())
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("serializable result");
        self.manifest.results.as_object_mut().expect("object").insert(key.to_string(), v);
    }

    /// Stamps the elapsed time and appends the entry to `dir/manifest.jsonl`.
    pub fn finish(mut self, dir: &Path) -> CliResult<RunManifest> {
        self.manifest.seconds = self.clock.elapsed().as_secs_f64();
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(MANIFEST_FILE);
        let mut line = serde_json::to_string(&self.manifest).expect("serializable manifest");
        line.push('\n');
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| CliError::Runtime(format!("cannot append to {}: {e}", path.display())))?;
        Ok(self.manifest)
    }
}

/// Every entry of a manifest file, oldest first.
pub fn read_manifest(path: &Path) -> CliResult<Vec<RunManifest>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_append() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        std::fs::write(&f, "x").unwrap();
        for k in 0..2 {
            let mut r = Recorder::start("evaluate", "seed = 1\n".into());
            r.artifact("out", &f).unwrap();
            r.artifact("out", &f).unwrap();
            r.result("k", k);
            r.finish(dir.path()).unwrap();
        }
        let all = read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[1].results["k"], 1);
        assert_eq!(all[0].artifacts.len(), 1);
        assert_eq!(
            all[0].artifacts[0].sha256,
            "2d711642b726b04401627ca9fbac32f5c8530fb1903cc4db02258717921a4881"
        );
    }
}
