//! Output directory, atomic file writes and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, Failure, Kind};

pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)
            .map_err(|e| Failure::new(Kind::Output, format!("{}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Write `bytes` to `name` under the root via a temporary file and a
    /// rename, so readers never see a partial file.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.root.join(name), bytes)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    /// Render CSV through `f` into memory, then write it.
    pub fn csv(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> otbot::Result<()>,
    ) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| Failure::new(Kind::Output, format!("{name}: {e}")))?;
        self.write(name, &buf)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| Failure::new(Kind::Output, format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

/// Hash of everything that determines a run's outputs.
#[derive(Default)]
pub struct ConfigHash(Sha256);

impl ConfigHash {
    pub fn add(&mut self, label: &str, text: &str) {
        self.0.update(label.as_bytes());
        self.0.update([0]);
        self.0.update(text.as_bytes());
        self.0.update([0]);
    }

    pub fn hex(self) -> String {
        self.0
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub struct Manifest {
    pub command: &'static str,
    pub scenario: Option<String>,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub integrator: Value,
    pub started: Instant,
}

impl Manifest {
    /// Write `manifest.json` last, listing every file written before it.
    pub fn finish(self, out: &mut OutDir) -> CliResult<()> {
        let doc = json!({
            "tool": "otbot",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "scenario": self.scenario,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "integrator": self.integrator,
            "wall_clock_s": self.started.elapsed().as_secs_f64(),
            "files": out.files(),
        });
        let text = serde_json::to_string_pretty(&doc).expect("manifest serialises") + "\n";
        out.write("manifest.json", text.as_bytes())
    }
}

pub fn integrator_json(rtol: f64, atol: f64, extra: &[(&str, f64)]) -> Value {
    let mut v = json!({ "method": "Dormand-Prince 5(4)", "rtol": rtol, "atol": atol });
    for (k, x) in extra {
        v[*k] = json!(x);
    }
    v
}
