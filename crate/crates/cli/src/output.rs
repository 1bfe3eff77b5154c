use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{echo, RunConfig};
use crate::error::CliError;

/// Git-style object hash: SHA-256 over `blob <len>\0<content>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn json_bytes(v: &Value) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

pub struct RunDir {
    pub path: PathBuf,
    config: Value,
    outputs: Vec<(String, String)>,
    started: Instant,
}

impl RunDir {
    /// Creates `<root>/<command>-<hash>` and writes a provisional manifest.
    pub fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        let id = cfg.identity();
        let digest = content_hash(&json_bytes(&id)?);
        let path = cfg.out.join(format!("{}-{}", cfg.command.name(), &digest[..16]));
        fs::create_dir_all(&path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        let dir = RunDir { path, config: json!(echo(cfg)), outputs: Vec::new(), started: Instant::now() };
        dir.write_manifest("running")?;
        Ok(dir)
    }

    fn write_manifest(&self, status: &str) -> Result<(), CliError> {
        let outputs: serde_json::Map<String, Value> =
            self.outputs.iter().map(|(name, hash)| (name.clone(), json!(hash))).collect();
        let manifest = json!({
            "config": self.config,
            "status": status,
            "outputs": outputs,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
        });
        self.write_raw("manifest.json", &json_bytes(&manifest)?)
    }

    fn write_raw(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.path.join(name);
        fs::write(&target, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", target.display())))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.write_raw(name, bytes)?;
        self.outputs.retain(|(n, _)| n != name);
        self.outputs.push((name.to_string(), content_hash(bytes)));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        self.write(name, &json_bytes(v)?)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn finish(&self, status: &str) -> Result<(), CliError> {
        self.write_manifest(status)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Shortest decimal that round-trips, so CSV cells are stable and exact.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
