use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Ten significant digits, fixed layout so repeated runs print identical bytes.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9e}")
    } else {
        v.to_string()
    }
}

/// A CSV table with a header row.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|&v| num(v)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the mechanism config bytes.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files and writes the manifest next to them.
pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<String>,
    started: Instant,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).with_context(|| format!("creating output directory {}", d.display()))?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), written: Vec::new(), started: Instant::now() })
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    /// Writes `name` under the output directory; a no-op without `--out`.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let Some(d) = &self.dir else {
            return Ok(());
        };
        let path = d.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, config_hash: Option<String>, seed: Option<u64>) -> Result<()> {
        let Some(d) = &self.dir else {
            return Ok(());
        };
        let command = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
        let m = RunManifest {
            command,
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: self.written,
        };
        let path = d.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
