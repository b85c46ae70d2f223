//! Output directories and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;

/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_ENV: &str = "PRANDTL_OUTPUT_ROOT";

/// Resolve the directory a subcommand writes into.
pub fn resolve_dir(base: &Path, subcommand: &str) -> PathBuf {
    let base = match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if base.is_relative() => PathBuf::from(root).join(base),
        _ => base.to_path_buf(),
    };
    base.join(subcommand)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Ok,
    /// The method left its validity regime (monotonicity, CFL, Picard).
    Gate,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub status: Status,
    pub started_unix_s: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// The configuration, in the config-file syntax.
    pub config_text: String,
    pub config: RunConfig,
    #[serde(default)]
    pub args: Value,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub results: Value,
}

/// One run's output directory; the manifest is written on creation and
/// rewritten when the run finishes.
pub struct RunDir {
    dir: PathBuf,
    manifest: Manifest,
    start: Instant,
}

impl RunDir {
    pub fn create(dir: PathBuf, subcommand: &str, cfg: &RunConfig, args: Value) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            status: Status::Running,
            started_unix_s: started,
            wall_time_s: None,
            message: None,
            config_text: cfg.to_text(),
            config: cfg.clone(),
            args,
            outputs: Vec::new(),
            results: Value::Null,
        };
        let run = RunDir { dir, manifest, start: Instant::now() };
        run.write_manifest()?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Record an output file (relative to the run directory).
    pub fn record(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.path(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let path = self.record(name);
        fs::write(path, serde_json::to_string_pretty(value)?)
    }

    /// Write a CSV from a header and rows of already formatted cells.
    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> std::io::Result<()> {
        let path = self.record(name);
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    }

    pub fn finish(&mut self, status: Status, message: Option<String>, results: Value) -> std::io::Result<()> {
        self.manifest.status = status;
        self.manifest.message = message;
        self.manifest.results = results;
        self.manifest.wall_time_s = Some(self.start.elapsed().as_secs_f64());
        self.write_manifest()
    }

    fn write_manifest(&self) -> std::io::Result<()> {
        // write-then-rename so a crash never leaves a truncated manifest
        let tmp = self.dir.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&self.manifest)?)?;
        fs::rename(tmp, self.dir.join("manifest.json"))
    }
}

/// Full-precision cell for CSV output.
pub fn cell(v: f64) -> String {
    format!("{v:.16e}")
}
