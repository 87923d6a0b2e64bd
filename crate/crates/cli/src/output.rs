//! Result files. Every JSON file wraps its payload as `{"meta", "result"}`;
//! every CSV starts with a `#` comment line carrying the tool version and the
//! config hash. Nothing time- or thread-dependent is written, so reruns with
//! the same config and seed produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{ExperimentConfig, OutputSpec};

pub const TOOL: &str = "hsicsa";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub study: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Meta,
    result: &'a T,
}

pub struct Writer {
    dir: PathBuf,
    prefix: String,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(cfg: &ExperimentConfig, study: &str) -> Result<Self> {
        let dir = cfg.output.dir.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut config = cfg.clone();
        config.output = OutputSpec::default();
        let meta = Meta {
            schema_version: crate::config::SCHEMA_VERSION,
            tool: TOOL,
            version: VERSION,
            study: study.to_string(),
            config_sha256: cfg.hash(),
            config,
        };
        Ok(Self { dir, prefix: format!("{}_{study}", cfg.prefix()), meta, written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&mut self, suffix: &str, ext: &str) -> PathBuf {
        let name = if suffix.is_empty() { format!("{}.{ext}", self.prefix) } else { format!("{}_{suffix}.{ext}", self.prefix) };
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn json<T: Serialize>(&mut self, suffix: &str, result: &T) -> Result<PathBuf> {
        let path = self.path(suffix, "json");
        let mut text = serde_json::to_string_pretty(&Envelope { meta: &self.meta, result })?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn csv(&mut self, suffix: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.path(suffix, "csv");
        let mut buf = format!("# {TOOL} {VERSION} config_sha256={}\n", self.meta.config_sha256).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
