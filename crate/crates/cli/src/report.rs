use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{ExperimentConfig, Kind};

pub const SCHEMA_VERSION: &str = "longtail-report/1";
pub const CSV_SCHEMA: &str = "1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'a str,
    tool: &'a str,
    tool_version: &'a str,
    kind: &'a str,
    generated_unix: u64,
    config: &'a ExperimentConfig,
    result: &'a T,
}

/// Artifacts held in memory until the run has succeeded.
pub struct Artifacts {
    kind: Kind,
    config: ExperimentConfig,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(kind: Kind, config: &ExperimentConfig) -> Self {
        Artifacts { kind, config: config.clone(), files: Vec::new() }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<()> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            tool: "longtail",
            tool_version: TOOL_VERSION,
            kind: self.kind.name(),
            generated_unix: now(),
            config: &self.config,
            result,
        };
        let mut bytes = serde_json::to_vec_pretty(&env)?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    /// CSV body behind three `#` lines: version, resolved config, timestamp.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> longtail_core::Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        writeln!(bytes, "# longtail {TOOL_VERSION} csv-schema {CSV_SCHEMA} kind {}", self.kind.name())?;
        writeln!(bytes, "# config {}", serde_json::to_string(&self.config)?)?;
        writeln!(bytes, "# generated_unix {}", now())?;
        body(&mut bytes)?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    /// Write every artifact by temp file and rename; on failure nothing stays behind.
    pub fn commit(self, out: &Path) -> Result<Vec<PathBuf>> {
        let created = !out.exists();
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let mut done: Vec<PathBuf> = Vec::new();
        let res = (|| -> Result<()> {
            for (name, bytes) in &self.files {
                let target = out.join(name);
                let mut tmp = tempfile::NamedTempFile::new_in(out)?;
                tmp.write_all(bytes)?;
                tmp.as_file().sync_all()?;
                tmp.persist(&target).map_err(|e| e.error)?;
                done.push(target);
            }
            Ok(())
        })();
        if let Err(e) = res {
            for p in &done {
                let _ = std::fs::remove_file(p);
            }
            if created {
                let _ = std::fs::remove_dir(out);
            }
            return Err(e);
        }
        Ok(done)
    }
}
