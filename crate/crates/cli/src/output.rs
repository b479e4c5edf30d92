//! Artifact directory with a manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

pub struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
    started: Instant,
}

impl Output {
    pub fn create(dir: &Path) -> anyhow::Result<Output> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), artifacts: Vec::new(), started: Instant::now() })
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> anyhow::Result<()> {
        std::fs::write(self.dir.join(name), body)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json`: the command line, resolved inputs, seed,
    /// versions, wall time and artifact list.
    pub fn finish(self, command: &str, inputs: Value, seed: u64) -> anyhow::Result<()> {
        let manifest = json!({
            "command": command,
            "inputs": inputs,
            "seed": seed,
            "versions": { "pocrm": env!("CARGO_PKG_VERSION") },
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "artifacts": self.artifacts,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

pub fn f(x: f64) -> String {
    format!("{x:.6}")
}
