use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dropsim_core::config::SimConfig;
use dropsim_core::Result;
use serde::Serialize;

/// Output directory of one run.
pub struct RunDir {
    root: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub command: &'static str,
    pub version: &'static str,
    pub grid_hash: String,
    pub grid_nodes: usize,
    pub domain_area: f64,
    pub eps: f64,
    pub eps_bound: f64,
    pub xi0: f64,
    pub rho: f64,
    pub residual: f64,
    pub residual_budget: f64,
    pub fd_error: f64,
    pub resolution_ratio: f64,
    pub warnings: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<RunDir> {
        fs::create_dir_all(root)?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn file(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(BufWriter::new(File::create(path)?))
    }

    /// Writes `name` through `fill` and flushes it.
    pub fn write_with(&self, name: &str, fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut out = self.file(name)?;
        fill(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write_with(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)?;
            Ok(())
        })
    }

    pub fn write_config(&self, config: &SimConfig) -> Result<()> {
        let text = config.to_toml_string()?;
        self.write_with("config.toml", |out| Ok(out.write_all(text.as_bytes())?))
    }

    /// `stream,replica,seed` rows, one per random stream used by the run.
    pub fn write_seeds(&self, base: u64, streams: &[(String, u64, u64)]) -> Result<()> {
        self.write_with("seeds.csv", |out| {
            writeln!(out, "stream,replica,seed")?;
            writeln!(out, "base,0,{base}")?;
            for (name, replica, seed) in streams {
                writeln!(out, "{name},{replica},{seed}")?;
            }
            Ok(())
        })
    }
}
