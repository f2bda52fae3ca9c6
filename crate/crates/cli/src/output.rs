//! CSV and manifest writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::{CliError, ExperimentConfig};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Collects the files written by one command.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes through `body` into `name` and records the file.
    pub fn write_with<F>(&mut self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    /// Header plus rows of numbers.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| {
            writeln!(w, "{}", header.join(","))?;
            for row in rows {
                let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            Ok(())
        })
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    /// Writes `<command>.manifest.json` and returns its path.
    pub fn finish(mut self, command: &str, config: &ExperimentConfig, summary: Value) -> Result<PathBuf, CliError> {
        let manifest = serde_json::json!({
            "command": command,
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": config.seed,
            "config": config,
            "outputs": self.written,
            "summary": summary,
        });
        let name = format!("{command}.manifest.json");
        self.write_json(&name, &manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
