use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes CSV files that start with a `# manifest:` line and records every
/// path for the manifest.
pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path, hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), hash: hash.to_string(), written: Vec::new() })
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = format!("# manifest: {}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        let path = self.dir.join(name);
        std::fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_manifest(&self, subcommand: &str, runtime: Duration) -> Result<()> {
        #[derive(Serialize)]
        struct RunManifest<'a> {
            config_hash: &'a str,
            tool_version: &'a str,
            subcommand: &'a str,
            outputs: &'a [String],
            runtime_s: f64,
        }
        let manifest = RunManifest {
            config_hash: &self.hash,
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            outputs: &self.written,
            runtime_s: runtime.as_secs_f64(),
        };
        let path = self.dir.join("manifest.toml");
        std::fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -1e-300, 0.0, f64::INFINITY, 0.363_917_650_1] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_starts_with_manifest_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "abc").unwrap();
        out.write_csv("t.csv", &["x", "y"], &[vec!["1".into(), "2".into()]]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "# manifest: abc\nx,y\n1,2\n");
    }
}
