//! Run-directory output: config echo, log, CSV tables, heatmaps, checkpoints.
//!
//! Every file except run.log is a pure function of (config, seed); run.log is
//! the only place timestamps appear.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use padlab_core::checkpoint;
use padlab_core::pgm::write_pgm;
use padlab_core::{Result, Tensor};

use crate::config::RunConfig;

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<RunDir> {
        fs::create_dir_all(path)?;
        Ok(RunDir { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_echo(&self, cfg: &RunConfig) -> Result<()> {
        fs::write(self.file("config_echo.ini"), cfg.echo())?;
        Ok(())
    }

    /// Appends one timestamped line. Timestamps live here and nowhere else.
    pub fn log(&self, msg: &str) -> Result<()> {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.file("run.log"))?;
        writeln!(f, "[{secs}] {msg}")?;
        Ok(())
    }

    /// Header plus rows, one line each, trailing newline.
    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut out = String::with_capacity(rows.len() * 32 + header.len() + 2);
        out.push_str(header);
        out.push('\n');
        for row in rows {
            out.push_str(row);
            out.push('\n');
        }
        fs::write(self.file(name), out)?;
        Ok(())
    }

    pub fn write_heatmap(&self, name: &str, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
        write_pgm(&self.file(name), rows, cols, data)
    }

    pub fn save_checkpoint(&self, name: &str, entries: &[(String, Tensor)]) -> Result<()> {
        checkpoint::save(&self.file(name), entries)
    }
}

/// Canonical metric formatting for CSV cells.
pub fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    fn temp_dir(tag: &str) -> PathBuf {
        let p = std::env::temp_dir().join(format!("padlab-artifacts-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&p);
        p
    }

    #[test]
    fn run_dir_writes_echo_csv_and_log() {
        let dir = temp_dir("basic");
        let rd = RunDir::create(&dir).unwrap();
        let cfg = RunConfig::default_for(Experiment::Probe);
        rd.write_echo(&cfg).unwrap();
        rd.write_csv("m.csv", "a,b", &["1,2".into(), "3,4".into()]).unwrap();
        rd.log("hello").unwrap();
        rd.log("again").unwrap();

        let echoed = fs::read_to_string(rd.file("config_echo.ini")).unwrap();
        assert_eq!(echoed, cfg.echo(), "echo file must be the canonical text");
        let csv = fs::read_to_string(rd.file("m.csv")).unwrap();
        assert_eq!(csv, "a,b\n1,2\n3,4\n");
        let log = fs::read_to_string(rd.file("run.log")).unwrap();
        assert_eq!(log.lines().count(), 2, "log appends one line per call");
        assert!(log.lines().all(|l| l.starts_with('[')), "log lines carry timestamps");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn metric_formatting_is_fixed_width_fraction() {
        assert_eq!(fmt_metric(0.5), "0.500000");
        assert_eq!(fmt_metric(-1.0 / 3.0), "-0.333333");
    }
}
