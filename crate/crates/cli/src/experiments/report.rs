//! Cross-run reports: final-row summaries of completed run directories, and
//! per-ring accuracy differences of unpadded variants against a padded
//! baseline.

use std::fmt::Write as _;
use std::path::Path;

use padlab_core::{Error, Result};

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::{ReportKind, RunConfig};

/// Metric files a summary knows how to read, in report order.
const KNOWN: [&str; 8] = [
    "probe_metrics.csv",
    "pad_compare.csv",
    "stage_sweep.csv",
    "grid_metrics.csv",
    "ring_region.csv",
    "ring_diff.csv",
    "dimest.csv",
    "reach.csv",
];

pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<String> {
    if cfg.report.runs.is_empty() {
        return Err(Error::argument(
            "report needs at least one run directory in [report] runs".to_string(),
        ));
    }
    let text = match cfg.report.kind {
        ReportKind::Summary => summary(&cfg.report.runs)?,
        ReportKind::RingDiff => {
            let baseline = cfg.report.baseline.as_deref().ok_or_else(|| {
                Error::argument(
                    "ring-diff compares against [report] baseline, which is unset".to_string(),
                )
            })?;
            ring_diff(&cfg.report.runs, baseline)?
        }
    };
    std::fs::write(dir.file("report.txt"), &text)?;
    Ok(text)
}

fn summary(runs: &[std::path::PathBuf]) -> Result<String> {
    let mut out = String::new();
    for run in runs {
        if !run.is_dir() {
            return Err(Error::argument(format!(
                "{} is not a run directory",
                run.display()
            )));
        }
        let mut found = 0usize;
        writeln!(out, "run {}", run.display()).unwrap();
        for name in KNOWN {
            let path = run.join(name);
            if !path.is_file() {
                continue;
            }
            let (header, rows) = read_csv(&path)?;
            if let Some(last) = rows.last() {
                writeln!(out, "  {name}").unwrap();
                writeln!(out, "    {header}").unwrap();
                writeln!(out, "    {last}").unwrap();
                found += 1;
            }
        }
        if found == 0 {
            return Err(Error::argument(format!(
                "{} holds no recognized metric tables; is the run complete?",
                run.display()
            )));
        }
    }
    Ok(out)
}

/// Ring table of each variant minus the padded baseline, the border-distance
/// accuracy gap.
fn ring_diff(runs: &[std::path::PathBuf], baseline: &Path) -> Result<String> {
    let base = read_rings(baseline)?;
    let mut out = String::new();
    writeln!(out, "baseline {}", baseline.display()).unwrap();
    writeln!(out, "variant,d,count,variant_mean,baseline_mean,diff").unwrap();
    for run in runs {
        let rings = read_rings(run)?;
        if rings.len() != base.len() {
            return Err(Error::dimension(format!(
                "{} has {} rings but the baseline has {}",
                run.display(),
                rings.len(),
                base.len()
            )));
        }
        let name = run
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| run.display().to_string());
        for (i, (d, count, mean)) in rings.iter().enumerate() {
            writeln!(
                out,
                "{name},{d},{count},{},{},{}",
                fmt_metric(*mean),
                fmt_metric(base[i].2),
                fmt_metric(mean - base[i].2)
            )
            .unwrap();
        }
    }
    Ok(out)
}

fn read_rings(dir: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let path = dir.join("rings.csv");
    if !path.is_file() {
        return Err(Error::argument(format!(
            "{} has no rings.csv; point ring-diff at completed grid runs",
            dir.display()
        )));
    }
    let (header, rows) = read_csv(&path)?;
    if header != "d,count,mean" {
        return Err(Error::parse(format!(
            "{}: expected header d,count,mean, got {header}",
            path.display()
        )));
    }
    rows.iter()
        .map(|row| {
            let mut it = row.split(',');
            let mut next = |what: &str| {
                it.next().ok_or_else(|| {
                    Error::parse(format!("{}: row {row:?} lacks {what}", path.display()))
                })
            };
            let d = next("d")?.parse().map_err(|_| bad_row(&path, row))?;
            let count = next("count")?.parse().map_err(|_| bad_row(&path, row))?;
            let mean = next("mean")?.parse().map_err(|_| bad_row(&path, row))?;
            Ok((d, count, mean))
        })
        .collect()
}

fn bad_row(path: &Path, row: &str) -> Error {
    Error::parse(format!("{}: malformed row {row:?}", path.display()))
}

fn read_csv(path: &Path) -> Result<(String, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(format!("{} is empty", path.display())))?
        .to_string();
    Ok((header, lines.map(str::to_string).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;
    use std::fs;
    use std::path::PathBuf;

    fn fake_grid_run(tag: &str, means: [f64; 2]) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("padlab-report-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        fs::write(
            dir.join("rings.csv"),
            format!("d,count,mean\n0,8,{}\n1,1,{}\n", means[0], means[1]),
        )
        .unwrap();
        fs::write(dir.join("grid_metrics.csv"), "epoch,loss,acc\n0,1.0,0.5\n").unwrap();
        dir
    }

    #[test]
    fn summary_reads_final_rows_and_flags_empty_dirs() {
        let run = fake_grid_run("sum", [0.5, 0.75]);
        let mut cfg = RunConfig::default_for(Experiment::Report);
        cfg.report.runs = vec![run.clone()];
        let out_dir =
            RunDir::create(&std::env::temp_dir().join("padlab-report-out-sum")).unwrap();
        let text = super::run(&cfg, &out_dir).unwrap();
        assert!(text.contains("grid_metrics.csv"), "{text}");
        assert!(text.contains("0,1.0,0.5"), "{text}");

        let empty = std::env::temp_dir().join("padlab-report-empty");
        fs::create_dir_all(&empty).unwrap();
        cfg.report.runs = vec![empty.clone()];
        let err = super::run(&cfg, &out_dir).unwrap_err();
        assert!(err.to_string().contains("no recognized metric"), "{err}");
        let _ = fs::remove_dir_all(run);
        let _ = fs::remove_dir_all(empty);
        let _ = fs::remove_dir_all(out_dir.path());
    }

    #[test]
    fn ring_diff_subtracts_the_baseline() {
        let variant = fake_grid_run("var", [0.40, 0.80]);
        let baseline = fake_grid_run("base", [0.90, 0.85]);
        let mut cfg = RunConfig::default_for(Experiment::Report);
        cfg.report.kind = ReportKind::RingDiff;
        cfg.report.runs = vec![variant.clone()];
        cfg.report.baseline = Some(baseline.clone());
        let out_dir =
            RunDir::create(&std::env::temp_dir().join("padlab-report-out-diff")).unwrap();
        let text = super::run(&cfg, &out_dir).unwrap();
        assert!(text.contains("-0.500000"), "border ring diff 0.40-0.90: {text}");
        assert!(text.contains("-0.050000"), "center ring diff 0.80-0.85: {text}");

        cfg.report.baseline = None;
        let err = super::run(&cfg, &out_dir).unwrap_err();
        assert!(err.to_string().contains("baseline"), "{err}");
        let _ = fs::remove_dir_all(variant);
        let _ = fs::remove_dir_all(baseline);
        let _ = fs::remove_dir_all(out_dir.path());
    }
}
