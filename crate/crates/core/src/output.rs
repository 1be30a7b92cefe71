//! CSV and manifest emission. Every CSV has a header row with a pinned
//! column order, and floats are written with 17 significant digits so equal
//! runs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::engine::{ExposureProfile, ProfileDiffRow, StepTiming};
use crate::error::{Error, Result};
use crate::studies::{GbmCallRow, SseTable, VarianceStudy};
use crate::variance::VarianceReport;

/// 17 significant digits: enough to round-trip any f64 bit pattern.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

pub const PROFILE_HEADER: &str = "time,ee,pfe,method";
pub const VARIANCE_REPORT_HEADER: &str =
    "time_step,total_mc_var,total_lsmc_var,ratio,theoretical_ratio";
pub const COMPARE_HEADER: &str =
    "time,ee_lsmc,ee_baseline,ee_rel_err,pfe_lsmc,pfe_baseline,pfe_rel_err";
pub const GBM_CALL_HEADER: &str = "step,scenario,spot,y_mc,y_lsmc,bs";
pub const VARIANCE_STUDY_HEADER: &str = "p,scenario,mc_var,lsmc_var";
pub const SSE_HEADER: &str = "degree,p,sse_noisy,sse_actual";

/// `profile.csv`: one row per (profile, step).
pub fn write_profile_csv(path: &Path, profiles: &[&ExposureProfile]) -> Result<()> {
    let mut out = String::from(PROFILE_HEADER);
    out.push('\n');
    for profile in profiles {
        for i in 0..profile.times.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_float(profile.times[i]),
                fmt_float(profile.ee[i]),
                fmt_float(profile.pfe[i]),
                profile.method.label()
            ));
        }
    }
    write_file(path, &out)
}

/// `variance_report.csv`: per-step trace diagnostics; cells are empty where
/// the estimator is undefined (single inner path).
pub fn write_variance_report_csv(
    path: &Path,
    steps: &[usize],
    reports: &[Option<VarianceReport>],
) -> Result<()> {
    let mut out = String::from(VARIANCE_REPORT_HEADER);
    out.push('\n');
    for (step, report) in steps.iter().zip(reports) {
        match report {
            Some(r) => out.push_str(&format!(
                "{step},{},{},{},{}\n",
                fmt_float(r.total_mc_variance),
                fmt_float(r.total_lsmc_variance),
                fmt_float(r.ratio),
                fmt_float(r.theoretical_ratio)
            )),
            None => out.push_str(&format!("{step},,,,\n")),
        }
    }
    write_file(path, &out)
}

/// `compare.csv`: per-step relative differences of the two profiles.
pub fn write_compare_csv(path: &Path, rows: &[ProfileDiffRow]) -> Result<()> {
    let mut out = String::from(COMPARE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_float(r.time),
            fmt_float(r.ee_lsmc),
            fmt_float(r.ee_baseline),
            fmt_float(r.ee_rel_err),
            fmt_float(r.pfe_lsmc),
            fmt_float(r.pfe_baseline),
            fmt_float(r.pfe_rel_err)
        ));
    }
    write_file(path, &out)
}

/// `gbm_call.csv` / `gbm_call_cubic.csv`.
pub fn write_gbm_call_csv(path: &Path, rows: &[GbmCallRow]) -> Result<()> {
    let mut out = String::from(GBM_CALL_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step,
            r.scenario,
            fmt_float(r.spot),
            fmt_float(r.y_mc),
            fmt_float(r.y_lsmc),
            fmt_float(r.bs)
        ));
    }
    write_file(path, &out)
}

/// `variance.csv`: the per-scenario variance densities across inner-path
/// counts; empty cells for the single-path rows.
pub fn write_variance_study_csv(path: &Path, study: &VarianceStudy) -> Result<()> {
    let mut out = String::from(VARIANCE_STUDY_HEADER);
    out.push('\n');
    for r in &study.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.p,
            r.scenario,
            fmt_opt(r.mc_var),
            fmt_opt(r.lsmc_var)
        ));
    }
    write_file(path, &out)
}

/// `variance_ratio.csv`: trace report per inner-path count.
pub fn write_variance_ratio_csv(path: &Path, study: &VarianceStudy) -> Result<()> {
    let mut out = String::from("p,total_mc_var,total_lsmc_var,ratio,theoretical_ratio\n");
    for (p, report) in &study.reports {
        match report {
            Some(r) => out.push_str(&format!(
                "{p},{},{},{},{}\n",
                fmt_float(r.total_mc_variance),
                fmt_float(r.total_lsmc_variance),
                fmt_float(r.ratio),
                fmt_float(r.theoretical_ratio)
            )),
            None => out.push_str(&format!("{p},,,,\n")),
        }
    }
    write_file(path, &out)
}

/// `sse.csv`.
pub fn write_sse_csv(path: &Path, table: &SseTable) -> Result<()> {
    let mut out = String::from(SSE_HEADER);
    out.push('\n');
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.degree,
            r.inner_paths,
            fmt_float(r.sse_noisy),
            fmt_float(r.sse_actual)
        ));
    }
    write_file(path, &out)
}

/// Run record for reproducibility: inputs, config digest and wall-clock
/// accounting. Timings vary run to run, so this lives outside the CSVs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub config_sha256: String,
    pub timings: &'a [StepTiming],
}

impl<'a> Manifest<'a> {
    pub fn new(command: &str, seed: u64, workers: usize, config_toml: &str, timings: &'a [StepTiming]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_toml.as_bytes());
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            workers,
            config_sha256: format!("{:x}", hasher.finalize()),
            timings,
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::invalid(format!("manifest serialization: {e}")))?;
    write_file(path, &(text + "\n"))
}

/// Resolve an output file path under the run directory.
pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Method;

    #[test]
    fn float_formatting_has_17_significant_digits() {
        assert_eq!(fmt_float(10.450583572185566), "1.0450583572185566e1");
        assert_eq!(fmt_float(0.0), "0.0000000000000000e0");
        let v = 0.1 + 0.2;
        assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn profile_csv_layout() {
        let profile = ExposureProfile {
            method: Method::Lsmc,
            times: vec![0.5, 1.0],
            ee: vec![1.0, 2.0],
            pfe: vec![3.0, 4.0],
            quantile: 0.95,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.csv");
        write_profile_csv(&path, &[&profile]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), PROFILE_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "5.0000000000000000e-1,1.0000000000000000e0,3.0000000000000000e0,lsmc"
        );
    }
}
