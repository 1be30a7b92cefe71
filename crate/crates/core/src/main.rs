//! Command-line surface for exposure runs and the analysis studies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lsmc_exposure::config::{parse_config, RunConfig};
use lsmc_exposure::engine::{profile_diff, run, RunMode, RunOutput};
use lsmc_exposure::error::Error;
use lsmc_exposure::output;
use lsmc_exposure::studies::{
    gbm_call_study, sse_study, variance_study, GbmCallParams, SseParams, VarianceParams,
};
use lsmc_exposure::Result;

#[derive(Parser)]
#[command(
    name = "lsmc-exposure",
    about = "EE/PFE exposure profiles via nested Monte-Carlo with a least-squares regression proxy",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "LSMC_WORKERS")]
    workers: Option<usize>,
    /// Output directory for CSVs and the run manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// LSMC exposure profiles.
    Run(CommonArgs),
    /// Full-nested baseline exposure profiles.
    Baseline(CommonArgs),
    /// LSMC and baseline side by side, with a per-step diff table.
    Compare(CommonArgs),
    /// Analysis studies over the regression proxy.
    Study {
        #[arg(value_enum)]
        which: StudyKind,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    /// Vanilla-call fit with and without the in-the-money dummy.
    GbmCall,
    /// Variance densities and trace ratios across inner-path counts.
    Variance,
    /// SSE versus polynomial degree, actual and noisy fits.
    Sse,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read {}: {e}", path.display()))
            })?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.display().to_string();
    }
    config.validate()?;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => exposure_command(&common, RunMode::LsmcOnly, "run"),
        Command::Baseline(common) => exposure_command(&common, RunMode::BaselineOnly, "baseline"),
        Command::Compare(common) => exposure_command(&common, RunMode::Both, "compare"),
        Command::Study { which, common } => study_command(which, &common),
    }
}

fn exposure_command(common: &CommonArgs, mode: RunMode, name: &str) -> Result<()> {
    let config = load_config(common)?;
    let plan = config.to_run_plan()?;
    let out_dir = PathBuf::from(&config.out_dir);
    let result = run(&plan, mode)?;

    let mut profiles = Vec::new();
    if let Some(p) = &result.lsmc_profile {
        profiles.push(p);
    }
    if let Some(p) = &result.baseline_profile {
        profiles.push(p);
    }
    output::write_profile_csv(&output::out_path(&out_dir, "profile.csv"), &profiles)?;

    if let Some(lsmc) = &result.lsmc {
        output::write_variance_report_csv(
            &output::out_path(&out_dir, "variance_report.csv"),
            &lsmc.step_indices,
            &lsmc.variance,
        )?;
    }
    if let (Some(lsmc), Some(baseline)) = (&result.lsmc_profile, &result.baseline_profile) {
        let rows = profile_diff(lsmc, baseline, 1e-12)?;
        output::write_compare_csv(&output::out_path(&out_dir, "compare.csv"), &rows)?;
        let worst = rows.iter().map(|r| r.ee_rel_err).fold(0.0f64, f64::max);
        println!("max relative EE error vs baseline: {worst:.6}");
    }
    finish(&config, name, &out_dir, &result)?;
    summarize(&result);
    Ok(())
}

fn finish(config: &RunConfig, command: &str, out_dir: &Path, result: &RunOutput) -> Result<()> {
    let effective = config.to_toml_string()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(output::out_path(out_dir, "effective_config.toml"), &effective)?;
    let manifest =
        output::Manifest::new(command, config.seed, config.workers, &effective, &result.timings);
    output::write_manifest(&output::out_path(out_dir, "manifest.json"), &manifest)?;
    Ok(())
}

fn summarize(result: &RunOutput) {
    for profile in [&result.lsmc_profile, &result.baseline_profile].into_iter().flatten() {
        let peak_ee = profile.ee.iter().copied().fold(0.0f64, f64::max);
        let peak_pfe = profile.pfe.iter().copied().fold(0.0f64, f64::max);
        println!(
            "{}: {} steps, peak EE {:.4}, peak PFE{:.0} {:.4}",
            profile.method.label(),
            profile.times.len(),
            peak_ee,
            profile.quantile * 100.0,
            peak_pfe
        );
    }
}

fn study_command(which: StudyKind, common: &CommonArgs) -> Result<()> {
    let config = load_config(common)?;
    let plan = config.to_study_plan()?;
    let out_dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let timings: Vec<lsmc_exposure::engine::StepTiming> = Vec::new();

    match which {
        StudyKind::GbmCall => {
            let params = GbmCallParams {
                p_inner: config.study.p_ref,
                degree: config.basis.degree,
                steps: config.study.fit_steps.clone(),
            };
            let study = gbm_call_study(&plan, &params)?;
            output::write_gbm_call_csv(&output::out_path(&out_dir, "gbm_call.csv"), &study.dummy)?;
            output::write_gbm_call_csv(
                &output::out_path(&out_dir, "gbm_call_cubic.csv"),
                &study.cubic,
            )?;
            for &step in &params.steps {
                let rmse_mc =
                    lsmc_exposure::studies::GbmCallStudy::rmse(&study.dummy, step, |r| r.y_mc);
                let rmse_lsmc =
                    lsmc_exposure::studies::GbmCallStudy::rmse(&study.dummy, step, |r| r.y_lsmc);
                println!("step {step}: raw-MC RMSE {rmse_mc:.4}, dummy-basis LSMC RMSE {rmse_lsmc:.4}");
            }
        }
        StudyKind::Variance => {
            let params = VarianceParams {
                degree: config.study.degree,
                inner_paths: config.study.inner_paths.clone(),
                t_index: config.study.t_index,
                crn: config.plan.crn,
            };
            let study = variance_study(&plan, &params)?;
            output::write_variance_study_csv(&output::out_path(&out_dir, "variance.csv"), &study)?;
            output::write_variance_ratio_csv(
                &output::out_path(&out_dir, "variance_ratio.csv"),
                &study,
            )?;
            for (p, report) in &study.reports {
                match report {
                    Some(r) => println!(
                        "p = {p}: variance ratio {:.6} (theoretical {:.6}, reduction {:.2}%)",
                        r.ratio,
                        r.theoretical_ratio,
                        (1.0 - r.ratio) * 100.0
                    ),
                    None => println!("p = {p}: variance unavailable (needs p >= 2)"),
                }
            }
        }
        StudyKind::Sse => {
            let params = SseParams {
                max_degree: config.study.max_degree,
                inner_paths: config.study.inner_paths.clone(),
                actual_paths: config.study.actual_paths,
                t_index: config.study.t_index,
            };
            let table = sse_study(&plan, &params)?;
            output::write_sse_csv(&output::out_path(&out_dir, "sse.csv"), &table)?;
            let actual = table.sse_actual_by_degree();
            if let (Some(first), Some(last)) = (actual.first(), actual.last()) {
                println!(
                    "actual-fit SSE: degree {} -> {:.6e}, degree {} -> {:.6e}",
                    first.0, first.1, last.0, last.1
                );
            }
        }
    }

    let effective = config.to_toml_string()?;
    std::fs::write(output::out_path(&out_dir, "effective_config.toml"), &effective)?;
    let name = match which {
        StudyKind::GbmCall => "study gbm-call",
        StudyKind::Variance => "study variance",
        StudyKind::Sse => "study sse",
    };
    let manifest = output::Manifest::new(name, config.seed, config.workers, &effective, &timings);
    output::write_manifest(&output::out_path(&out_dir, "manifest.json"), &manifest)?;
    Ok(())
}
