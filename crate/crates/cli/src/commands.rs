//! The four pipeline phases. Each reads only artifacts written by earlier
//! phases and writes only its own.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flagtune_core::active::{run_al_loop, AlReport};
use flagtune_core::executor::TrialLog;
use flagtune_core::featsel::{fit_lasso, grid_search_lambda, select_flags, GridSearch, LassoParams};
use flagtune_core::flagspace::FlagSpace;
use flagtune_core::surrogate::Direction;
use flagtune_core::tuners::{
    improvement_pct, project_configs, speedup, tune_bo, tune_bo_warm, tune_rbo, tune_sa, Algorithm, TuneTask,
    TuningReport,
};
use flagtune_core::{rng, LinearModel, Matrix64};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_dataset, write_dataset};
use crate::error::{CliError, Result};
use crate::project::Project;

pub const TRIAL_LOG: &str = "trials.jsonl";
pub const DATASET: &str = "dataset.csv";
pub const AL_REPORT: &str = "al_report.json";
pub const AL_MODEL: &str = "al_model.json";
pub const SELECTED_FLAGS: &str = "selected_flags.txt";
pub const SELECTION_REPORT: &str = "selection_report.json";
pub const COMPARISON_TXT: &str = "comparison.txt";
pub const COMPARISON_CSV: &str = "comparison.csv";

pub fn tuning_report_name(alg: Algorithm) -> String {
    format!("tuning_report_{alg}.json")
}

pub fn trajectory_name(alg: Algorithm) -> String {
    format!("trajectory_{alg}.csv")
}

pub fn summary_name(alg: Algorithm) -> String {
    format!("summary_{alg}.txt")
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(flagtune_core::Error::from)?;
    s.push('\n');
    write(path, s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn ensure_out_dir(p: &Project) -> Result<()> {
    std::fs::create_dir_all(&p.out_dir).map_err(|e| CliError::io(&p.out_dir, e))
}

/// Regression model of the full flag space saved by `datagen`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub flags: Vec<String>,
    pub metric: String,
    pub model: LinearModel,
}

#[derive(Debug, Clone)]
pub struct DatagenOutput {
    pub dataset: PathBuf,
    pub report: AlReport,
    pub rows: usize,
    pub trials: usize,
}

/// Characterizes the target and writes the dataset, trial log, loop report
/// and regression model.
pub fn datagen(p: &Project) -> Result<DatagenOutput> {
    let ev = p.evaluator()?;
    ensure_out_dir(p)?;
    let log_path = p.out_dir.join(TRIAL_LOG);
    write(&log_path, "")?;
    let log = TrialLog::new(&log_path);
    let outcome = run_al_loop(ev.as_ref(), p.metric(), &p.config.al, p.config.seed, Some(&log))?;
    log::info!(
        "characterization: {} rounds, {} trials, final test RMSE {:.4e}",
        outcome.report.rounds.len(),
        outcome.trials.len(),
        outcome.report.final_rmse()
    );
    let dataset = p.out_dir.join(DATASET);
    let rows = write_dataset(&dataset, &p.space, &ev.metrics(), outcome.dataset())?;
    write_json(&p.out_dir.join(AL_REPORT), &outcome.report)?;
    let saved = SavedModel { flags: p.space.names(), metric: p.metric().to_string(), model: outcome.model };
    write_json(&p.out_dir.join(AL_MODEL), &saved)?;
    Ok(DatagenOutput { dataset, report: outcome.report, rows, trials: outcome.trials.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagWeight {
    pub flag: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub metric: String,
    pub samples: usize,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSearch<f64>>,
    pub converged: bool,
    pub sweeps: usize,
    pub threshold: f64,
    pub weights: Vec<FlagWeight>,
    pub selected: Vec<String>,
    pub fallback: bool,
}

/// Fits the lasso on the dataset and writes the kept flags.
pub fn select(p: &Project) -> Result<SelectionReport> {
    let ds = read_dataset(&p.out_dir.join(DATASET), &p.space, p.metric())?;
    let x = Matrix64::from_rows(&ds.encoded(&p.space)?)?;
    let s = &p.config.selection;
    let base = LassoParams { lambda: s.lambda, tol: s.tol, max_sweeps: s.max_sweeps, scaling: s.scaling };
    let grid = match &s.grid {
        Some(g) => Some(grid_search_lambda(&x, &ds.values, g, s.folds, rng::derive(p.config.seed, 0x5E1), &base)?),
        None => None,
    };
    let lambda = grid.as_ref().map_or(s.lambda, |g| g.best_lambda);
    let fit = fit_lasso(&x, &ds.values, &LassoParams { lambda, ..base })?;
    if !fit.converged {
        log::warn!("lasso stopped after {} sweeps without converging", fit.n_iter);
    }
    let subset = select_flags(&fit, &p.space, s.threshold)?;
    if subset.fallback {
        log::warn!("no weight above the threshold; kept the largest {}", subset.names.len());
    }
    let report = SelectionReport {
        metric: p.metric().to_string(),
        samples: ds.values.len(),
        lambda,
        grid,
        converged: fit.converged,
        sweeps: fit.n_iter,
        threshold: s.threshold,
        weights: p.space.names().into_iter().zip(&fit.weights).map(|(flag, &weight)| FlagWeight { flag, weight }).collect(),
        selected: subset.names.clone(),
        fallback: subset.fallback,
    };
    ensure_out_dir(p)?;
    let mut list = subset.names.join("\n");
    list.push('\n');
    write(&p.out_dir.join(SELECTED_FLAGS), list)?;
    write_json(&p.out_dir.join(SELECTION_REPORT), &report)?;
    Ok(report)
}

fn tuned_space(p: &Project, all_flags: bool) -> Result<FlagSpace> {
    if all_flags {
        return Ok(p.space.clone());
    }
    let path = p.out_dir.join(SELECTED_FLAGS);
    if !path.exists() {
        return Err(CliError::Dependency(format!(
            "{} not found; run `select` first or pass --all-flags",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let names: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if names.is_empty() {
        return Err(CliError::Data(format!("{}: no flags listed", path.display())));
    }
    Ok(p.space.restrict(&names)?)
}

fn load_model(p: &Project) -> Result<LinearModel> {
    let path = p.out_dir.join(AL_MODEL);
    if !path.exists() {
        return Err(CliError::Dependency(format!(
            "regression-guided BO needs the characterization model {}; run `datagen` first",
            path.display()
        )));
    }
    let saved: SavedModel = read_json(&path)?;
    if saved.flags != p.space.names() || saved.metric != p.metric() {
        return Err(CliError::Dependency(format!(
            "{} was built for a different flag space or metric; rerun `datagen`",
            path.display()
        )));
    }
    Ok(saved.model)
}

/// Runs one tuner and writes its report, trajectory and summary.
pub fn tune(p: &Project, alg: Algorithm, all_flags: bool) -> Result<TuningReport> {
    let space = tuned_space(p, all_flags)?;
    let warm = match alg {
        Algorithm::BoWarm => {
            let path = p.out_dir.join(DATASET);
            if !path.exists() {
                return Err(CliError::Dependency(format!(
                    "BO with warm start is unavailable without characterization data ({} missing); run `datagen` first",
                    path.display()
                )));
            }
            let ds = read_dataset(&path, &p.space, p.metric())?;
            Some((project_configs(&space, &ds.configs)?, ds.values))
        }
        _ => None,
    };
    let model = match alg {
        Algorithm::Rbo => Some(load_model(p)?),
        _ => None,
    };
    let ev = p.evaluator()?;
    let task = TuneTask::new(ev.as_ref(), space, p.metric(), p.direction(), p.config.seed)?
        .with_settings(p.config.tune.settings.clone());
    let report = match alg {
        Algorithm::Bo => tune_bo(&task)?,
        Algorithm::Sa => tune_sa(&task)?,
        Algorithm::BoWarm => {
            let (xs, ys) = warm.expect("loaded above");
            tune_bo_warm(&task, &xs, &ys)?
        }
        Algorithm::Rbo => tune_rbo(&task, model.as_ref().expect("loaded above"))?,
    };
    ensure_out_dir(p)?;
    write_json(&p.out_dir.join(tuning_report_name(alg)), &report)?;
    write(&p.out_dir.join(trajectory_name(alg)), report.trajectory_csv())?;
    write(&p.out_dir.join(summary_name(alg)), summary(&report, ev.space()))?;
    Ok(report)
}

/// Human-readable outcome of a tuning run.
pub fn summary(r: &TuningReport, space: &FlagSpace) -> String {
    let dir = match r.direction {
        Direction::Minimize => "minimize",
        Direction::Maximize => "maximize",
    };
    let mut s = String::new();
    let _ = writeln!(s, "algorithm: {}", r.algorithm);
    let _ = writeln!(s, "metric: {} ({dir})", r.metric);
    let _ = writeln!(s, "seed: {}", r.seed);
    let _ = writeln!(s, "tuned flags: {}", r.tuned_flags.len());
    let _ = writeln!(s, "real executions: {}", r.real_executions);
    let _ = writeln!(s, "failed trials: {}", r.failed_trials);
    let _ = writeln!(s, "default value: {}", r.default_value);
    let _ = writeln!(s, "best value: {}", r.best_value);
    if let Some(v) = r.predicted_value {
        let _ = writeln!(s, "predicted value: {v}");
    }
    if let Some(v) = r.confirmed_value {
        let _ = writeln!(s, "confirmed value: {v}");
    }
    let _ = writeln!(s, "speedup: {}", r.speedup);
    let _ = writeln!(s, "improvement: {:.2}%", r.improvement_pct());
    let _ = writeln!(s, "best flags: {}", space.render_cli_args(&r.best_config).join(" "));
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub algorithm: Algorithm,
    pub metric: String,
    pub default_value: f64,
    pub best_value: f64,
    pub speedup: f64,
    pub improvement_pct: f64,
    pub real_executions: usize,
}

/// One row per report in algorithm order. All reports must share a metric.
pub fn comparison(reports: &[TuningReport]) -> Result<Vec<ComparisonRow>> {
    let first = reports.first().ok_or_else(|| CliError::Dependency("no tuning reports to compare".into()))?;
    if let Some(other) = reports.iter().find(|r| r.metric != first.metric || r.direction != first.direction) {
        return Err(CliError::Data(format!(
            "cannot compare `{}` with `{}` in one table",
            first.metric, other.metric
        )));
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            algorithm: r.algorithm,
            metric: r.metric.clone(),
            default_value: r.default_value,
            best_value: r.best_value,
            speedup: speedup(r.direction, r.default_value, r.best_value),
            improvement_pct: improvement_pct(r.direction, r.default_value, r.best_value),
            real_executions: r.real_executions,
        })
        .collect();
    rows.sort_by_key(|r| r.algorithm);
    Ok(rows)
}

pub fn comparison_text(rows: &[ComparisonRow]) -> String {
    let mut s = format!(
        "{:<8} {:<12} {:>14} {:>14} {:>9} {:>13} {:>10}\n",
        "algo", "metric", "default", "best", "speedup", "improvement", "executions"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8} {:<12} {:>14.6} {:>14.6} {:>8.3}x {:>12.2}% {:>10}",
            r.algorithm.as_str(),
            r.metric,
            r.default_value,
            r.best_value,
            r.speedup,
            r.improvement_pct,
            r.real_executions
        );
    }
    s
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("algorithm,metric,default_value,best_value,speedup,improvement_pct,real_executions\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.algorithm, r.metric, r.default_value, r.best_value, r.speedup, r.improvement_pct, r.real_executions
        );
    }
    s
}

/// Collects every tuning report in the output directory and writes the
/// comparison table.
pub fn report(p: &Project) -> Result<Vec<ComparisonRow>> {
    let mut reports = Vec::new();
    for alg in Algorithm::ALL {
        let path = p.out_dir.join(tuning_report_name(alg));
        if path.exists() {
            reports.push(read_json::<TuningReport>(&path)?);
        }
    }
    if reports.is_empty() {
        return Err(CliError::Dependency(format!(
            "no tuning reports in {}; run `tune` first",
            p.out_dir.display()
        )));
    }
    let rows = comparison(&reports)?;
    write(&p.out_dir.join(COMPARISON_TXT), comparison_text(&rows))?;
    write(&p.out_dir.join(COMPARISON_CSV), comparison_csv(&rows))?;
    Ok(rows)
}
