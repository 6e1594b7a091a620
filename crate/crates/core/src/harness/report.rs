//! CSV and JSON report emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::metrics::Metrics;
use super::scenario::{EstimatorRun, ScenarioOutcome};
use super::sweeps::Sweep;
use crate::error::{Error, Result};

pub const TRAJECTORY_HEADER: &str = "t,soc_true,soc_hat,v_meas,v_hat,e";
pub const COMPARISON_HEADER: &str =
    "estimator,soc_max_ae_pct,soc_rmse_pct,soc_mae_pct,v_max_ae_v,v_rmse_v,v_mae_v,convergence_s";

/// Trajectory rows with SOC in percent.
pub fn trajectory_csv(run: &EstimatorRun) -> String {
    let mut out = String::with_capacity(run.steps.len() * 64);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &run.steps {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.t,
            100.0 * s.soc_true,
            100.0 * s.soc_hat,
            s.v_meas,
            s.v_hat,
            s.e
        ));
    }
    out
}

fn metric_cells(m: &Metrics) -> String {
    format!("{},{},{}", m.max_ae, m.rmse, m.mae)
}

fn comparison_row(r: &EstimatorRun) -> String {
    format!(
        "{},{},{},{}",
        r.name,
        metric_cells(&r.soc_metrics),
        metric_cells(&r.voltage_metrics),
        r.convergence_s.map(|c| c.to_string()).unwrap_or_default()
    )
}

/// Estimator × metric grid.
pub fn comparison_csv(outcome: &ScenarioOutcome) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for r in &outcome.runs {
        out.push_str(&comparison_row(r));
        out.push('\n');
    }
    out
}

pub fn sweep_csv(sweep: &Sweep) -> String {
    let mut out = format!("{},level,{COMPARISON_HEADER}\n", sweep.axis);
    for l in &sweep.levels {
        for r in &l.outcome.runs {
            out.push_str(&format!("{},{},{}\n", l.value, l.label, comparison_row(r)));
        }
    }
    out
}

#[derive(Serialize)]
struct RunSummary<'a> {
    name: &'a str,
    steps: usize,
    soc_metrics_pct: Metrics,
    voltage_metrics_v: Metrics,
    convergence_s: Option<f64>,
    aborted: Option<&'a str>,
}

fn summaries(outcome: &ScenarioOutcome) -> Vec<RunSummary<'_>> {
    outcome
        .runs
        .iter()
        .map(|r| RunSummary {
            name: &r.name,
            steps: r.steps.len(),
            soc_metrics_pct: r.soc_metrics,
            voltage_metrics_v: r.voltage_metrics,
            convergence_s: r.convergence_s,
            aborted: r.aborted.as_deref(),
        })
        .collect()
}

pub fn metrics_json(outcome: &ScenarioOutcome) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        kind: super::ScenarioKind,
        steps: usize,
        truth_saturated: bool,
        estimators: Vec<RunSummary<'a>>,
    }
    Ok(serde_json::to_string_pretty(&Doc {
        kind: outcome.kind,
        steps: outcome.steps,
        truth_saturated: outcome.truth_saturated,
        estimators: summaries(outcome),
    })?)
}

pub fn sweep_json(sweep: &Sweep) -> Result<String> {
    #[derive(Serialize)]
    struct Level<'a> {
        label: &'a str,
        value: f64,
        estimators: Vec<RunSummary<'a>>,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        axis: &'a str,
        levels: Vec<Level<'a>>,
    }
    Ok(serde_json::to_string_pretty(&Doc {
        axis: &sweep.axis,
        levels: sweep
            .levels
            .iter()
            .map(|l| Level {
                label: &l.label,
                value: l.value,
                estimators: summaries(&l.outcome),
            })
            .collect(),
    })?)
}

/// Wall-clock seconds per estimator; kept apart from the reproducible files.
pub fn wall_clock_json(outcome: &ScenarioOutcome) -> Result<String> {
    let map: serde_json::Map<String, serde_json::Value> = outcome
        .runs
        .iter()
        .map(|r| (r.name.clone(), serde_json::json!(r.wall_clock_s)))
        .collect();
    Ok(serde_json::to_string_pretty(&map)?)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `comparison.csv`, `metrics.json`, `wall_clock.json` and one
/// `trajectories/<estimator>.csv` per run under `dir`.
pub fn write_outcome(outcome: &ScenarioOutcome, dir: &Path) -> Result<()> {
    write_file(&dir.join("comparison.csv"), &comparison_csv(outcome))?;
    write_file(&dir.join("metrics.json"), &metrics_json(outcome)?)?;
    write_file(&dir.join("wall_clock.json"), &wall_clock_json(outcome)?)?;
    for r in &outcome.runs {
        write_file(&dir.join("trajectories").join(format!("{}.csv", r.name)), &trajectory_csv(r))?;
    }
    Ok(())
}

pub fn write_sweep(sweep: &Sweep, dir: &Path) -> Result<()> {
    write_file(&dir.join("sweep.csv"), &sweep_csv(sweep))?;
    write_file(&dir.join("sweep.json"), &sweep_json(sweep)?)
}
