//! Parameter sweeps over a base scenario. Levels run in parallel and are
//! reported in input order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inject::{Envelope, ParamName};
use super::scenario::{
    run_scenario, CurrentNoise, PerturbationSpec, Scenario, ScenarioKind, ScenarioOutcome, VoltageNoise,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLevel {
    pub label: String,
    pub value: f64,
    pub outcome: ScenarioOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: String,
    pub levels: Vec<SweepLevel>,
}

impl Sweep {
    /// `(level value, metric)` for one estimator across the sweep.
    pub fn series(&self, estimator: &str, metric: impl Fn(&super::EstimatorRun) -> f64) -> Vec<(f64, f64)> {
        self.levels
            .iter()
            .filter_map(|l| l.outcome.run(estimator).map(|r| (l.value, metric(r))))
            .collect()
    }

    pub fn level(&self, label: &str) -> Option<&SweepLevel> {
        self.levels.iter().find(|l| l.label == label)
    }
}

fn run_levels(axis: &str, levels: Vec<(String, f64, Scenario)>) -> Result<Sweep> {
    let levels = levels
        .into_par_iter()
        .map(|(label, value, s)| {
            run_scenario(&s).map(|outcome| SweepLevel {
                label,
                value,
                outcome,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep {
        axis: axis.to_string(),
        levels,
    })
}

/// Same seed at every level, so levels differ only in the bias mean.
pub fn current_bias_sweep(base: &Scenario, means_a: &[f64], sd_a: f64) -> Result<Sweep> {
    let levels = means_a
        .iter()
        .map(|&m| {
            let mut s = base.clone();
            s.kind = ScenarioKind::CurrentNoise;
            s.current_noise = Some(CurrentNoise { mean_a: m, sd_a });
            (format!("{m}"), m, s)
        })
        .collect();
    run_levels("current_bias_a", levels)
}

pub fn voltage_noise_sweep(
    base: &Scenario,
    sds_v: &[f64],
    mean_v: f64,
    damping_tau_s: Option<f64>,
    damped: bool,
) -> Result<Sweep> {
    let levels = sds_v
        .iter()
        .map(|&sd| {
            let mut s = base.clone();
            s.kind = ScenarioKind::VoltageNoise;
            s.voltage_noise = Some(VoltageNoise {
                mean_v,
                sd_v: sd,
                damping_tau_s,
                damped,
            });
            (format!("{sd}"), sd, s)
        })
        .collect();
    run_levels("voltage_sd_v", levels)
}

/// A nominal level labelled `nominal`, then one level per
/// (parameter, amplitude) labelled `name:amp`.
pub fn sensitivity_sweep(
    base: &Scenario,
    params: &[ParamName],
    amps: &[f64],
    envelope: Envelope,
    tau_s: Option<f64>,
) -> Result<Sweep> {
    let mut levels = Vec::new();
    let mut nominal = base.clone();
    nominal.kind = ScenarioKind::Sensitivity;
    nominal.perturbation = None;
    levels.push(("nominal".to_string(), 0.0, nominal));
    for &p in params {
        for &a in amps {
            let mut s = base.clone();
            s.kind = ScenarioKind::Sensitivity;
            s.perturbation = Some(PerturbationSpec {
                parameter: p,
                relative_amp: a,
                envelope,
                tau_s,
            });
            levels.push((format!("{p}:{a}"), a, s));
        }
    }
    run_levels("perturbation", levels)
}

/// Runs `sweep` once per seed; the replicates share every other setting.
pub fn replicate(base: &Scenario, seeds: &[u64], sweep: impl Fn(&Scenario) -> Result<Sweep>) -> Result<Vec<Sweep>> {
    seeds
        .iter()
        .map(|&seed| {
            let mut s = base.clone();
            s.seed = Some(seed);
            sweep(&s)
        })
        .collect()
}

/// Level-wise mean of `series` across replicates of the same sweep.
pub fn mean_series(
    replicates: &[Sweep],
    estimator: &str,
    metric: impl Fn(&super::EstimatorRun) -> f64,
) -> Vec<(f64, f64)> {
    let mut acc: Vec<(f64, f64)> = Vec::new();
    for sw in replicates {
        let s = sw.series(estimator, &metric);
        if acc.is_empty() {
            acc = s.iter().map(|&(v, _)| (v, 0.0)).collect();
        }
        for (a, (_, m)) in acc.iter_mut().zip(s) {
            a.1 += m;
        }
    }
    let n = replicates.len().max(1) as f64;
    acc.into_iter().map(|(v, m)| (v, m / n)).collect()
}
