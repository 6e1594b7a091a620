use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::scenario::{prepare_estimators, prepare_stream, run_estimator, Scenario};
use crate::error::{Error, Result};

/// Each measurement repeats the run until at least this much time passes.
pub const MIN_SAMPLE_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub name: String,
    pub repetitions: usize,
    /// Runs averaged inside one measurement.
    pub inner_loops: usize,
    pub steps: usize,
    /// Mean seconds per full run.
    pub mean_s: f64,
    pub sd_s: f64,
    pub per_step_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub entries: Vec<TimingEntry>,
}

impl TimingReport {
    pub fn entry(&self, name: &str) -> Option<&TimingEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn slowest(&self) -> Option<&TimingEntry> {
        self.entries.iter().max_by(|a, b| a.per_step_s.total_cmp(&b.per_step_s))
    }
}

/// Times every estimator sequentially on identical inputs.
pub fn timing_report(s: &Scenario, repetitions: usize) -> Result<TimingReport> {
    timing_report_with(s, repetitions, MIN_SAMPLE_S)
}

pub fn timing_report_with(s: &Scenario, repetitions: usize, min_sample_s: f64) -> Result<TimingReport> {
    if repetitions == 0 {
        return Err(Error::domain("repetitions must be >= 1"));
    }
    let stream = prepare_stream(s)?;
    let estimators = prepare_estimators(s, &stream)?;
    let steps = stream.measured.len();
    let run = |e| run_estimator(e, &stream, s.soc_est0, s.discretization, s.band_pct, s.hold_s);
    let mut inner = Vec::with_capacity(estimators.len());
    for est in &estimators {
        let probe = run(est)?.wall_clock_s.max(1e-9);
        inner.push(((min_sample_s / probe).ceil() as usize).clamp(1, 10_000));
    }
    // round-robin, so slow phases of the host hit every estimator alike
    let mut samples = vec![Vec::with_capacity(repetitions); estimators.len()];
    for _ in 0..repetitions {
        for (k, est) in estimators.iter().enumerate() {
            let t0 = Instant::now();
            for _ in 0..inner[k] {
                std::hint::black_box(run(est)?);
            }
            samples[k].push(t0.elapsed().as_secs_f64() / inner[k] as f64);
        }
    }
    let mut entries = Vec::with_capacity(estimators.len());
    for ((est, samples), inner) in estimators.iter().zip(&samples).zip(inner) {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let sd = if samples.len() > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        entries.push(TimingEntry {
            name: est.label().to_string(),
            repetitions,
            inner_loops: inner,
            steps,
            mean_s: mean,
            sd_s: sd,
            per_step_s: mean / steps as f64,
        });
    }
    Ok(TimingReport { entries })
}
