//! Scenario engine: truth simulation, measurement corruption, estimator
//! runs, error indices, sweeps, timing and reports.

pub mod convergence;
pub mod inject;
pub mod metrics;
pub mod profiles;
pub mod report;
pub mod scenario;
pub mod sweeps;
pub mod timing;

pub use convergence::convergence_time_series;
pub use inject::{
    damping_envelope, inject_current_bias, inject_voltage_noise, perturb_parameter, Envelope, ParamName,
    Perturbation,
};
pub use metrics::{compute_metrics, Metrics};
pub use profiles::{generate_profile, ProfileKind};
pub use scenario::{
    all_estimators, convergence_time, prepare_estimators, prepare_stream, run_estimator, run_scenario,
    CurrentNoise, EstimatorKind, EstimatorRun, EstimatorSpec, LoadSource, PerturbationSpec, PreparedEstimator,
    PreparedStream, RunStep, Scenario, ScenarioKind, ScenarioOutcome, VoltageNoise,
};
pub use sweeps::{
    current_bias_sweep, mean_series, replicate, sensitivity_sweep, voltage_noise_sweep, Sweep, SweepLevel,
};
pub use timing::{timing_report, timing_report_with, TimingEntry, TimingReport};
