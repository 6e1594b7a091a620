//! Scenario definition, estimator preparation and the per-estimator run loop.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::convergence::convergence_time_series;
use super::inject::{inject_current_bias, inject_voltage_noise, perturb_parameter, Envelope, ParamName};
use super::metrics::{compute_metrics, Metrics};
use super::profiles::{generate_profile, ProfileKind};
use crate::error::{Error, Result};
use crate::loadfile::Loadfile;
use crate::model::{simulate_with, CellParams, Discretization, OcvCurve, ParamSource, StateVector};
use crate::observers::{check_segments, design_observer, parse_poles, DesignOptions};
use crate::observers::{observer_step_with, ObserverGains, ObserverState, ObserverVariant};
use crate::reference::{default_design_options, default_poles, reference_cell, reference_ocv};
use crate::srckf::{srckf_step_with, SrckfConfig, SrckfState};

pub const DEFAULT_BAND_PCT: f64 = 2.0;
pub const DEFAULT_HOLD_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Accuracy,
    Convergence,
    CurrentNoise,
    VoltageNoise,
    Sensitivity,
    Timing,
}

/// Where the drive current comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LoadSource {
    Path {
        path: PathBuf,
    },
    Profile {
        profile: ProfileKind,
        duration_s: f64,
        #[serde(default = "one")]
        dt: f64,
        /// Peak current as a multiple of the 1C current.
        #[serde(default = "two")]
        peak_c_rate: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentNoise {
    pub mean_a: f64,
    pub sd_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageNoise {
    pub mean_v: f64,
    pub sd_v: f64,
    /// Envelope time constant; defaults to a fifth of the run duration.
    #[serde(default)]
    pub damping_tau_s: Option<f64>,
    #[serde(default = "default_true")]
    pub damped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub parameter: ParamName,
    pub relative_amp: f64,
    #[serde(default)]
    pub envelope: Envelope,
    /// Defaults to a fifth of the run duration.
    #[serde(default)]
    pub tau_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Observer(ObserverVariant),
    Srckf,
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "srckf" {
            return Ok(Self::Srckf);
        }
        s.parse::<ObserverVariant>()
            .map(Self::Observer)
            .map_err(|_| {
                Error::domain(format!(
                    "unknown estimator '{s}' (expected luenberger, sliding_mode, pi, pid or srckf)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum EstimatorEntry {
    Name(String),
    Spec {
        name: String,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        poles: Option<String>,
        #[serde(default)]
        gains: Option<ObserverGains>,
        #[serde(default)]
        design: Option<DesignOptions>,
        #[serde(default)]
        srckf: Option<SrckfConfig>,
    },
}

/// One estimator of a scenario. In JSON either a bare name or an object
/// with optional `label`, `poles`, `gains`, `design` and `srckf` fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "EstimatorEntry")]
pub struct EstimatorSpec {
    pub name: String,
    pub label: Option<String>,
    pub poles: Option<String>,
    pub gains: Option<ObserverGains>,
    pub design: Option<DesignOptions>,
    pub srckf: Option<SrckfConfig>,
}

impl From<EstimatorEntry> for EstimatorSpec {
    fn from(e: EstimatorEntry) -> Self {
        match e {
            EstimatorEntry::Name(name) => Self::named(&name),
            EstimatorEntry::Spec {
                name,
                label,
                poles,
                gains,
                design,
                srckf,
            } => Self {
                name,
                label,
                poles,
                gains,
                design,
                srckf,
            },
        }
    }
}

impl EstimatorSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            label: None,
            poles: None,
            gains: None,
            design: None,
            srckf: None,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

pub fn all_estimators() -> Vec<EstimatorSpec> {
    ["luenberger", "sliding_mode", "pi", "pid", "srckf"]
        .iter()
        .map(|n| EstimatorSpec::named(n))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub kind: ScenarioKind,
    pub loadfile: LoadSource,
    pub soc_true0: f64,
    pub soc_est0: f64,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub current_noise: Option<CurrentNoise>,
    #[serde(default)]
    pub voltage_noise: Option<VoltageNoise>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Nominal sample period used for PID design; defaults to the first
    /// loadfile step.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "band")]
    pub band_pct: f64,
    #[serde(default = "hold")]
    pub hold_s: f64,
    /// Cell parameters; the bundled reference cell when absent.
    #[serde(default)]
    pub cell: Option<CellParams>,
    #[serde(default)]
    pub ocv: Option<OcvCurve>,
    #[serde(default)]
    pub discretization: Discretization,
}

fn band() -> f64 {
    DEFAULT_BAND_PCT
}

fn hold() -> f64 {
    DEFAULT_HOLD_S
}

impl Scenario {
    /// Reference-cell scenario on a DST-like profile with every estimator.
    pub fn reference(kind: ScenarioKind, duration_s: f64, soc_true0: f64, soc_est0: f64) -> Self {
        Self {
            kind,
            loadfile: LoadSource::Profile {
                profile: ProfileKind::Dst,
                duration_s,
                dt: 1.0,
                peak_c_rate: 2.0,
            },
            soc_true0,
            soc_est0,
            estimators: all_estimators(),
            current_noise: None,
            voltage_noise: None,
            perturbation: None,
            seed: None,
            dt: None,
            band_pct: DEFAULT_BAND_PCT,
            hold_s: DEFAULT_HOLD_S,
            cell: None,
            ocv: None,
            discretization: Discretization::Zoh,
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: Scenario = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            s.resolve_paths(dir);
        }
        Ok(s)
    }

    /// Makes a relative loadfile path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let LoadSource::Path { path } = &mut self.loadfile {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn cell_params(&self) -> CellParams {
        self.cell.unwrap_or_else(reference_cell)
    }

    pub fn ocv_curve(&self) -> OcvCurve {
        self.ocv.clone().unwrap_or_else(reference_ocv)
    }

    pub fn is_stochastic(&self) -> bool {
        self.current_noise.is_some() || self.voltage_noise.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::domain("scenario lists no estimators"));
        }
        let mut labels: Vec<&str> = self.estimators.iter().map(|e| e.label()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::domain(format!("duplicate estimator label '{}'", w[0])));
        }
        for e in &self.estimators {
            e.name.parse::<EstimatorKind>()?;
        }
        for (name, s) in [("soc_true0", self.soc_true0), ("soc_est0", self.soc_est0)] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {s}")));
            }
        }
        if self.is_stochastic() && self.seed.is_none() {
            return Err(Error::domain("a scenario with noise injection needs a seed"));
        }
        if !(self.band_pct > 0.0) || !(self.hold_s >= 0.0) {
            return Err(Error::domain("band_pct must be > 0 and hold_s >= 0"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::domain("dt must be > 0"));
            }
        }
        self.cell_params().validate()
    }

    /// The clean drive current.
    pub fn load(&self) -> Result<Loadfile> {
        match &self.loadfile {
            LoadSource::Path { path } => Loadfile::from_path(path),
            LoadSource::Profile {
                profile,
                duration_s,
                dt,
                peak_c_rate,
            } => generate_profile(*profile, *duration_s, *dt, peak_c_rate * self.cell_params().capacity_ah()),
        }
    }
}

/// Simulated truth plus the corrupted measurement stream every estimator sees.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStream {
    pub params: CellParams,
    pub ocv: OcvCurve,
    pub soc_true: Vec<f64>,
    pub v_true: Vec<f64>,
    /// Corrupted current and voltage.
    pub measured: Loadfile,
    pub saturated: bool,
}

fn default_tau(lf: &Loadfile) -> f64 {
    let d = lf.duration();
    if d > 0.0 {
        d / 5.0
    } else {
        1.0
    }
}

const VOLTAGE_STREAM: u64 = 0x5851_F42D_4C95_7F2D;

pub fn prepare_stream(s: &Scenario) -> Result<PreparedStream> {
    s.validate()?;
    let params = s.cell_params();
    let ocv = s.ocv_curve();
    let clean = s.load()?;
    if clean.is_empty() {
        return Err(Error::domain("loadfile has no samples"));
    }
    let clean = Loadfile::from_current(clean.samples().iter().map(|x| (x.time_s, x.current_a)))?;
    let truth_source: Box<dyn ParamSource> = match &s.perturbation {
        None => Box::new(params),
        Some(ps) => {
            let tau = ps.tau_s.unwrap_or_else(|| default_tau(&clean));
            let mut pert = perturb_parameter(&params, ps.parameter.name(), ps.relative_amp, ps.envelope, tau)?;
            pert.t0 = clean.samples()[0].time_s;
            Box::new(pert)
        }
    };
    let truth = simulate_with(
        truth_source.as_ref(),
        &ocv,
        StateVector::at_rest(s.soc_true0),
        &clean,
        s.discretization,
    )?;
    let v_true = truth.voltages();
    let seed = s.seed.unwrap_or(0);
    let mut measured = clean.with_voltage(&v_true)?;
    if let Some(n) = &s.current_noise {
        measured = inject_current_bias(&measured, n.mean_a, n.sd_a, seed)?;
    }
    if let Some(n) = &s.voltage_noise {
        let tau = if n.damped {
            n.damping_tau_s.unwrap_or_else(|| default_tau(&clean))
        } else {
            f64::INFINITY
        };
        measured = inject_voltage_noise(&measured, n.mean_v, n.sd_v, tau, seed ^ VOLTAGE_STREAM)?;
    }
    Ok(PreparedStream {
        params,
        ocv,
        soc_true: truth.socs(),
        v_true,
        measured,
        saturated: truth.saturated,
    })
}

/// A ready-to-run estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PreparedEstimator {
    Observer { label: String, gains: ObserverGains },
    Srckf { label: String, config: SrckfConfig },
}

impl PreparedEstimator {
    pub fn label(&self) -> &str {
        match self {
            Self::Observer { label, .. } | Self::Srckf { label, .. } => label,
        }
    }
}

fn nominal_dt(s: &Scenario, lf: &Loadfile) -> f64 {
    s.dt.unwrap_or_else(|| lf.dt_at(0))
}

/// Designs or checks every estimator's gains; a non-Hurwitz design is a
/// `Design` error.
pub fn prepare_estimators(s: &Scenario, stream: &PreparedStream) -> Result<Vec<PreparedEstimator>> {
    let dt = nominal_dt(s, &stream.measured);
    s.estimators
        .iter()
        .map(|spec| {
            let label = spec.label().to_string();
            match spec.name.parse::<EstimatorKind>()? {
                EstimatorKind::Srckf => Ok(PreparedEstimator::Srckf {
                    label,
                    config: spec.srckf.unwrap_or_default(),
                }),
                EstimatorKind::Observer(variant) => {
                    let gains = match &spec.gains {
                        Some(g) => {
                            if g.variant() != variant {
                                return Err(Error::domain(format!(
                                    "gains for {} given to estimator '{}'",
                                    g.variant(),
                                    spec.name
                                )));
                            }
                            g.validate()?;
                            let checks = check_segments(g, &stream.params, &stream.ocv, Some(dt))?;
                            if let Some(bad) = checks.iter().find(|c| !c.hurwitz) {
                                return Err(Error::Design(format!(
                                    "{label}: error matrix not Hurwitz on OCV segment {} (abscissa {:.3e})",
                                    bad.segment, bad.spectral_abscissa
                                )));
                            }
                            g.clone()
                        }
                        None => {
                            let poles = match &spec.poles {
                                Some(text) => parse_poles(text)?,
                                None => default_poles(variant),
                            };
                            let mut opts = spec.design.unwrap_or_else(|| default_design_options(variant));
                            opts.dt = Some(opts.dt.unwrap_or(dt));
                            design_observer(variant, &stream.params, &stream.ocv, &poles, &opts)?.gains
                        }
                    };
                    Ok(PreparedEstimator::Observer { label, gains })
                }
            }
        })
        .collect()
}

/// One row of a run trajectory; SOC as a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStep {
    pub t: f64,
    pub soc_true: f64,
    pub soc_hat: f64,
    pub v_meas: f64,
    pub v_hat: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRun {
    pub name: String,
    pub steps: Vec<RunStep>,
    /// SOC error indices in percentage points.
    pub soc_metrics: Metrics,
    /// Terminal-voltage prediction error indices in volts.
    pub voltage_metrics: Metrics,
    pub convergence_s: Option<f64>,
    /// Not part of the reproducible output.
    #[serde(skip)]
    pub wall_clock_s: f64,
    /// Set when the run stopped early on a numerical failure.
    pub aborted: Option<String>,
}

impl EstimatorRun {
    pub fn recompute_metrics(&self) -> Result<(Metrics, Metrics)> {
        let st: Vec<f64> = self.steps.iter().map(|s| s.soc_true).collect();
        let sh: Vec<f64> = self.steps.iter().map(|s| s.soc_hat).collect();
        let vm: Vec<f64> = self.steps.iter().map(|s| s.v_meas).collect();
        let vh: Vec<f64> = self.steps.iter().map(|s| s.v_hat).collect();
        Ok((compute_metrics(&st, &sh)?.scaled(100.0), compute_metrics(&vm, &vh)?))
    }
}

pub fn convergence_time(run: &EstimatorRun, band_pct: f64, hold_s: f64) -> Option<f64> {
    let t: Vec<f64> = run.steps.iter().map(|s| s.t).collect();
    let err: Vec<f64> = run.steps.iter().map(|s| 100.0 * (s.soc_hat - s.soc_true)).collect();
    convergence_time_series(&t, &err, band_pct, hold_s)
}

/// Steps one estimator through the stream.
pub fn run_estimator(
    est: &PreparedEstimator,
    stream: &PreparedStream,
    soc_est0: f64,
    disc: Discretization,
    band_pct: f64,
    hold_s: f64,
) -> Result<EstimatorRun> {
    let p = &stream.params;
    let ocv = &stream.ocv;
    let samples = stream.measured.samples();
    let x0 = StateVector::at_rest(soc_est0);
    let mut steps = Vec::with_capacity(samples.len());
    let mut aborted = None;
    let start = Instant::now();
    match est {
        PreparedEstimator::Observer { gains, .. } => {
            let mut st = ObserverState::new(x0);
            for (k, smp) in samples.iter().enumerate() {
                let v = smp.voltage_v.unwrap_or(f64::NAN);
                match observer_step_with(gains, p, ocv, &st, smp.current_a, v, stream.measured.dt_at(k), disc) {
                    Ok(out) => {
                        steps.push(RunStep {
                            t: smp.time_s,
                            soc_true: stream.soc_true[k],
                            soc_hat: out.soc,
                            v_meas: v,
                            v_hat: out.v_hat,
                            e: out.e,
                        });
                        st = out.state;
                    }
                    Err(Error::Numerical(msg)) => {
                        aborted = Some(msg);
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        PreparedEstimator::Srckf { config, .. } => {
            let mut st = SrckfState::new(x0, config)?;
            for (k, smp) in samples.iter().enumerate() {
                let v = smp.voltage_v.unwrap_or(f64::NAN);
                match srckf_step_with(&st, p, ocv, smp.current_a, v, stream.measured.dt_at(k), disc) {
                    Ok(out) => {
                        steps.push(RunStep {
                            t: smp.time_s,
                            soc_true: stream.soc_true[k],
                            soc_hat: out.soc,
                            v_meas: v,
                            v_hat: out.v_hat,
                            e: out.innovation,
                        });
                        st = out.state;
                    }
                    Err(Error::Numerical(msg)) => {
                        aborted = Some(msg);
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let wall_clock_s = start.elapsed().as_secs_f64();
    let mut run = EstimatorRun {
        name: est.label().to_string(),
        steps,
        soc_metrics: Metrics { max_ae: 0.0, rmse: 0.0, mae: 0.0 },
        voltage_metrics: Metrics { max_ae: 0.0, rmse: 0.0, mae: 0.0 },
        convergence_s: None,
        wall_clock_s,
        aborted,
    };
    if !run.steps.is_empty() {
        (run.soc_metrics, run.voltage_metrics) = run.recompute_metrics()?;
        run.convergence_s = convergence_time(&run, band_pct, hold_s);
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub kind: ScenarioKind,
    pub steps: usize,
    /// True SOC left [0, 1] and was clamped.
    pub truth_saturated: bool,
    pub runs: Vec<EstimatorRun>,
}

impl ScenarioOutcome {
    pub fn run(&self, label: &str) -> Option<&EstimatorRun> {
        self.runs.iter().find(|r| r.name == label)
    }
}

/// Simulates truth once, corrupts it once, and runs every estimator on the
/// shared stream in parallel. Output order follows the scenario.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioOutcome> {
    let stream = prepare_stream(s)?;
    let estimators = prepare_estimators(s, &stream)?;
    let runs = estimators
        .par_iter()
        .map(|e| run_estimator(e, &stream, s.soc_est0, s.discretization, s.band_pct, s.hold_s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioOutcome {
        kind: s.kind,
        steps: stream.measured.len(),
        truth_saturated: stream.saturated,
        runs,
    })
}
