//! Measurement corruption and truth-parameter perturbation.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loadfile::Loadfile;
use crate::model::{CellParams, ParamSource};

/// Largest accepted relative perturbation.
pub const MAX_RELATIVE_AMP: f64 = 0.8;

fn normal(sd: f64) -> Result<Normal<f64>> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::domain(format!("standard deviation must be >= 0, got {sd}")));
    }
    Normal::new(0.0, sd).map_err(|e| Error::domain(e.to_string()))
}

/// `i' = i + N(mean, sd²)`, one draw per sample.
pub fn inject_current_bias(lf: &Loadfile, mean_a: f64, sd_a: f64, seed: u64) -> Result<Loadfile> {
    let dist = normal(sd_a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lf.map_samples(|s| {
        let mut out = *s;
        out.current_a += mean_a + dist.sample(&mut rng);
        out
    })
}

/// `v' = v + e^{-t/τ}(mean + N(0, sd²))` with `t` measured from the first
/// sample. An infinite `tau` disables the damping.
pub fn inject_voltage_noise(
    lf: &Loadfile,
    mean_v: f64,
    sd_v: f64,
    damping_tau_s: f64,
    seed: u64,
) -> Result<Loadfile> {
    if !lf.has_voltage() {
        return Err(Error::domain("voltage noise needs a voltage column"));
    }
    if !(damping_tau_s > 0.0) {
        return Err(Error::domain(format!("damping time constant must be > 0, got {damping_tau_s}")));
    }
    let dist = normal(sd_v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = lf.samples().first().map_or(0.0, |s| s.time_s);
    lf.map_samples(|s| {
        let mut out = *s;
        let env = damping_envelope(s.time_s - t0, damping_tau_s);
        let noise = mean_v + dist.sample(&mut rng);
        out.voltage_v = out.voltage_v.map(|v| v + env * noise);
        out
    })
}

pub fn damping_envelope(t: f64, tau: f64) -> f64 {
    if tau.is_infinite() {
        1.0
    } else {
        (-t / tau).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    ROhm,
    RA,
    CA,
    RB,
    CB,
}

impl ParamName {
    pub const ALL: [ParamName; 5] = [Self::ROhm, Self::RA, Self::CA, Self::RB, Self::CB];

    pub fn name(self) -> &'static str {
        match self {
            Self::ROhm => "r_ohm",
            Self::RA => "r_a",
            Self::CA => "c_a",
            Self::RB => "r_b",
            Self::CB => "c_b",
        }
    }

    fn field(self, p: &mut CellParams) -> &mut f64 {
        match self {
            Self::ROhm => &mut p.r_ohm,
            Self::RA => &mut p.r_a,
            Self::CA => &mut p.c_a,
            Self::RB => &mut p.r_b,
            Self::CB => &mut p.c_b,
        }
    }
}

impl std::fmt::Display for ParamName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| {
                Error::domain(format!(
                    "unknown parameter '{s}' (expected r_ohm, r_a, c_a, r_b or c_b)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Step,
    #[default]
    Damped,
}

impl FromStr for Envelope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Envelope::Step),
            "damped" => Ok(Envelope::Damped),
            _ => Err(Error::domain(format!("unknown envelope {s:?} (expected step or damped)"))),
        }
    }
}

impl Envelope {
    pub fn at(self, t: f64, tau: f64) -> f64 {
        match self {
            Envelope::Step => 1.0,
            Envelope::Damped => damping_envelope(t, tau),
        }
    }
}

/// Truth parameters following `p·(1 + amp·env(t))` in one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub nominal: CellParams,
    pub parameter: ParamName,
    pub relative_amp: f64,
    pub envelope: Envelope,
    pub tau_s: f64,
    /// Time the envelope starts from.
    pub t0: f64,
}

impl Perturbation {
    pub fn at(&self, t: f64) -> CellParams {
        let mut p = self.nominal;
        let f = self.parameter.field(&mut p);
        *f *= 1.0 + self.relative_amp * self.envelope.at(t - self.t0, self.tau_s);
        p
    }
}

impl ParamSource for Perturbation {
    fn params_at(&self, t: f64, _temp_c: Option<f64>, _soc: f64) -> Result<CellParams> {
        Ok(self.at(t))
    }
}

pub fn perturb_parameter(
    p: &CellParams,
    name: &str,
    relative_amp: f64,
    envelope: Envelope,
    tau_s: f64,
) -> Result<Perturbation> {
    let parameter: ParamName = name.parse()?;
    p.validate()?;
    if !relative_amp.is_finite() || relative_amp.abs() > MAX_RELATIVE_AMP {
        return Err(Error::domain(format!(
            "relative amplitude must lie within ±{MAX_RELATIVE_AMP}, got {relative_amp}"
        )));
    }
    if envelope == Envelope::Damped && !(tau_s > 0.0) {
        return Err(Error::domain(format!("damping time constant must be > 0, got {tau_s}")));
    }
    Ok(Perturbation {
        nominal: *p,
        parameter,
        relative_amp,
        envelope,
        tau_s,
        t0: 0.0,
    })
}
