//! Ground-truth simulation of a loadfile.

use serde::{Deserialize, Serialize};

use super::cell::{terminal_voltage, Discretization, StateVector};
use super::ocv::OcvCurve;
use super::param_map::ParamSource;
use crate::error::{Error, Result};
use crate::loadfile::Loadfile;

/// SOC excursions smaller than this are rounding, not saturation.
const SATURATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub t: f64,
    pub state: StateVector,
    pub current: f64,
    pub voltage: f64,
}

/// Per-sample states and terminal voltages.
///
/// `points[k]` is the state at sample `k` and the voltage under that
/// sample's current; sample `k`'s current is held until sample `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TruthPoint>,
    /// True if SOC had to be clamped to [0, 1] at any step.
    pub saturated: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> StateVector {
        self.points.last().expect("trajectory is never empty").state
    }

    pub fn voltages(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.voltage).collect()
    }

    pub fn socs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.state.soc).collect()
    }
}

pub fn simulate(
    params: &dyn ParamSource,
    ocv: &OcvCurve,
    soc0: f64,
    loadfile: &Loadfile,
) -> Result<Trajectory> {
    simulate_with(params, ocv, StateVector::at_rest(soc0), loadfile, Discretization::Zoh)
}

pub fn simulate_with(
    params: &dyn ParamSource,
    ocv: &OcvCurve,
    x0: StateVector,
    loadfile: &Loadfile,
    disc: Discretization,
) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&x0.soc) {
        return Err(Error::domain(format!("initial SOC {} outside [0, 1]", x0.soc)));
    }
    let samples = loadfile.samples();
    if samples.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
        return Err(Error::format(None, "loadfile timestamps must be strictly increasing"));
    }
    if samples.is_empty() {
        let p = params.params_at(0.0, None, x0.soc)?;
        p.validate()?;
        return Ok(Trajectory {
            points: vec![TruthPoint {
                t: 0.0,
                state: x0,
                current: 0.0,
                voltage: terminal_voltage(&p, ocv, x0, 0.0)?,
            }],
            saturated: false,
        });
    }

    let mut points = Vec::with_capacity(samples.len());
    let mut saturated = false;
    let mut x = x0;
    for (k, s) in samples.iter().enumerate() {
        let p = params.params_at(s.time_s, s.temp_c, x.soc)?;
        p.validate()?;
        points.push(TruthPoint {
            t: s.time_s,
            state: x,
            current: s.current_a,
            voltage: terminal_voltage(&p, ocv, x, s.current_a)?,
        });
        if let Some(next) = samples.get(k + 1) {
            let mut y = disc.step(&p, x, s.current_a, next.time_s - s.time_s);
            if y.soc < -SATURATION_TOL || y.soc > 1.0 + SATURATION_TOL {
                saturated = true;
            }
            y.soc = y.soc.clamp(0.0, 1.0);
            x = y;
        }
    }
    Ok(Trajectory { points, saturated })
}
