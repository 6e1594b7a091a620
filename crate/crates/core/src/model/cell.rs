//! Cell constants, state vector and the single-step propagators of the
//! two-RC equivalent circuit.

use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use super::ocv::OcvCurve;
use crate::error::{Error, Result};

/// Physical constants of the second-order equivalent circuit.
///
/// Positive current charges the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Series (ohmic) resistance, Ω.
    pub r_ohm: f64,
    /// Charge-transfer resistance, Ω.
    pub r_a: f64,
    /// Double-layer capacitance, F.
    pub c_a: f64,
    /// Concentration resistance, Ω.
    pub r_b: f64,
    /// Diffusion capacitance, F.
    pub c_b: f64,
    /// Total charge, C.
    pub capacity_c: f64,
    /// Coulombic efficiency in (0, 1].
    pub eta: f64,
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_ohm", self.r_ohm),
            ("r_a", self.r_a),
            ("c_a", self.c_a),
            ("r_b", self.r_b),
            ("c_b", self.c_b),
            ("capacity_c", self.capacity_c),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Parameter(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        let (ta, tb) = (self.tau_a(), self.tau_b());
        if !(ta.is_finite() && ta > 0.0 && tb.is_finite() && tb > 0.0) {
            return Err(Error::Parameter(format!(
                "time constants must be finite and positive, got tau_a={ta}, tau_b={tb}"
            )));
        }
        Ok(())
    }

    pub fn tau_a(&self) -> f64 {
        self.r_a * self.c_a
    }

    pub fn tau_b(&self) -> f64 {
        self.r_b * self.c_b
    }

    /// Capacity in ampere-hours.
    pub fn capacity_ah(&self) -> f64 {
        self.capacity_c / 3600.0
    }
}

/// `(v_a, v_b, soc)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub v_a: f64,
    pub v_b: f64,
    pub soc: f64,
}

impl StateVector {
    pub fn new(v_a: f64, v_b: f64, soc: f64) -> Self {
        Self { v_a, v_b, soc }
    }

    /// Relaxed cell at the given SOC.
    pub fn at_rest(soc: f64) -> Self {
        Self::new(0.0, 0.0, soc)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.v_a, self.v_b, self.soc)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.v_a.is_finite() && self.v_b.is_finite() && self.soc.is_finite()
    }
}

/// Continuous-time linearisation around one OCV segment:
/// `x' = A x + B i`, `V_out - c = C x + D i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub c: RowVector3<f64>,
    pub d: f64,
    /// Intercept of the OCV segment the system was built on.
    pub intercept: f64,
}

impl LinearSystem {
    /// Builds the system directly from a slope, bypassing the OCV lookup.
    pub fn from_slope(p: &CellParams, slope: f64, intercept: f64) -> Result<Self> {
        p.validate()?;
        if !slope.is_finite() {
            return Err(Error::domain(format!("OCV slope must be finite, got {slope}")));
        }
        Ok(Self {
            a: Matrix3::from_diagonal(&Vector3::new(-1.0 / p.tau_a(), -1.0 / p.tau_b(), 0.0)),
            b: Vector3::new(1.0 / p.c_a, 1.0 / p.c_b, p.eta / p.capacity_c),
            c: RowVector3::new(1.0, 1.0, slope),
            d: p.r_ohm,
            intercept,
        })
    }

    pub fn slope(&self) -> f64 {
        self.c[2]
    }
}

/// Linearises the model on the OCV segment containing `soc_operating`.
pub fn build_linear_system(
    p: &CellParams,
    ocv: &OcvCurve,
    soc_operating: f64,
) -> Result<LinearSystem> {
    p.validate()?;
    let seg = ocv.segment_at(soc_operating)?;
    LinearSystem::from_slope(p, seg.slope, seg.intercept)
}

/// Time discretisation used by the simulator and the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Zero-order-hold exact solution.
    #[default]
    Zoh,
    /// Explicit Euler.
    ForwardEuler,
}

impl Discretization {
    pub fn step(self, p: &CellParams, x: StateVector, i_amps: f64, dt: f64) -> StateVector {
        match self {
            Discretization::Zoh => step_exact(p, x, i_amps, dt),
            Discretization::ForwardEuler => step_euler(p, x, i_amps, dt),
        }
    }

    /// Discrete transition `(Φ diagonal, Γ)` so that `x' = Φ x + Γ i`.
    pub fn transition(self, p: &CellParams, dt: f64) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Discretization::Zoh => {
                let da = (-dt / p.tau_a()).exp();
                let db = (-dt / p.tau_b()).exp();
                (
                    Vector3::new(da, db, 1.0),
                    Vector3::new(
                        p.r_a * (1.0 - da),
                        p.r_b * (1.0 - db),
                        p.eta * dt / p.capacity_c,
                    ),
                )
            }
            Discretization::ForwardEuler => (
                Vector3::new(1.0 - dt / p.tau_a(), 1.0 - dt / p.tau_b(), 1.0),
                Vector3::new(dt / p.c_a, dt / p.c_b, p.eta * dt / p.capacity_c),
            ),
        }
    }
}

/// Exact zero-order-hold step of the three decoupled ODEs over `dt`.
pub fn step_exact(p: &CellParams, x: StateVector, i_amps: f64, dt: f64) -> StateVector {
    let da = (-dt / p.tau_a()).exp();
    let db = (-dt / p.tau_b()).exp();
    StateVector {
        v_a: da * x.v_a + p.r_a * (1.0 - da) * i_amps,
        v_b: db * x.v_b + p.r_b * (1.0 - db) * i_amps,
        soc: x.soc + p.eta * i_amps * dt / p.capacity_c,
    }
}

pub fn step_euler(p: &CellParams, x: StateVector, i_amps: f64, dt: f64) -> StateVector {
    StateVector {
        v_a: x.v_a + dt * (-x.v_a / p.tau_a() + i_amps / p.c_a),
        v_b: x.v_b + dt * (-x.v_b / p.tau_b() + i_amps / p.c_b),
        soc: x.soc + p.eta * i_amps * dt / p.capacity_c,
    }
}

/// `V_out = V_oc(s) + I·R_ohm + V_a + V_b`.
pub fn terminal_voltage(
    p: &CellParams,
    ocv: &OcvCurve,
    x: StateVector,
    i_amps: f64,
) -> Result<f64> {
    Ok(ocv.eval(x.soc)? + i_amps * p.r_ohm + x.v_a + x.v_b)
}
