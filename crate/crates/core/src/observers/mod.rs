//! Output-feedback observers: Luenberger, sliding-mode, PI and PID.
//!
//! Each observer runs the same cycle per sample: predict the terminal
//! voltage from the current estimate, form the error against the
//! measurement, then propagate the estimate one step with the zero-order-hold
//! model and add the variant's correction integrated over the step.

mod design;

pub use design::{
    check_segments, design_observer, eigenvalues, error_matrix, is_hurwitz, parse_poles, place_poles,
    DesignOptions, GainDesign, HurwitzReport, SegmentCheck,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellParams, Discretization, OcvCurve, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverVariant {
    Luenberger,
    SlidingMode,
    Pi,
    Pid,
}

impl ObserverVariant {
    pub const ALL: [ObserverVariant; 4] = [
        ObserverVariant::Luenberger,
        ObserverVariant::SlidingMode,
        ObserverVariant::Pi,
        ObserverVariant::Pid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObserverVariant::Luenberger => "luenberger",
            ObserverVariant::SlidingMode => "sliding_mode",
            ObserverVariant::Pi => "pi",
            ObserverVariant::Pid => "pid",
        }
    }

    /// Dimension of the error system (3, or 4 with the integral state).
    pub fn error_dim(self) -> usize {
        match self {
            ObserverVariant::Luenberger | ObserverVariant::SlidingMode => 3,
            ObserverVariant::Pi | ObserverVariant::Pid => 4,
        }
    }
}

impl std::fmt::Display for ObserverVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ObserverVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "luenberger" => Ok(ObserverVariant::Luenberger),
            "sliding_mode" | "smo" => Ok(ObserverVariant::SlidingMode),
            "pi" => Ok(ObserverVariant::Pi),
            "pid" => Ok(ObserverVariant::Pid),
            _ => Err(Error::domain(format!("unknown observer variant {s:?}"))),
        }
    }
}

/// Gains of one observer; the tag selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ObserverGains {
    Luenberger {
        l: [f64; 3],
    },
    SlidingMode {
        h: [f64; 3],
        k_dc: f64,
        boundary_layer_phi: f64,
    },
    Pi {
        k_p: [f64; 3],
        k_i1: f64,
        k_i2: [f64; 3],
    },
    Pid {
        k_p: [f64; 3],
        k_i1: f64,
        k_i2: [f64; 3],
        k_d: [f64; 3],
        #[serde(default)]
        d_filter_tau: f64,
    },
}

impl ObserverGains {
    pub fn variant(&self) -> ObserverVariant {
        match self {
            ObserverGains::Luenberger { .. } => ObserverVariant::Luenberger,
            ObserverGains::SlidingMode { .. } => ObserverVariant::SlidingMode,
            ObserverGains::Pi { .. } => ObserverVariant::Pi,
            ObserverGains::Pid { .. } => ObserverVariant::Pid,
        }
    }

    /// All-zero gains of a variant (open-loop propagation).
    pub fn zero(variant: ObserverVariant) -> Self {
        match variant {
            ObserverVariant::Luenberger => ObserverGains::Luenberger { l: [0.0; 3] },
            ObserverVariant::SlidingMode => ObserverGains::SlidingMode {
                h: [0.0; 3],
                k_dc: 0.0,
                boundary_layer_phi: DEFAULT_BOUNDARY_LAYER,
            },
            ObserverVariant::Pi => ObserverGains::Pi {
                k_p: [0.0; 3],
                k_i1: 0.0,
                k_i2: [0.0; 3],
            },
            ObserverVariant::Pid => ObserverGains::Pid {
                k_p: [0.0; 3],
                k_i1: 0.0,
                k_i2: [0.0; 3],
                k_d: [0.0; 3],
                d_filter_tau: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            ObserverGains::Luenberger { l } => finite(l),
            ObserverGains::SlidingMode {
                h,
                k_dc,
                boundary_layer_phi,
            } => {
                if !(*k_dc >= 0.0) || !k_dc.is_finite() {
                    return Err(Error::domain("k_dc must be finite and >= 0"));
                }
                if !(*boundary_layer_phi > 0.0) || !boundary_layer_phi.is_finite() {
                    return Err(Error::domain("boundary_layer_phi must be finite and > 0"));
                }
                finite(h)
            }
            ObserverGains::Pi { k_p, k_i1, k_i2 } => finite(k_p) && finite(k_i2) && k_i1.is_finite(),
            ObserverGains::Pid {
                k_p,
                k_i1,
                k_i2,
                k_d,
                d_filter_tau,
            } => {
                if !(*d_filter_tau >= 0.0) || !d_filter_tau.is_finite() {
                    return Err(Error::domain("d_filter_tau must be finite and >= 0"));
                }
                finite(k_p) && finite(k_i2) && finite(k_d) && k_i1.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain("observer gains must be finite"))
        }
    }
}

/// Default sliding-mode boundary layer, volts.
pub const DEFAULT_BOUNDARY_LAYER: f64 = 0.01;

/// Boundary-layer sign: `clamp(e/φ, -1, 1)`.
pub fn sat(e: f64, phi: f64) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::domain(format!("boundary layer must be > 0, got {phi}")));
    }
    Ok((e / phi).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    pub x_hat: StateVector,
    /// Error integral (PI/PID).
    pub c_pi: f64,
    /// Previous output error (PID); `None` before the first sample.
    pub e_prev: Option<f64>,
    /// Low-passed error derivative (PID).
    pub d_filtered: f64,
}

impl ObserverState {
    pub fn new(x_hat: StateVector) -> Self {
        Self {
            x_hat,
            c_pi: 0.0,
            e_prev: None,
            d_filtered: 0.0,
        }
    }

    /// Clears all accumulators, keeping the state estimate.
    pub fn reset(&mut self) {
        *self = Self::new(self.x_hat);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverStep {
    /// State carried to the next sample.
    pub state: ObserverState,
    /// Predicted terminal voltage for this sample.
    pub v_hat: f64,
    /// `v_meas - v_hat`.
    pub e: f64,
    /// Estimate compared against this sample, SOC clamped to [0, 1].
    pub soc: f64,
}

pub fn observer_step(
    gains: &ObserverGains,
    p: &CellParams,
    ocv: &OcvCurve,
    state: &ObserverState,
    i_amps: f64,
    v_meas: f64,
    dt: f64,
) -> Result<ObserverStep> {
    observer_step_with(gains, p, ocv, state, i_amps, v_meas, dt, Discretization::Zoh)
}

#[allow(clippy::too_many_arguments)]
pub fn observer_step_with(
    gains: &ObserverGains,
    p: &CellParams,
    ocv: &OcvCurve,
    state: &ObserverState,
    i_amps: f64,
    v_meas: f64,
    dt: f64,
    disc: Discretization,
) -> Result<ObserverStep> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("time step must be > 0, got {dt}")));
    }
    if !v_meas.is_finite() || !i_amps.is_finite() {
        return Err(Error::Input(format!(
            "non-finite measurement (i={i_amps}, v={v_meas})"
        )));
    }
    let x = state.x_hat;
    let v_hat = ocv.eval_extended(x.soc) + i_amps * p.r_ohm + x.v_a + x.v_b;
    let e = v_meas - v_hat;
    let mut next = *state;

    let corr: Vector3<f64> = match gains {
        ObserverGains::Luenberger { l } => Vector3::from(*l) * e,
        ObserverGains::SlidingMode {
            h,
            k_dc,
            boundary_layer_phi,
        } => {
            let mut c = Vector3::from(*h) * e;
            if *k_dc != 0.0 {
                c.add_scalar_mut(k_dc * sat(e, *boundary_layer_phi)?);
            }
            c
        }
        ObserverGains::Pi { k_p, k_i1, k_i2 } => {
            next.c_pi = state.c_pi + k_i1 * e * dt;
            Vector3::from(*k_p) * e + Vector3::from(*k_i2) * next.c_pi
        }
        ObserverGains::Pid {
            k_p,
            k_i1,
            k_i2,
            k_d,
            d_filter_tau,
        } => {
            next.c_pi = state.c_pi + k_i1 * e * dt;
            let raw = (e - state.e_prev.unwrap_or(e)) / dt;
            next.d_filtered = if *d_filter_tau > 0.0 {
                state.d_filtered + dt / (d_filter_tau + dt) * (raw - state.d_filtered)
            } else {
                raw
            };
            next.e_prev = Some(e);
            Vector3::from(*k_p) * e
                + Vector3::from(*k_i2) * next.c_pi
                + Vector3::from(*k_d) * next.d_filtered
        }
    };

    let pred = disc.step(p, x, i_amps, dt).to_vector();
    next.x_hat = StateVector::from_vector(&(pred + corr * dt));
    if !next.x_hat.is_finite() || !next.c_pi.is_finite() {
        return Err(Error::Numerical("observer state diverged".into()));
    }
    Ok(ObserverStep {
        state: next,
        v_hat,
        e,
        soc: x.soc.clamp(0.0, 1.0),
    })
}
