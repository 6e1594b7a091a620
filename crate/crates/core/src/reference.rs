//! Bundled reference cell, OCV curve and default observer pole profiles.
//!
//! The cell is a 58 Ah large-format NMC-like prismatic with sub-milliohm
//! polarisation resistances.

use nalgebra::Complex;

use crate::error::Result;
use crate::model::{CellParams, OcvCurve};
use crate::observers::DesignOptions;
use crate::observers::ObserverVariant;

pub const REFERENCE_OCV_POINTS: usize = 21;

pub fn reference_cell() -> CellParams {
    CellParams {
        r_ohm: 0.45e-3,
        r_a: 0.12e-3,
        c_a: 10.0 / 0.12e-3,
        r_b: 0.18e-3,
        c_b: 120.0 / 0.18e-3,
        capacity_c: 58.0 * 3600.0,
        eta: 1.0,
    }
}

/// Smooth generating function for the reference OCV table.
pub fn reference_ocv_fn(s: f64) -> f64 {
    3.30 + 1.0 * s - 0.30 * (-12.0 * s).exp() + 0.05 * (-15.0 * (1.0 - s)).exp()
}

pub fn reference_ocv() -> OcvCurve {
    OcvCurve::tabulate(REFERENCE_OCV_POINTS, reference_ocv_fn)
        .expect("reference OCV table is monotone")
}

/// Error-dynamics poles shared by every variant for the two RC states (1/s).
pub const RC_POLES: [f64; 2] = [-0.15, -0.02];
/// Decay rate of the SOC error mode (1/s).
pub const SOC_RATE: f64 = 0.004;
/// Fraction of the PID effective gain carried by the derivative path.
pub const PID_DERIVATIVE_SHARE: f64 = 0.05;

/// Default poles: the RC pair plus `-ω` for Luenberger and sliding mode, or
/// the pair `-ω(1 ± 0.8j)` for the SOC and integral modes of PI and PID.
pub fn default_poles(variant: ObserverVariant) -> Vec<Complex<f64>> {
    let mut poles: Vec<Complex<f64>> = RC_POLES.iter().map(|&x| Complex::new(x, 0.0)).collect();
    match variant {
        ObserverVariant::Luenberger | ObserverVariant::SlidingMode => {
            poles.push(Complex::new(-SOC_RATE, 0.0));
        }
        ObserverVariant::Pi | ObserverVariant::Pid => {
            let w = if variant == ObserverVariant::Pid {
                SOC_RATE / (1.0 - PID_DERIVATIVE_SHARE)
            } else {
                SOC_RATE
            };
            poles.push(Complex::new(-w, 0.8 * w));
            poles.push(Complex::new(-w, -0.8 * w));
        }
    }
    poles
}

/// Default poles as comma-separated text.
pub fn default_poles_text(variant: ObserverVariant) -> String {
    default_poles(variant)
        .iter()
        .map(|p| match p.im {
            im if im > 0.0 => format!("{}+{}j", p.re, im),
            im if im < 0.0 => format!("{}-{}j", p.re, -im),
            _ => format!("{}", p.re),
        })
        .collect::<Vec<_>>()
        .join(",")
}

pub fn reference_pair() -> Result<(CellParams, OcvCurve)> {
    let p = reference_cell();
    p.validate()?;
    Ok((p, reference_ocv()))
}

/// Default design knobs for each variant; `dt` is filled in by the caller.
pub fn default_design_options(variant: ObserverVariant) -> DesignOptions {
    let mut o = DesignOptions::default();
    match variant {
        ObserverVariant::SlidingMode => o.k_dc = 1e-5,
        ObserverVariant::Pid => o.derivative_share = PID_DERIVATIVE_SHARE,
        _ => {}
    }
    o
}
