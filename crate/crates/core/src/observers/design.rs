//! Error matrices, pole placement and the Hurwitz test.

use nalgebra::{Complex, DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ObserverGains, ObserverVariant, DEFAULT_BOUNDARY_LAYER};
use crate::error::{Error, Result};
use crate::model::{CellParams, OcvCurve};
use crate::observability::observability_rank;

/// Error-system matrix `A_e` of an observer at OCV slope `m`.
///
/// For PID the derivative gain enters as `K_d/Δt`, so `dt` is required.
pub fn error_matrix(
    gains: &ObserverGains,
    p: &CellParams,
    m: f64,
    dt: Option<f64>,
) -> Result<DMatrix<f64>> {
    p.validate()?;
    let diag = [-1.0 / p.tau_a(), -1.0 / p.tau_b(), 0.0];
    let c = [1.0, 1.0, m];
    // rows of A - k·C
    let feedback = |k: &[f64; 3], out: &mut DMatrix<f64>| {
        for r in 0..3 {
            for col in 0..3 {
                out[(r, col)] = -k[r] * c[col];
            }
            out[(r, r)] += diag[r];
        }
    };
    let integral = |k_i1: f64, k_i2: &[f64; 3], out: &mut DMatrix<f64>| {
        for r in 0..3 {
            out[(r, 3)] = k_i2[r];
            out[(3, r)] = -k_i1 * c[r];
        }
    };
    match gains {
        ObserverGains::Luenberger { l: k } | ObserverGains::SlidingMode { h: k, .. } => {
            let mut a = DMatrix::zeros(3, 3);
            feedback(k, &mut a);
            Ok(a)
        }
        ObserverGains::Pi { k_p, k_i1, k_i2 } => {
            let mut a = DMatrix::zeros(4, 4);
            feedback(k_p, &mut a);
            integral(*k_i1, k_i2, &mut a);
            Ok(a)
        }
        ObserverGains::Pid {
            k_p,
            k_i1,
            k_i2,
            k_d,
            ..
        } => {
            let dt = match dt {
                Some(dt) if dt > 0.0 && dt.is_finite() => dt,
                _ => {
                    return Err(Error::domain(
                        "the PID error matrix needs a positive time step",
                    ))
                }
            };
            let k_eff = [
                k_p[0] + k_d[0] / dt,
                k_p[1] + k_d[1] / dt,
                k_p[2] + k_d[2] / dt,
            ];
            let mut a = DMatrix::zeros(4, 4);
            feedback(&k_eff, &mut a);
            integral(*k_i1, k_i2, &mut a);
            Ok(a)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurwitzReport {
    pub hurwitz: bool,
    /// Largest real part among the eigenvalues.
    pub spectral_abscissa: f64,
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::domain(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("matrix has non-finite entries"));
    }
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<HurwitzReport> {
    let abscissa = eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(HurwitzReport {
        hurwitz: abscissa < 0.0,
        spectral_abscissa: abscissa,
    })
}

/// Variant-specific knobs not fixed by the pole set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    /// Sample period; required for PID.
    pub dt: Option<f64>,
    /// Sliding-mode switching gain.
    pub k_dc: f64,
    /// Sliding-mode boundary layer, volts.
    pub boundary_layer_phi: f64,
    /// Share of the PID proportional authority moved into the derivative
    /// path: `K_d/Δt = ρ·K_eff`, `K_p = (1-ρ)·K_eff`.
    pub derivative_share: f64,
    /// PID derivative low-pass time constant, seconds (0 = raw).
    pub d_filter_tau: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            dt: None,
            k_dc: 0.0,
            boundary_layer_phi: DEFAULT_BOUNDARY_LAYER,
            derivative_share: 0.0,
            d_filter_tau: 0.0,
        }
    }
}

/// Real coefficients of `∏(s - p_i)` in ascending powers.
fn poly_from_roots(poles: &[Complex<f64>]) -> Vec<f64> {
    let mut coeffs = vec![Complex::new(1.0, 0.0)];
    for p in poles {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * p;
        }
        coeffs = next;
    }
    coeffs.iter().map(|c| c.re).collect()
}

fn validate_poles(poles: &[Complex<f64>], dim: usize) -> Result<()> {
    if poles.len() != dim {
        return Err(Error::domain(format!(
            "expected {dim} poles, got {}",
            poles.len()
        )));
    }
    if poles.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return Err(Error::domain("poles must be finite"));
    }
    if poles.iter().any(|p| p.re >= 0.0) {
        return Err(Error::domain("poles must have negative real parts"));
    }
    let scale = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    for p in poles.iter().filter(|p| p.im != 0.0) {
        let has_conj = poles
            .iter()
            .any(|q| (q.re - p.re).abs() <= 1e-12 * scale && (q.im + p.im).abs() <= 1e-12 * scale);
        if !has_conj {
            return Err(Error::domain(format!(
                "complex pole {p} has no conjugate partner"
            )));
        }
    }
    Ok(())
}

/// Solves for the gain `k` whose output-injection polynomial
/// `k1·s(s+b) + k2·s(s+a) + m·k3·(s+a)(s+b)` has coefficients `target`
/// (ascending, degree ≤ 2). `a = 1/τ_a`, `b = 1/τ_b`.
fn injection_gain(a: f64, b: f64, m: f64, target: [f64; 3]) -> Result<[f64; 3]> {
    let basis = Matrix3::new(
        0.0,
        0.0,
        m * a * b,
        b,
        a,
        m * (a + b),
        1.0,
        1.0,
        m,
    );
    let k = basis
        .lu()
        .solve(&Vector3::from(target))
        .ok_or_else(|| Error::Design("output injection is singular at this slope".into()))?;
    Ok([k[0], k[1], k[2]])
}

/// Designs gains so that the error matrix at slope `m` has the requested
/// eigenvalues.
///
/// PI/PID use `K_i1 = 1`, no proportional path into SOC (`K_p = (k1, k2, 0)`)
/// and integral injection into v_a and SOC (`K_i2 = (κ1, 0, κ3)`), which
/// makes the four-pole problem square.
pub fn place_poles(
    variant: ObserverVariant,
    p: &CellParams,
    m: f64,
    poles: &[Complex<f64>],
    opts: &DesignOptions,
) -> Result<ObserverGains> {
    p.validate()?;
    validate_poles(poles, variant.error_dim())?;
    if observability_rank(p, m)? < 3 {
        return Err(Error::Design(format!(
            "system is not observable at slope {m} (tau_a={}, tau_b={}); poles cannot be placed",
            p.tau_a(),
            p.tau_b()
        )));
    }
    let (a, b) = (1.0 / p.tau_a(), 1.0 / p.tau_b());
    let want = poly_from_roots(poles);

    match variant {
        ObserverVariant::Luenberger | ObserverVariant::SlidingMode => {
            // open loop: s³ + (a+b)s² + ab·s
            let k = injection_gain(a, b, m, [want[0], want[1] - a * b, want[2] - (a + b)])?;
            Ok(match variant {
                ObserverVariant::Luenberger => ObserverGains::Luenberger { l: k },
                _ => {
                    if !(opts.k_dc >= 0.0) || !(opts.boundary_layer_phi > 0.0) {
                        return Err(Error::domain("need k_dc >= 0 and boundary_layer_phi > 0"));
                    }
                    ObserverGains::SlidingMode {
                        h: k,
                        k_dc: opts.k_dc,
                        boundary_layer_phi: opts.boundary_layer_phi,
                    }
                }
            })
        }
        ObserverVariant::Pi | ObserverVariant::Pid => {
            // s²(s+a)(s+b) + s²[k1(s+b) + k2(s+a)] + κ1·s(s+b) + κ3·m(s+a)(s+b)
            let kappa3 = want[0] / (m * a * b);
            let kappa1 = (want[1] - kappa3 * m * (a + b)) / b;
            let s3 = want[3] - (a + b);
            let s2 = want[2] - a * b - kappa1 - kappa3 * m;
            let k2 = (s2 - b * s3) / (a - b);
            let k_eff = [s3 - k2, k2, 0.0];
            let k_i2 = [kappa1, 0.0, kappa3];
            if variant == ObserverVariant::Pi {
                return Ok(ObserverGains::Pi {
                    k_p: k_eff,
                    k_i1: 1.0,
                    k_i2,
                });
            }
            let dt = match opts.dt {
                Some(dt) if dt > 0.0 && dt.is_finite() => dt,
                _ => return Err(Error::domain("PID design needs a positive time step")),
            };
            let rho = opts.derivative_share;
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::domain("derivative_share must lie in [0, 1)"));
            }
            if !(opts.d_filter_tau >= 0.0) {
                return Err(Error::domain("d_filter_tau must be >= 0"));
            }
            Ok(ObserverGains::Pid {
                k_p: k_eff.map(|k| (1.0 - rho) * k),
                k_i1: 1.0,
                k_i2,
                k_d: k_eff.map(|k| rho * k * dt),
                d_filter_tau: opts.d_filter_tau,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentCheck {
    pub segment: usize,
    pub slope: f64,
    pub spectral_abscissa: f64,
    pub hurwitz: bool,
}

/// A gain set designed at the mean OCV slope and checked on every segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainDesign {
    pub gains: ObserverGains,
    pub design_slope: f64,
    pub poles: Vec<[f64; 2]>,
    pub dt: Option<f64>,
    pub segments: Vec<SegmentCheck>,
}

impl GainDesign {
    pub fn all_hurwitz(&self) -> bool {
        self.segments.iter().all(|s| s.hurwitz)
    }
}

/// Checks `gains` on every OCV segment slope.
pub fn check_segments(
    gains: &ObserverGains,
    p: &CellParams,
    ocv: &OcvCurve,
    dt: Option<f64>,
) -> Result<Vec<SegmentCheck>> {
    ocv.segments()
        .iter()
        .enumerate()
        .map(|(segment, seg)| {
            let rep = is_hurwitz(&error_matrix(gains, p, seg.slope, dt)?)?;
            Ok(SegmentCheck {
                segment,
                slope: seg.slope,
                spectral_abscissa: rep.spectral_abscissa,
                hurwitz: rep.hurwitz,
            })
        })
        .collect()
}

/// Places poles at the mean segment slope and verifies the result on every
/// segment; any non-Hurwitz segment rejects the design.
pub fn design_observer(
    variant: ObserverVariant,
    p: &CellParams,
    ocv: &OcvCurve,
    poles: &[Complex<f64>],
    opts: &DesignOptions,
) -> Result<GainDesign> {
    let m = ocv.mean_slope();
    let gains = place_poles(variant, p, m, poles, opts)?;
    let segments = check_segments(&gains, p, ocv, opts.dt)?;
    if let Some(bad) = segments.iter().find(|s| !s.hurwitz) {
        return Err(Error::Design(format!(
            "{variant} gains are not Hurwitz on OCV segment {} (slope {:.4} V, abscissa {:.3e})",
            bad.segment, bad.slope, bad.spectral_abscissa
        )));
    }
    Ok(GainDesign {
        gains,
        design_slope: m,
        poles: poles.iter().map(|z| [z.re, z.im]).collect(),
        dt: opts.dt,
        segments,
    })
}

/// Parses `-1,-2,-3` or `-0.5+0.2j,-0.5-0.2j,-1`.
pub fn parse_poles(text: &str) -> Result<Vec<Complex<f64>>> {
    text.split(',')
        .map(|tok| parse_complex(tok.trim()))
        .collect()
}

fn parse_complex(tok: &str) -> Result<Complex<f64>> {
    let bad = || Error::domain(format!("cannot parse pole {tok:?}"));
    if tok.is_empty() {
        return Err(bad());
    }
    let Some(body) = tok.strip_suffix(['j', 'i']) else {
        return tok.parse::<f64>().map(|re| Complex::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not an exponent sign or the leading sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => {
            let re = body[..k].parse::<f64>().map_err(|_| bad())?;
            let im_txt = &body[k..];
            let im = match im_txt {
                "+" => 1.0,
                "-" => -1.0,
                _ => im_txt.parse::<f64>().map_err(|_| bad())?,
            };
            Ok(Complex::new(re, im))
        }
        None => {
            let im = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                _ => body.parse::<f64>().map_err(|_| bad())?,
            };
            Ok(Complex::new(0.0, im))
        }
    }
}
