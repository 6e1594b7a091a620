//! Square-root cubature Kalman filter baseline.
//!
//! Third-degree spherical-radial rule with 2n = 6 equally weighted points.
//! The covariance is carried as a lower-triangular square root and
//! refreshed by QR triangularisation in both the time and the measurement
//! update, so the reconstructed covariance stays symmetric PSD.

use nalgebra::{Const, DimMin, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellParams, Discretization, OcvCurve, StateVector};

const N: usize = 3;
const POINTS: usize = 2 * N;

/// Filter tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrckfConfig {
    /// Process-noise covariance (row major).
    pub q_proc: [[f64; 3]; 3],
    /// Measurement-noise variance, V².
    pub r_meas: f64,
    /// Initial covariance (row major).
    pub p0: [[f64; 3]; 3],
}

impl Default for SrckfConfig {
    fn default() -> Self {
        Self {
            q_proc: [[1e-8, 0.0, 0.0], [0.0, 1e-8, 0.0], [0.0, 0.0, 1e-10]],
            r_meas: 1e-4,
            p0: [[1e-6, 0.0, 0.0], [0.0, 1e-6, 0.0], [0.0, 0.0, 0.04]],
        }
    }
}

fn mat3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| rows[r][c])
}

/// Square root of a symmetric PSD matrix: Cholesky when definite,
/// otherwise a clipped eigen-decomposition.
fn psd_sqrt(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("covariance has non-finite entries"));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::domain("covariance must be symmetric"));
    }
    if let Some(ch) = m.cholesky() {
        return Ok(ch.l());
    }
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| *l < -1e-12 * m.amax()) {
        return Err(Error::domain("covariance must be positive semidefinite"));
    }
    let sq = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(eig.eigenvectors * Matrix3::from_diagonal(&sq))
}

/// Lower-triangular `S` with `S·Sᵀ = A·Aᵀ` and non-negative diagonal.
fn tria<const C: usize>(a: &SMatrix<f64, 3, C>) -> Matrix3<f64>
where
    Const<C>: DimMin<Const<3>, Output = Const<3>>,
{
    let r = a.transpose().qr().r();
    let mut s = Matrix3::zeros();
    for i in 0..N {
        for j in 0..=i {
            s[(i, j)] = r[(j, i)];
        }
    }
    for j in 0..N {
        if s[(j, j)] < 0.0 {
            for i in j..N {
                s[(i, j)] = -s[(i, j)];
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrckfState {
    pub x_hat: StateVector,
    /// Lower-triangular covariance square root.
    pub s_sqrt: Matrix3<f64>,
    pub q_proc: Matrix3<f64>,
    pub r_meas: f64,
}

impl SrckfState {
    pub fn new(x0: StateVector, cfg: &SrckfConfig) -> Result<Self> {
        if !(cfg.r_meas > 0.0) || !cfg.r_meas.is_finite() {
            return Err(Error::domain(format!("r_meas must be > 0, got {}", cfg.r_meas)));
        }
        let q = mat3(&cfg.q_proc);
        psd_sqrt(&q)?;
        let s0 = tria(&psd_sqrt(&mat3(&cfg.p0))?);
        Ok(Self {
            x_hat: x0,
            s_sqrt: s0,
            q_proc: q,
            r_meas: cfg.r_meas,
        })
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        self.s_sqrt * self.s_sqrt.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrckfStep {
    /// Predicted state and covariance for the next sample.
    pub state: SrckfState,
    /// Posterior mean at this sample.
    pub posterior: StateVector,
    /// Posterior covariance square root at this sample.
    pub posterior_sqrt: Matrix3<f64>,
    /// Predicted terminal voltage.
    pub v_hat: f64,
    pub innovation: f64,
    /// Innovation variance.
    pub innovation_var: f64,
    /// Posterior SOC clamped to [0, 1].
    pub soc: f64,
}

impl SrckfStep {
    /// Normalised innovation squared.
    pub fn nis(&self) -> f64 {
        self.innovation * self.innovation / self.innovation_var
    }
}

fn cubature_points(x: &Vector3<f64>, s: &Matrix3<f64>) -> SMatrix<f64, 3, POINTS> {
    let scale = (N as f64).sqrt();
    let mut pts = SMatrix::<f64, 3, POINTS>::zeros();
    for j in 0..N {
        let col = s.column(j) * scale;
        pts.set_column(j, &(x + col));
        pts.set_column(j + N, &(x - col));
    }
    pts
}

pub fn srckf_step(
    state: &SrckfState,
    p: &CellParams,
    ocv: &OcvCurve,
    i_amps: f64,
    v_meas: f64,
    dt: f64,
) -> Result<SrckfStep> {
    srckf_step_with(state, p, ocv, i_amps, v_meas, dt, Discretization::Zoh)
}

pub fn srckf_step_with(
    state: &SrckfState,
    p: &CellParams,
    ocv: &OcvCurve,
    i_amps: f64,
    v_meas: f64,
    dt: f64,
    disc: Discretization,
) -> Result<SrckfStep> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("time step must be > 0, got {dt}")));
    }
    if !(state.r_meas > 0.0) {
        return Err(Error::domain("r_meas must be > 0"));
    }
    if !v_meas.is_finite() || !i_amps.is_finite() {
        return Err(Error::Input(format!(
            "non-finite measurement (i={i_amps}, v={v_meas})"
        )));
    }
    let w = 1.0 / (POINTS as f64).sqrt();
    let r_sqrt = state.r_meas.sqrt();

    // measurement update
    let x_prior = state.x_hat.to_vector();
    let pts = cubature_points(&x_prior, &state.s_sqrt);
    let z: [f64; POINTS] = std::array::from_fn(|j| {
        let c = pts.column(j);
        ocv.eval_extended(c[2]) + i_amps * p.r_ohm + c[0] + c[1]
    });
    let z_mean = z.iter().sum::<f64>() / POINTS as f64;
    let x_mean: Vector3<f64> = pts.column_sum() / POINTS as f64;
    let zc: [f64; POINTS] = std::array::from_fn(|j| (z[j] - z_mean) * w);
    let mut xc = SMatrix::<f64, 3, POINTS>::zeros();
    for j in 0..POINTS {
        xc.set_column(j, &((pts.column(j) - x_mean) * w));
    }
    let zz = zc.iter().map(|v| v * v).sum::<f64>() + state.r_meas;
    let p_xz: Vector3<f64> = Vector3::from_fn(|r, _| (0..POINTS).map(|j| xc[(r, j)] * zc[j]).sum());
    let gain = p_xz / zz;
    let innovation = v_meas - z_mean;
    let x_post = x_mean + gain * innovation;

    let mut upd = SMatrix::<f64, 3, { POINTS + 1 }>::zeros();
    for j in 0..POINTS {
        upd.set_column(j, &(xc.column(j) - gain * zc[j]));
    }
    upd.set_column(POINTS, &(gain * r_sqrt));
    let s_post = tria(&upd);

    // time update
    let pts = cubature_points(&x_post, &s_post);
    let mut prop = SMatrix::<f64, 3, POINTS>::zeros();
    for (j, c) in pts.column_iter().enumerate() {
        let y = disc.step(p, StateVector::from_vector(&c.into_owned()), i_amps, dt);
        prop.set_column(j, &y.to_vector());
    }
    let x_next: Vector3<f64> = prop.column_sum() / POINTS as f64;
    let s_q = psd_sqrt(&state.q_proc)?;
    let mut pre = SMatrix::<f64, 3, { POINTS + N }>::zeros();
    for j in 0..POINTS {
        pre.set_column(j, &((prop.column(j) - x_next) * w));
    }
    for j in 0..N {
        pre.set_column(POINTS + j, &s_q.column(j));
    }
    let s_next = tria(&pre);

    let finite = x_post.iter().chain(x_next.iter()).all(|v| v.is_finite())
        && s_post.iter().chain(s_next.iter()).all(|v| v.is_finite());
    if !finite {
        return Err(Error::Numerical(
            "SRCKF covariance square root lost positive semidefiniteness".into(),
        ));
    }
    let posterior = StateVector::from_vector(&x_post);
    Ok(SrckfStep {
        state: SrckfState {
            x_hat: StateVector::from_vector(&x_next),
            s_sqrt: s_next,
            q_proc: state.q_proc,
            r_meas: state.r_meas,
        },
        posterior,
        posterior_sqrt: s_post,
        v_hat: z_mean,
        innovation,
        innovation_var: zz,
        soc: posterior.soc.clamp(0.0, 1.0),
    })
}
