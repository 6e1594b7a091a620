//! Rank-based observability checks.
//!
//! The linearised system gets the classical controllability and
//! observability matrices. The three nonlinear scenarios (input, state and
//! measurement nonlinearities) get the closed-form Lie-derivative gradient
//! matrices, assembled directly rather than differentiated symbolically.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellParams, LinearSystem, OcvCurve};

/// Relative singular-value threshold for numeric rank.
pub const RANK_EPS: f64 = 1e-10;

const STATE_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Controllability,
    Observability,
    LieInput,
    LieState,
    LieMeasurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub matrix_kind: MatrixKind,
    pub rank: usize,
    /// Singular values of the matrix as given (descending).
    pub singular_values: Vec<f64>,
    pub full_rank: bool,
}

/// Numeric rank with relative tolerance `σ_i > ε·σ_max·max_dim`.
///
/// Rows and columns are equilibrated to unit 2-norm first, so the result
/// does not depend on the units of individual rows (capacitances in farads
/// next to resistances in ohms span many decades).
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let mut a = m.clone();
    for _ in 0..3 {
        for mut row in a.row_iter_mut() {
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
        }
        for mut col in a.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
    }
    let sv = a.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = RANK_EPS * smax * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|s| **s > tol).count()
}

pub fn rank_report(kind: MatrixKind, m: &DMatrix<f64>) -> RankReport {
    let mut singular_values: Vec<f64> = m.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let rank = numeric_rank(m);
    RankReport {
        matrix_kind: kind,
        rank,
        singular_values,
        full_rank: rank == STATE_DIM,
    }
}

/// Columns `[B, AB, A²B]`.
pub fn controllability_matrix(sys: &LinearSystem) -> Matrix3<f64> {
    let ab = sys.a * sys.b;
    let a2b = sys.a * ab;
    Matrix3::from_columns(&[sys.b, ab, a2b])
}

/// Rows `[C; CA; CA²]`.
pub fn observability_matrix(sys: &LinearSystem) -> Matrix3<f64> {
    let ca = sys.c * sys.a;
    let ca2 = ca * sys.a;
    Matrix3::from_rows(&[sys.c, ca, ca2])
}

pub fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(3, 3, m.iter().copied())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LieScenario {
    /// Nonlinearity entering through the input gain.
    InputNl,
    /// Nonlinearity entering through the state dynamics.
    StateNl,
    /// Additive measurement error.
    MeasurementNl,
}

impl LieScenario {
    pub fn kind(self) -> MatrixKind {
        match self {
            LieScenario::InputNl => MatrixKind::LieInput,
            LieScenario::StateNl => MatrixKind::LieState,
            LieScenario::MeasurementNl => MatrixKind::LieMeasurement,
        }
    }
}

impl std::str::FromStr for LieScenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input_nl" | "input" => Ok(LieScenario::InputNl),
            "state_nl" | "state" => Ok(LieScenario::StateNl),
            "measurement_nl" | "measurement" => Ok(LieScenario::MeasurementNl),
            _ => Err(Error::domain(format!("unknown nonlinear scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieObservability {
    pub scenario: LieScenario,
    pub order: u32,
    /// Row-major 5×3 gradient matrix.
    pub matrix: Vec<[f64; 3]>,
    pub report: RankReport,
    /// Whether the highest-order OCV derivative term in the last row is
    /// nonzero; the nonlinear observability argument hinges on it.
    pub higher_order_term_nonzero: bool,
}

impl LieObservability {
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.matrix.len(), 3, |r, c| self.matrix[r][c])
    }
}

/// Lie-derivative gradient matrix for one nonlinear scenario.
///
/// `ocv_derivs[j - 1]` is `dʲV_oc/dsʲ` for `j = 1..=order`; `q` is the
/// nonlinearity influence vector.
pub fn lie_observability_matrix(
    scenario: LieScenario,
    p: &CellParams,
    ocv_derivs: &[f64],
    q: [f64; 3],
    order: u32,
) -> Result<LieObservability> {
    p.validate()?;
    if order < 2 {
        return Err(Error::domain(format!("Lie derivative order must be >= 2, got {order}")));
    }
    let k = order as usize;
    // the state scenario's third row always carries the third derivative
    let needed = if scenario == LieScenario::StateNl { k.max(3) } else { k };
    if ocv_derivs.len() < needed {
        return Err(Error::domain(format!(
            "need OCV derivatives up to order {needed}, got {}",
            ocv_derivs.len()
        )));
    }
    let d = |j: usize| ocv_derivs[j - 1];
    let ki = k as i32;
    let (la, lb) = (-1.0 / p.tau_a(), -1.0 / p.tau_b());
    let gain = p.eta / p.capacity_c;
    let rows: Vec<[f64; 3]> = match scenario {
        LieScenario::InputNl | LieScenario::MeasurementNl => {
            let last = match scenario {
                LieScenario::InputNl => (gain + q[2]).powi(ki - 1) * d(k),
                _ => gain.powi(ki - 1) * d(k),
            };
            vec![
                [1.0, 1.0, d(1)],
                [la, lb, 0.0],
                [la.powi(2), lb.powi(2), 0.0],
                [la.powi(ki), lb.powi(ki), 0.0],
                [0.0, 0.0, last],
            ]
        }
        LieScenario::StateNl => {
            let (fa, fb) = (la + q[0], lb + q[1]);
            vec![
                [1.0, 1.0, d(1)],
                [fa, fb, q[2] * d(2)],
                [fa.powi(2), fb.powi(2), q[2].powi(2) * d(3)],
                [fa.powi(ki - 1), fb.powi(ki - 1), q[2].powi(ki - 1) * d(k)],
                [0.0, 0.0, gain.powi(ki - 1) * d(k)],
            ]
        }
    };
    let m = DMatrix::from_fn(rows.len(), 3, |r, c| rows[r][c]);
    Ok(LieObservability {
        scenario,
        order,
        report: rank_report(scenario.kind(), &m),
        higher_order_term_nonzero: d(k) != 0.0,
        matrix: rows,
    })
}

/// Least-squares polynomial fit of an OCV curve, used where derivatives
/// beyond first order are needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothOcv {
    /// Coefficients in ascending powers of SOC.
    pub coeffs: Vec<f64>,
}

impl SmoothOcv {
    pub const DEFAULT_DEGREE: usize = 5;

    pub fn fit(curve: &OcvCurve, degree: usize) -> Result<Self> {
        let bps = curve.breakpoints();
        if bps.len() <= degree {
            return Err(Error::domain(format!(
                "degree {degree} fit needs more than {degree} breakpoints"
            )));
        }
        let vander = DMatrix::from_fn(bps.len(), degree + 1, |r, c| bps[r].soc.powi(c as i32));
        let y = DVector::from_iterator(bps.len(), bps.iter().map(|b| b.ocv));
        let coeffs = vander
            .svd(true, true)
            .solve(&y, 1e-14)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(Self {
            coeffs: coeffs.iter().copied().collect(),
        })
    }

    /// `dʲV/dsʲ` at `soc`.
    pub fn derivative(&self, soc: f64, order: usize) -> f64 {
        let mut acc = 0.0;
        for (n, c) in self.coeffs.iter().enumerate().skip(order).rev() {
            let falling: f64 = ((n - order + 1)..=n).map(|v| v as f64).product();
            acc = acc * soc + c * falling;
        }
        acc
    }

    pub fn eval(&self, soc: f64) -> f64 {
        self.derivative(soc, 0)
    }

    /// `[d¹V, …, dᵏV]` at `soc`.
    pub fn derivatives(&self, soc: f64, max_order: usize) -> Vec<f64> {
        (1..=max_order).map(|j| self.derivative(soc, j)).collect()
    }
}

/// Both linear-scenario matrices with their rank reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearObservability {
    pub controllability: [[f64; 3]; 3],
    pub controllability_report: RankReport,
    pub observability: [[f64; 3]; 3],
    pub observability_report: RankReport,
}

pub fn linear_observability(sys: &LinearSystem) -> LinearObservability {
    let con = controllability_matrix(sys);
    let obs = observability_matrix(sys);
    let rows = |m: &Matrix3<f64>| {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[(r, c)];
            }
        }
        out
    };
    LinearObservability {
        controllability: rows(&con),
        controllability_report: rank_report(MatrixKind::Controllability, &to_dmatrix(&con)),
        observability: rows(&obs),
        observability_report: rank_report(MatrixKind::Observability, &to_dmatrix(&obs)),
    }
}

/// Rank of the observability matrix for a slope `m`; used by gain design.
pub fn observability_rank(p: &CellParams, slope: f64) -> Result<usize> {
    let sys = LinearSystem::from_slope(p, slope, 0.0)?;
    Ok(numeric_rank(&to_dmatrix(&observability_matrix(&sys))))
}
