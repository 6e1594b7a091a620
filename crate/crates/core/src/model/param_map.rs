//! Temperature/SOC dependent parameter tables.

use serde::{Deserialize, Serialize};

use super::cell::CellParams;
use crate::error::{Error, Result};

/// Something that yields the cell constants in force at a given instant.
///
/// Implemented by plain [`CellParams`], by [`ParamMap`] and by the
/// time-varying perturbation schedules of the harness.
pub trait ParamSource: Sync {
    fn params_at(&self, t: f64, temp_c: Option<f64>, soc: f64) -> Result<CellParams>;
}

impl ParamSource for CellParams {
    fn params_at(&self, _t: f64, _temp_c: Option<f64>, _soc: f64) -> Result<CellParams> {
        Ok(*self)
    }
}

/// Grid of identified parameters indexed `[temperature][soc]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMap {
    pub temperatures_c: Vec<f64>,
    pub soc: Vec<f64>,
    pub params: Vec<Vec<CellParams>>,
    pub ocv: Vec<Vec<f64>>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

/// Bracketing cell and weight; the weight is exactly 0 or 1 on nodes and
/// the query is clamped to the grid range.
fn bracket(grid: &[f64], x: f64) -> (usize, usize, f64) {
    if grid.len() == 1 || x <= grid[0] {
        return (0, 0, 0.0);
    }
    let last = grid.len() - 1;
    if x >= grid[last] {
        return (last, last, 0.0);
    }
    let hi = grid.partition_point(|g| *g <= x);
    let lo = hi - 1;
    if x == grid[lo] {
        return (lo, lo, 0.0);
    }
    (lo, hi, (x - grid[lo]) / (grid[hi] - grid[lo]))
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    (1.0 - w) * a + w * b
}

fn lerp_params(a: &CellParams, b: &CellParams, w: f64) -> CellParams {
    if w == 0.0 {
        return *a;
    }
    CellParams {
        r_ohm: lerp(a.r_ohm, b.r_ohm, w),
        r_a: lerp(a.r_a, b.r_a, w),
        c_a: lerp(a.c_a, b.c_a, w),
        r_b: lerp(a.r_b, b.r_b, w),
        c_b: lerp(a.c_b, b.c_b, w),
        capacity_c: lerp(a.capacity_c, b.capacity_c, w),
        eta: lerp(a.eta, b.eta, w),
    }
}

impl ParamMap {
    pub fn validate(&self) -> Result<()> {
        if self.temperatures_c.is_empty() || self.soc.is_empty() {
            return Err(Error::domain("parameter map grids must be non-empty"));
        }
        if !strictly_increasing(&self.temperatures_c) || !strictly_increasing(&self.soc) {
            return Err(Error::domain("parameter map grids must be strictly increasing"));
        }
        let (nt, ns) = (self.temperatures_c.len(), self.soc.len());
        if self.params.len() != nt || self.params.iter().any(|row| row.len() != ns) {
            return Err(Error::domain(format!(
                "parameter table must be {nt}x{ns} (temperature x soc)"
            )));
        }
        if self.ocv.len() != nt || self.ocv.iter().any(|row| row.len() != ns) {
            return Err(Error::domain(format!("OCV table must be {nt}x{ns}")));
        }
        for row in &self.params {
            for p in row {
                p.validate()?;
            }
        }
        Ok(())
    }

    /// Bilinear interpolation at `(temp_c, soc)`, clamped to the grid.
    pub fn interpolate(&self, temp_c: f64, soc: f64) -> CellParams {
        let (t0, t1, wt) = bracket(&self.temperatures_c, temp_c);
        let (s0, s1, ws) = bracket(&self.soc, soc);
        let lo = lerp_params(&self.params[t0][s0], &self.params[t0][s1], ws);
        let hi = lerp_params(&self.params[t1][s0], &self.params[t1][s1], ws);
        lerp_params(&lo, &hi, wt)
    }

    pub fn ocv_at(&self, temp_c: f64, soc: f64) -> f64 {
        let (t0, t1, wt) = bracket(&self.temperatures_c, temp_c);
        let (s0, s1, ws) = bracket(&self.soc, soc);
        let lo = lerp(self.ocv[t0][s0], self.ocv[t0][s1], ws);
        let hi = lerp(self.ocv[t1][s0], self.ocv[t1][s1], ws);
        lerp(lo, hi, wt)
    }
}

impl ParamSource for ParamMap {
    fn params_at(&self, _t: f64, temp_c: Option<f64>, soc: f64) -> Result<CellParams> {
        let temp = temp_c.ok_or_else(|| {
            Error::domain("a parameter map needs a temperature column in the loadfile")
        })?;
        Ok(self.interpolate(temp, soc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(scale: f64) -> CellParams {
        CellParams {
            r_ohm: 1e-3 * scale,
            r_a: 5e-4 * scale,
            c_a: 2e4 * scale,
            r_b: 7e-4 * scale,
            c_b: 2e5 * scale,
            capacity_c: 208_800.0,
            eta: 1.0,
        }
    }

    fn map() -> ParamMap {
        ParamMap {
            temperatures_c: vec![5.0, 25.0, 45.0],
            soc: vec![0.1, 0.5, 0.9],
            params: (0..3)
                .map(|i| (0..3).map(|j| p(1.0 + 0.1 * i as f64 + 0.37 * j as f64)).collect())
                .collect(),
            ocv: (0..3)
                .map(|i| (0..3).map(|j| 3.3 + 0.4 * j as f64 + 0.01 * i as f64).collect())
                .collect(),
        }
    }

    #[test]
    fn exact_at_nodes() {
        let m = map();
        m.validate().unwrap();
        for (i, t) in m.temperatures_c.iter().enumerate() {
            for (j, s) in m.soc.iter().enumerate() {
                assert_eq!(m.interpolate(*t, *s), m.params[i][j]);
                assert_eq!(m.ocv_at(*t, *s), m.ocv[i][j]);
            }
        }
    }

    #[test]
    fn midpoint_is_average() {
        let m = map();
        let q = m.interpolate(15.0, 0.3);
        let expect = (m.params[0][0].r_ohm
            + m.params[0][1].r_ohm
            + m.params[1][0].r_ohm
            + m.params[1][1].r_ohm)
            / 4.0;
        assert!((q.r_ohm - expect).abs() < 1e-15);
    }

    #[test]
    fn clamps_outside_grid() {
        let m = map();
        assert_eq!(m.interpolate(-20.0, 0.0), m.params[0][0]);
        assert_eq!(m.interpolate(60.0, 1.0), m.params[2][2]);
    }

    #[test]
    fn needs_temperature() {
        assert!(map().params_at(0.0, None, 0.5).is_err());
    }

    #[test]
    fn rejects_bad_grids() {
        let mut m = map();
        m.soc = vec![0.1, 0.1, 0.9];
        assert!(m.validate().is_err());
        let mut m = map();
        m.params[1].pop();
        assert!(m.validate().is_err());
    }
}
