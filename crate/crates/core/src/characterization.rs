//! Offline identification: OCV extraction from low-current charge and
//! discharge branches, and particle-swarm fitting of the RC parameters to a
//! pulse test.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loadfile::Loadfile;
use crate::model::{simulate, CellParams, OcvCurve};

/// Slow charge and discharge voltage curves, each as (soc, volts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowCurrentTest {
    pub charge: Vec<(f64, f64)>,
    pub discharge: Vec<(f64, f64)>,
}

fn sorted_branch(name: &str, pts: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if pts.len() < 2 {
        return Err(Error::domain(format!("{name} branch needs at least two points")));
    }
    if pts.iter().any(|(s, v)| !s.is_finite() || !v.is_finite()) {
        return Err(Error::domain(format!("{name} branch has non-finite values")));
    }
    let mut out = pts.to_vec();
    if out[0].0 > out[out.len() - 1].0 {
        out.reverse();
    }
    if out.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::domain(format!("{name} branch SOC is not strictly monotone")));
    }
    Ok(out)
}

fn interp(branch: &[(f64, f64)], s: f64) -> f64 {
    let k = branch.partition_point(|p| p.0 <= s);
    if k > 0 && branch[k - 1].0 == s {
        return branch[k - 1].1;
    }
    let hi = k.clamp(1, branch.len() - 1);
    let (s0, v0) = branch[hi - 1];
    let (s1, v1) = branch[hi];
    v0 + (v1 - v0) * (s - s0) / (s1 - s0)
}

impl LowCurrentTest {
    /// Reads `branch,soc,voltage_v` rows, `branch` being `charge` or `discharge`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::format(None, e.to_string()))?;
        let names: Vec<&str> = headers.iter().collect();
        if names != ["branch", "soc", "voltage_v"] {
            return Err(Error::format(
                Some(1),
                format!("expected header branch,soc,voltage_v, got {}", names.join(",")),
            ));
        }
        let mut test = LowCurrentTest {
            charge: Vec::new(),
            discharge: Vec::new(),
        };
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::format(Some(line), e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::format(Some(line), "expected 3 fields"));
            }
            let num = |j: usize| -> Result<f64> {
                let v: f64 = rec[j]
                    .parse()
                    .map_err(|_| Error::format(Some(line), format!("cannot parse '{}'", &rec[j])))?;
                if !v.is_finite() {
                    return Err(Error::format(Some(line), "non-finite value"));
                }
                Ok(v)
            };
            let point = (num(1)?, num(2)?);
            match &rec[0] {
                "charge" => test.charge.push(point),
                "discharge" => test.discharge.push(point),
                other => {
                    return Err(Error::format(Some(line), format!("unknown branch '{other}'")))
                }
            }
        }
        Ok(test)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// SOC interval covered by both branches.
    pub fn common_range(&self) -> Result<(f64, f64)> {
        let c = sorted_branch("charge", &self.charge)?;
        let d = sorted_branch("discharge", &self.discharge)?;
        let lo = c[0].0.max(d[0].0);
        let hi = c[c.len() - 1].0.min(d[d.len() - 1].0);
        if lo >= hi {
            return Err(Error::domain("charge and discharge branches do not overlap"));
        }
        Ok((lo, hi))
    }
}

/// Averages both branches on `grid`, then extends the end segments
/// linearly so the curve covers SOC 0 to 1.
pub fn extract_ocv(test: &LowCurrentTest, grid: &[f64]) -> Result<OcvCurve> {
    let c = sorted_branch("charge", &test.charge)?;
    let d = sorted_branch("discharge", &test.discharge)?;
    let (lo, hi) = test.common_range()?;
    if grid.len() < 2 {
        return Err(Error::domain("grid needs at least two points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::domain("grid must be finite and strictly increasing"));
    }
    let tol = 1e-12;
    if grid[0] < lo - tol || grid[grid.len() - 1] > hi + tol {
        return Err(Error::domain(format!(
            "grid [{}, {}] exceeds the common SOC range [{lo}, {hi}]",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    if grid[0] < -tol || grid[grid.len() - 1] > 1.0 + tol {
        return Err(Error::domain("grid must lie within [0, 1]"));
    }
    let mut pts: Vec<(f64, f64)> = grid
        .iter()
        .map(|&s| (s, (interp(&c, s) + interp(&d, s)) / 2.0))
        .collect();
    if let Some(w) = pts.windows(2).find(|w| !(w[1].1 > w[0].1)) {
        return Err(Error::Identification(format!(
            "averaged OCV is not strictly increasing between SOC {} and {}",
            w[0].0, w[1].0
        )));
    }
    if pts[0].0 > tol {
        let (s0, v0) = pts[0];
        let (s1, v1) = pts[1];
        pts.insert(0, (0.0, v0 - (v1 - v0) / (s1 - s0) * s0));
    } else {
        pts[0].0 = 0.0;
    }
    let n = pts.len();
    if pts[n - 1].0 < 1.0 - tol {
        let (s0, v0) = pts[n - 2];
        let (s1, v1) = pts[n - 1];
        pts.push((1.0, v1 + (v1 - v0) / (s1 - s0) * (1.0 - s1)));
    } else {
        pts[n - 1].0 = 1.0;
    }
    OcvCurve::new(pts).map_err(|e| Error::Identification(e.to_string()))
}

/// Per-segment (m_i, c_i).
pub fn segment_slopes(curve: &OcvCurve) -> Vec<(f64, f64)> {
    curve.segments().iter().map(|s| (s.slope, s.intercept)).collect()
}

/// Search interval for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Bounds on the fitted quantities; time constants rather than capacitances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoBounds {
    pub r_ohm: Bound,
    pub r_a: Bound,
    pub tau_a: Bound,
    pub r_b: Bound,
    pub tau_b: Bound,
}

impl Default for PsoBounds {
    fn default() -> Self {
        Self {
            r_ohm: Bound::new(1e-5, 0.1),
            r_a: Bound::new(1e-5, 0.1),
            tau_a: Bound::new(0.5, 60.0),
            r_b: Bound::new(1e-5, 0.1),
            tau_b: Bound::new(20.0, 3000.0),
        }
    }
}

impl PsoBounds {
    fn as_array(&self) -> [Bound; 5] {
        [self.r_ohm, self.r_a, self.tau_a, self.r_b, self.tau_b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    pub bounds: PsoBounds,
    pub seed: u64,
    /// Capacity in coulombs; not fitted.
    pub capacity_c: f64,
    /// Coulombic efficiency; not fitted.
    pub eta: f64,
    /// Initial SOC; inferred from the first voltage sample when absent.
    pub soc0: Option<f64>,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 50,
            iterations: 200,
            inertia: 0.729,
            c1: 1.494,
            c2: 1.494,
            bounds: PsoBounds::default(),
            seed: 0,
            capacity_c: 58.0 * 3600.0,
            eta: 1.0,
            soc0: None,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::domain("swarm_size must be at least 2"));
        }
        for (name, v) in [("inertia", self.inertia), ("c1", self.c1), ("c2", self.c2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!("{name} must be finite and non-negative")));
            }
        }
        for b in self.bounds.as_array() {
            if !(b.lo > 0.0) || !b.hi.is_finite() || b.lo > b.hi {
                return Err(Error::domain(format!(
                    "bounds must be positive, finite and ordered, got [{}, {}]",
                    b.lo, b.hi
                )));
            }
        }
        if !(self.capacity_c > 0.0) || !self.capacity_c.is_finite() {
            return Err(Error::domain("capacity_c must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain("eta must lie in (0, 1]"));
        }
        if let Some(s) = self.soc0 {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::domain("soc0 must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Global-best objective after initialisation and after each iteration.
    pub history: Vec<f64>,
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    let width = hi - lo;
    for _ in 0..4 {
        if x > hi {
            x = hi - (x - hi);
        } else if x < lo {
            x = lo + (lo - x);
        } else {
            return x;
        }
    }
    x.clamp(lo, lo + width)
}

/// Global-best PSO with inertia over the box `bounds`.
///
/// `initial` fixes the first particles' positions; the rest are uniform in
/// the box. Velocities start at zero. Objective values that are not finite
/// count as +inf.
pub fn pso_minimize<F>(
    objective: F,
    bounds: &[(f64, f64)],
    cfg: &PsoConfig,
    initial: &[Vec<f64>],
) -> Result<PsoOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.len();
    if cfg.swarm_size < 2 {
        return Err(Error::domain("swarm_size must be at least 2"));
    }
    if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi) {
        return Err(Error::domain("search bounds must be finite and ordered"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pos: Vec<Vec<f64>> = (0..cfg.swarm_size)
        .map(|k| match initial.get(k) {
            Some(x) => x
                .iter()
                .zip(bounds)
                .map(|(&v, &(lo, hi))| v.clamp(lo, hi))
                .collect(),
            None => bounds
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                .collect(),
        })
        .collect();
    if pos.iter().any(|x| x.len() != dim) {
        return Err(Error::domain("initial position has the wrong dimension"));
    }
    let mut vel = vec![vec![0.0; dim]; cfg.swarm_size];
    let eval = |pos: &[Vec<f64>]| -> Vec<f64> {
        pos.par_iter()
            .map(|x| {
                let v = objective(x);
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    };
    let mut val = eval(&pos);
    let mut pbest = pos.clone();
    let mut pbest_val = val.clone();
    let mut g = 0;
    for k in 1..cfg.swarm_size {
        if val[k] < val[g] {
            g = k;
        }
    }
    let mut gbest = pos[g].clone();
    let mut gbest_val = val[g];
    let mut history = vec![gbest_val];
    for _ in 0..cfg.iterations {
        for k in 0..cfg.swarm_size {
            for d in 0..dim {
                let (lo, hi) = bounds[d];
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let mut v = cfg.inertia * vel[k][d]
                    + cfg.c1 * r1 * (pbest[k][d] - pos[k][d])
                    + cfg.c2 * r2 * (gbest[d] - pos[k][d]);
                let vmax = hi - lo;
                v = v.clamp(-vmax, vmax);
                let raw = pos[k][d] + v;
                let x = reflect(raw, lo, hi);
                if x != raw {
                    v = -v;
                }
                vel[k][d] = v;
                pos[k][d] = x;
            }
        }
        val = eval(&pos);
        for k in 0..cfg.swarm_size {
            if val[k] < pbest_val[k] {
                pbest_val[k] = val[k];
                pbest[k].clone_from(&pos[k]);
            }
            if val[k] < gbest_val {
                gbest_val = val[k];
                gbest.clone_from(&pos[k]);
            }
        }
        history.push(gbest_val);
    }
    if !gbest_val.is_finite() {
        return Err(Error::Identification("every candidate evaluation failed".into()));
    }
    Ok(PsoOutcome {
        best: gbest,
        best_value: gbest_val,
        history,
    })
}

/// Location of the first current step in a pulse test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseWindow {
    /// Last sample before the step.
    pub onset: usize,
    /// Last sample of the relaxation (inclusive).
    pub end: usize,
    /// ΔV/ΔI across the step.
    pub r_ohm_guess: f64,
}

/// Finds the first |ΔI| above `threshold_a` and the relaxation that follows.
pub fn detect_pulse(pulse: &Loadfile, threshold_a: f64) -> Result<PulseWindow> {
    let s = pulse.samples();
    if !pulse.has_voltage() {
        return Err(Error::domain("pulse loadfile needs a voltage column"));
    }
    let onset = (0..s.len().saturating_sub(1))
        .find(|&k| (s[k + 1].current_a - s[k].current_a).abs() > threshold_a)
        .ok_or_else(|| Error::domain("pulse contains no current step"))?;
    let di = s[onset + 1].current_a - s[onset].current_a;
    let dv = s[onset + 1].voltage_v.unwrap_or(0.0) - s[onset].voltage_v.unwrap_or(0.0);
    let rest = (onset + 1..s.len()).find(|&k| s[k].current_a.abs() <= threshold_a);
    let end = match rest {
        None => s.len() - 1,
        Some(r) => (r..s.len().saturating_sub(1))
            .find(|&k| (s[k + 1].current_a - s[k].current_a).abs() > threshold_a)
            .unwrap_or(s.len() - 1),
    };
    Ok(PulseWindow {
        onset,
        end,
        r_ohm_guess: (dv / di).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseFit {
    pub params: CellParams,
    /// Voltage RMSE over the fit window, volts.
    pub rmse: f64,
    pub soc0: f64,
    pub window: PulseWindow,
    pub history: Vec<f64>,
}

fn params_from(x: &[f64], cfg: &PsoConfig) -> CellParams {
    let (r_ohm, r_a, tau_a, r_b, tau_b) = (x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp(), x[4].exp());
    CellParams {
        r_ohm,
        r_a,
        c_a: tau_a / r_a,
        r_b,
        c_b: tau_b / r_b,
        capacity_c: cfg.capacity_c,
        eta: cfg.eta,
    }
}

fn log_position(p: &CellParams) -> Vec<f64> {
    [p.r_ohm, p.r_a, p.tau_a(), p.r_b, p.tau_b()].iter().map(|v| v.ln()).collect()
}

/// Voltage RMSE of `p` against the measured pulse over the fit window.
pub fn pulse_rmse(
    pulse: &Loadfile,
    ocv: &OcvCurve,
    p: &CellParams,
    soc0: f64,
    window: &PulseWindow,
) -> Result<f64> {
    let traj = simulate(p, ocv, soc0, pulse)?;
    let s = pulse.samples();
    let mut acc = 0.0;
    for k in window.onset..=window.end {
        let d = traj.points[k].voltage - s[k].voltage_v.unwrap_or(f64::NAN);
        acc += d * d;
    }
    Ok((acc / (window.end - window.onset + 1) as f64).sqrt())
}

/// Fits R_ohm, R_a, C_a, R_b, C_b to a pulse test by PSO.
pub fn fit_pulse_pso(pulse: &Loadfile, ocv: &OcvCurve, cfg: &PsoConfig) -> Result<PulseFit> {
    fit_pulse_pso_from(pulse, ocv, cfg, &[])
}

/// As [`fit_pulse_pso`], with explicit starting particles.
pub fn fit_pulse_pso_from(
    pulse: &Loadfile,
    ocv: &OcvCurve,
    cfg: &PsoConfig,
    initial: &[CellParams],
) -> Result<PulseFit> {
    cfg.validate()?;
    let threshold = 0.1 * cfg.capacity_c / 3600.0;
    let window = detect_pulse(pulse, threshold)?;
    let first = pulse.samples()[0];
    let soc0 = match cfg.soc0 {
        Some(s) => s,
        None => ocv.soc_at(first.voltage_v.unwrap_or(0.0) - first.current_a * window.r_ohm_guess),
    };
    let bounds: Vec<(f64, f64)> = cfg
        .bounds
        .as_array()
        .iter()
        .map(|b| (b.lo.ln(), b.hi.ln()))
        .collect();

    let mut starts: Vec<Vec<f64>> = initial.iter().map(log_position).collect();
    if initial.is_empty() {
        let mid: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        let r0 = window.r_ohm_guess.max(cfg.bounds.r_ohm.lo).min(cfg.bounds.r_ohm.hi).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut guess = mid.clone();
        guess[0] = r0;
        starts.push(guess);
        for _ in 1..cfg.swarm_size {
            let mut x: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
            x[0] = r0 + rng.random_range(-0.2..0.2);
            starts.push(x);
        }
    }

    let objective = |x: &[f64]| -> f64 {
        let p = params_from(x, cfg);
        pulse_rmse(pulse, ocv, &p, soc0, &window).unwrap_or(f64::INFINITY)
    };
    let out = pso_minimize(objective, &bounds, cfg, &starts)?;
    let mut params = params_from(&out.best, cfg);
    let b = &cfg.bounds;
    if params.tau_a() > params.tau_b()
        && b.r_a.contains(params.r_b)
        && b.tau_a.contains(params.tau_b())
        && b.r_b.contains(params.r_a)
        && b.tau_b.contains(params.tau_a())
    {
        std::mem::swap(&mut params.r_a, &mut params.r_b);
        std::mem::swap(&mut params.c_a, &mut params.c_b);
    }
    Ok(PulseFit {
        params,
        rmse: out.best_value,
        soc0,
        window,
        history: out.history,
    })
}
