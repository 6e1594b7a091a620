//! Synthetic drive-cycle current generators.
//!
//! Currents are fractions of a peak value; negative fractions discharge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loadfile::Loadfile;

/// One 360 s DST period as (duration s, fraction of peak).
const DST_PATTERN: [(f64, f64); 20] = [
    (16.0, 0.0),
    (28.0, -0.125),
    (12.0, -0.25),
    (8.0, 0.125),
    (16.0, 0.0),
    (24.0, -0.125),
    (12.0, -0.25),
    (8.0, 0.125),
    (16.0, 0.0),
    (24.0, -0.125),
    (12.0, -0.25),
    (8.0, 0.125),
    (16.0, 0.0),
    (36.0, -0.125),
    (8.0, -1.0),
    (24.0, -0.625),
    (8.0, 0.25),
    (32.0, -0.25),
    (8.0, 0.5),
    (44.0, 0.0),
];

pub const FUDS_PERIOD_S: f64 = 1372.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Dst,
    Fuds,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dst" => Ok(Self::Dst),
            "fuds" => Ok(Self::Fuds),
            _ => Err(Error::domain(format!("unknown profile '{s}' (expected dst or fuds)"))),
        }
    }
}

/// FUDS-like period: piecewise-constant segments of 2 to 30 s, mostly
/// discharge with short regenerative spikes, rescaled so the period mean
/// matches the DST mean of -0.125.
fn fuds_pattern() -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x000F_0D5);
    let mut segs = Vec::new();
    let mut t = 0.0;
    while t < FUDS_PERIOD_S {
        let d = f64::from(rng.random_range(2u32..=30)).min(FUDS_PERIOD_S - t);
        let u: f64 = rng.random();
        let level = if u < 0.15 {
            0.0
        } else if u < 0.35 {
            rng.random_range(0.05..0.5)
        } else if u < 0.45 {
            -rng.random_range(0.6..1.0)
        } else {
            -rng.random_range(0.02..0.4)
        };
        segs.push((d, level));
        t += d;
    }
    let mean = segs.iter().map(|(d, l)| d * l).sum::<f64>() / FUDS_PERIOD_S;
    let k = -0.125 / mean;
    segs.into_iter()
        .map(|(d, l)| (d, (l * k).clamp(-1.0, 1.0)))
        .collect()
}

fn level_at(pattern: &[(f64, f64)], period: f64, t: f64) -> f64 {
    let mut tt = t.rem_euclid(period);
    for &(d, l) in pattern {
        if tt < d {
            return l;
        }
        tt -= d;
    }
    pattern[pattern.len() - 1].1
}

/// Repeats the chosen cycle for `duration_s` at step `dt`, scaled so that
/// fraction 1 equals `peak_a` amperes.
pub fn generate_profile(kind: ProfileKind, duration_s: f64, dt: f64, peak_a: f64) -> Result<Loadfile> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("dt must be > 0, got {dt}")));
    }
    if !(duration_s >= dt) || !duration_s.is_finite() {
        return Err(Error::domain("duration must be at least one step"));
    }
    if !peak_a.is_finite() || peak_a < 0.0 {
        return Err(Error::domain("peak current must be finite and non-negative"));
    }
    let (pattern, period) = match kind {
        ProfileKind::Dst => (DST_PATTERN.to_vec(), 360.0),
        ProfileKind::Fuds => (fuds_pattern(), FUDS_PERIOD_S),
    };
    let n = (duration_s / dt).round() as usize;
    Loadfile::from_current((0..n).map(|k| {
        let t = k as f64 * dt;
        (t, peak_a * level_at(&pattern, period, t))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dst_period_is_360_s_with_eighth_peak_mean() {
        let total: f64 = DST_PATTERN.iter().map(|p| p.0).sum();
        assert_eq!(total, 360.0);
        let lf = generate_profile(ProfileKind::Dst, 720.0, 1.0, 100.0).unwrap();
        let mean = lf.samples().iter().map(|s| s.current_a).sum::<f64>() / lf.len() as f64;
        assert!((mean + 12.5).abs() < 1e-9);
        assert_eq!(lf.samples()[0].current_a, 0.0);
        assert_eq!(lf.samples()[16].current_a, -12.5);
    }

    #[test]
    fn fuds_is_fixed_and_balanced() {
        let a = generate_profile(ProfileKind::Fuds, FUDS_PERIOD_S, 1.0, 100.0).unwrap();
        let b = generate_profile(ProfileKind::Fuds, FUDS_PERIOD_S, 1.0, 100.0).unwrap();
        assert_eq!(a, b);
        let mean = a.samples().iter().map(|s| s.current_a).sum::<f64>() / a.len() as f64;
        assert!((mean + 12.5).abs() < 0.5, "{mean}");
        assert!(a.samples().iter().all(|s| s.current_a.abs() <= 100.0));
    }
}
