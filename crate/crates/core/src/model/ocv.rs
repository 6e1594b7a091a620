//! Piecewise-linear SOC → OCV map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tabulated point of the OCV curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub soc: f64,
    pub ocv: f64,
}

/// `V_oc(s) = slope·s + intercept` on one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    fn through(lo: Breakpoint, hi: Breakpoint) -> Self {
        let ds = hi.soc - lo.soc;
        Segment {
            slope: (hi.ocv - lo.ocv) / ds,
            intercept: (lo.ocv * hi.soc - hi.ocv * lo.soc) / ds,
        }
    }

    pub fn eval(&self, soc: f64) -> f64 {
        self.slope * soc + self.intercept
    }
}

/// Monotone piecewise-linear OCV curve covering SOC ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OcvCurve {
    breakpoints: Vec<Breakpoint>,
    #[serde(skip)]
    segments: Vec<Segment>,
}

#[derive(Deserialize)]
struct RawCurve {
    breakpoints: Vec<Breakpoint>,
}

impl<'de> Deserialize<'de> for OcvCurve {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawCurve::deserialize(d)?;
        OcvCurve::from_breakpoints(raw.breakpoints).map_err(serde::de::Error::custom)
    }
}

const COVER_TOL: f64 = 1e-12;

impl OcvCurve {
    /// Builds a curve from `(soc, ocv)` pairs.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_breakpoints(
            points
                .into_iter()
                .map(|(soc, ocv)| Breakpoint { soc, ocv })
                .collect(),
        )
    }

    pub fn from_breakpoints(breakpoints: Vec<Breakpoint>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::domain("OCV curve needs at least two breakpoints"));
        }
        if breakpoints
            .iter()
            .any(|b| !b.soc.is_finite() || !b.ocv.is_finite())
        {
            return Err(Error::domain("OCV breakpoints must be finite"));
        }
        for w in breakpoints.windows(2) {
            if w[1].soc <= w[0].soc {
                return Err(Error::domain(format!(
                    "OCV breakpoint SOC values must be strictly increasing ({} then {})",
                    w[0].soc, w[1].soc
                )));
            }
            if w[1].ocv <= w[0].ocv {
                return Err(Error::domain(format!(
                    "OCV must be strictly increasing in SOC ({} V at {} then {} V at {})",
                    w[0].ocv, w[0].soc, w[1].ocv, w[1].soc
                )));
            }
        }
        let first = breakpoints[0].soc;
        let last = breakpoints[breakpoints.len() - 1].soc;
        if first.abs() > COVER_TOL || (last - 1.0).abs() > COVER_TOL {
            return Err(Error::domain(format!(
                "OCV breakpoints must cover [0, 1], got [{first}, {last}]"
            )));
        }
        let segments = breakpoints
            .windows(2)
            .map(|w| Segment::through(w[0], w[1]))
            .collect();
        Ok(Self {
            breakpoints,
            segments,
        })
    }

    /// Tabulates `f` on a uniform grid of `n` breakpoints.
    pub fn tabulate(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("need at least two breakpoints"));
        }
        let pts = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                (s, f(s))
            })
            .collect();
        Self::new(pts)
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Mean of the segment slopes.
    pub fn mean_slope(&self) -> f64 {
        self.segments.iter().map(|s| s.slope).sum::<f64>() / self.segments.len() as f64
    }

    /// Index of the segment containing `soc`, clamped to the end segments
    /// for values outside [0, 1].
    pub fn segment_index(&self, soc: f64) -> usize {
        // number of interior breakpoints <= soc
        let interior = &self.breakpoints[1..self.breakpoints.len() - 1];
        interior.partition_point(|b| b.soc <= soc)
    }

    pub fn segment_at(&self, soc: f64) -> Result<Segment> {
        check_soc(soc)?;
        Ok(self.segments[self.segment_index(soc)])
    }

    /// OCV at `soc ∈ [0, 1]`; exact at breakpoints.
    pub fn eval(&self, soc: f64) -> Result<f64> {
        check_soc(soc)?;
        Ok(self.eval_extended(soc))
    }

    /// Like [`eval`](Self::eval) but extends the end segments linearly
    /// outside [0, 1]. Estimators use this since their internal SOC is not
    /// clamped.
    pub fn eval_extended(&self, soc: f64) -> f64 {
        let k = self.segment_index(soc);
        let (lo, hi) = (self.breakpoints[k], self.breakpoints[k + 1]);
        if soc == lo.soc {
            return lo.ocv;
        }
        if soc == hi.soc {
            return hi.ocv;
        }
        // point-slope form of m·s + c; avoids cancellation on short segments
        lo.ocv + self.segments[k].slope * (soc - lo.soc)
    }

    /// Slope of the segment used at `soc` (end segments outside [0, 1]).
    pub fn slope_extended(&self, soc: f64) -> f64 {
        self.segments[self.segment_index(soc)].slope
    }

    /// Inverse map, clamped to [0, 1].
    pub fn soc_at(&self, ocv: f64) -> f64 {
        let bps = &self.breakpoints;
        if ocv <= bps[0].ocv {
            return 0.0;
        }
        if ocv >= bps[bps.len() - 1].ocv {
            return 1.0;
        }
        let k = bps.partition_point(|b| b.ocv <= ocv) - 1;
        let (lo, hi) = (bps[k], bps[k + 1]);
        lo.soc + (ocv - lo.ocv) * (hi.soc - lo.soc) / (hi.ocv - lo.ocv)
    }
}

fn check_soc(soc: f64) -> Result<()> {
    if (0.0..=1.0).contains(&soc) {
        Ok(())
    } else {
        Err(Error::domain(format!("SOC {soc} outside [0, 1]")))
    }
}
