//! Timestamped current/voltage/temperature records and their CSV form.
//!
//! Header is `time_s,current_a[,voltage_v][,temp_c]`; optional columns keep
//! that order. Discharge currents are negative.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadfileSample {
    pub time_s: f64,
    pub current_a: f64,
    pub voltage_v: Option<f64>,
    pub temp_c: Option<f64>,
}

impl LoadfileSample {
    pub fn new(time_s: f64, current_a: f64) -> Self {
        Self {
            time_s,
            current_a,
            voltage_v: None,
            temp_c: None,
        }
    }
}

/// A validated drive cycle: strictly increasing, finite, column-consistent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Loadfile {
    samples: Vec<LoadfileSample>,
}

impl Loadfile {
    pub fn new(samples: Vec<LoadfileSample>) -> Result<Self> {
        for (k, s) in samples.iter().enumerate() {
            let finite = s.time_s.is_finite()
                && s.current_a.is_finite()
                && s.voltage_v.is_none_or(f64::is_finite)
                && s.temp_c.is_none_or(f64::is_finite);
            if !finite {
                return Err(Error::format(Some(k + 1), "non-finite value"));
            }
            if k > 0 {
                let prev = &samples[k - 1];
                if s.time_s <= prev.time_s {
                    return Err(Error::format(
                        Some(k + 1),
                        format!(
                            "timestamps must be strictly increasing ({} after {})",
                            s.time_s, prev.time_s
                        ),
                    ));
                }
                if s.voltage_v.is_some() != prev.voltage_v.is_some()
                    || s.temp_c.is_some() != prev.temp_c.is_some()
                {
                    return Err(Error::format(Some(k + 1), "inconsistent optional columns"));
                }
            }
        }
        Ok(Self { samples })
    }

    /// Current-only profile from `(t, i)` pairs.
    pub fn from_current(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Self::new(
            points
                .into_iter()
                .map(|(t, i)| LoadfileSample::new(t, i))
                .collect(),
        )
    }

    pub fn samples(&self) -> &[LoadfileSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_voltage(&self) -> bool {
        self.samples.first().is_some_and(|s| s.voltage_v.is_some())
    }

    pub fn has_temperature(&self) -> bool {
        self.samples.first().is_some_and(|s| s.temp_c.is_some())
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.time_s - a.time_s,
            _ => 0.0,
        }
    }

    /// Step to the next sample; the last sample reuses the previous step.
    pub fn dt_at(&self, k: usize) -> f64 {
        let n = self.samples.len();
        if k + 1 < n {
            self.samples[k + 1].time_s - self.samples[k].time_s
        } else if n >= 2 {
            self.samples[n - 1].time_s - self.samples[n - 2].time_s
        } else {
            1.0
        }
    }

    /// Replaces (or adds) the voltage column.
    pub fn with_voltage(&self, volts: &[f64]) -> Result<Self> {
        if volts.len() != self.samples.len() {
            return Err(Error::domain(format!(
                "voltage column has {} values for {} samples",
                volts.len(),
                self.samples.len()
            )));
        }
        Self::new(
            self.samples
                .iter()
                .zip(volts)
                .map(|(s, v)| LoadfileSample {
                    voltage_v: Some(*v),
                    ..*s
                })
                .collect(),
        )
    }

    /// Applies `f` to every sample in order and re-validates the result.
    pub(crate) fn map_samples(&self, mut f: impl FnMut(&LoadfileSample) -> LoadfileSample) -> Result<Self> {
        Self::new(self.samples.iter().map(&mut f).collect())
    }

    /// The same profile repeated `times` times back to back.
    pub fn repeated(&self, times: usize) -> Result<Self> {
        if self.samples.is_empty() || times <= 1 {
            return Ok(self.clone());
        }
        let period = self.duration() + self.dt_at(self.samples.len() - 1);
        let mut out = Vec::with_capacity(self.samples.len() * times);
        for r in 0..times {
            let shift = period * r as f64;
            out.extend(self.samples.iter().map(|s| LoadfileSample {
                time_s: s.time_s + shift,
                ..*s
            }));
        }
        Self::new(out)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::format(Some(1), e.to_string()))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        let (has_v, has_t) = match cols.as_slice() {
            ["time_s", "current_a"] => (false, false),
            ["time_s", "current_a", "voltage_v"] => (true, false),
            ["time_s", "current_a", "temp_c"] => (false, true),
            ["time_s", "current_a", "voltage_v", "temp_c"] => (true, true),
            _ => {
                return Err(Error::format(
                    Some(1),
                    format!(
                        "expected header time_s,current_a[,voltage_v][,temp_c], got {}",
                        cols.join(",")
                    ),
                ))
            }
        };
        let mut samples = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::format(Some(line), e.to_string()))?;
            if rec.len() != cols.len() {
                return Err(Error::format(
                    Some(line),
                    format!("expected {} fields, got {}", cols.len(), rec.len()),
                ));
            }
            let field = |idx: usize, name: &str| -> Result<f64> {
                let raw = &rec[idx];
                let v: f64 = raw
                    .parse()
                    .map_err(|_| Error::format(Some(line), format!("{name}: cannot parse {raw:?}")))?;
                if !v.is_finite() {
                    return Err(Error::format(Some(line), format!("{name}: non-finite value")));
                }
                Ok(v)
            };
            let time_s = field(0, "time_s")?;
            let current_a = field(1, "current_a")?;
            let voltage_v = if has_v { Some(field(2, "voltage_v")?) } else { None };
            let temp_c = if has_t {
                Some(field(if has_v { 3 } else { 2 }, "temp_c")?)
            } else {
                None
            };
            if let Some(prev) = samples.last() {
                let prev: &LoadfileSample = prev;
                if time_s <= prev.time_s {
                    return Err(Error::format(
                        Some(line),
                        format!("timestamps must be strictly increasing ({time_s} after {})", prev.time_s),
                    ));
                }
            }
            samples.push(LoadfileSample {
                time_s,
                current_a,
                voltage_v,
                temp_c,
            });
        }
        Self::new(samples)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (has_v, has_t) = (self.has_voltage(), self.has_temperature());
        let mut header = String::from("time_s,current_a");
        if has_v {
            header.push_str(",voltage_v");
        }
        if has_t {
            header.push_str(",temp_c");
        }
        writeln!(w, "{header}")?;
        for s in &self.samples {
            write!(w, "{},{}", s.time_s, s.current_a)?;
            if let Some(v) = s.voltage_v {
                write!(w, ",{v}")?;
            }
            if let Some(t) = s.temp_c {
                write!(w, ",{t}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Loadfile> {
        Loadfile::read_csv(text.as_bytes())
    }

    #[test]
    fn minimal_file() {
        let lf = parse("time_s,current_a\n0,1.5\n1,-2\n").unwrap();
        assert_eq!(lf.len(), 2);
        assert_eq!(lf.samples()[1].current_a, -2.0);
        assert!(!lf.has_voltage());
    }

    #[test]
    fn all_columns() {
        let lf = parse("time_s,current_a,voltage_v,temp_c\n0,1,3.7,25\n0.5,1,3.71,25.1\n").unwrap();
        assert!(lf.has_voltage() && lf.has_temperature());
        assert_eq!(lf.samples()[1].temp_c, Some(25.1));
    }

    #[test]
    fn duplicate_timestamp_names_row() {
        let err = parse("time_s,current_a\n0,1\n1,1\n1,2\n").unwrap_err();
        match err {
            Error::Format { row, .. } => assert_eq!(row, Some(4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse("time,current_a\n0,1\n").is_err());
        assert!(parse("time_s,voltage_v\n0,1\n").is_err());
        assert!(parse("time_s,current_a\n0,NaN\n").is_err());
        assert!(parse("time_s,current_a\n0,inf\n").is_err());
        assert!(parse("time_s,current_a\n0,1,2\n").is_err());
        assert!(parse("time_s,current_a\n0,abc\n").is_err());
        assert!(parse("time_s,current_a\n0,1\n-1,1\n").is_err());
    }

    #[test]
    fn dt_convention() {
        let lf = Loadfile::from_current([(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)]).unwrap();
        assert_eq!(lf.dt_at(0), 1.0);
        assert_eq!(lf.dt_at(1), 2.0);
        assert_eq!(lf.dt_at(2), 2.0);
    }

    #[test]
    fn repeated_keeps_spacing() {
        let lf = Loadfile::from_current([(0.0, 1.0), (1.0, 2.0)]).unwrap();
        let r = lf.repeated(3).unwrap();
        let t: Vec<f64> = r.samples().iter().map(|s| s.time_s).collect();
        assert_eq!(t, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }
}
