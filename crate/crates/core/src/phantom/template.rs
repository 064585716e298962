use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampledSeries;

/// Names accepted by [`PressureTemplate::named`].
pub const TEMPLATE_NAMES: &[&str] = &["carotid", "sine"];

const NORMALIZE_GRID: usize = 20_000;

/// Either a built-in template name or one beat of tabulated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaveformSpec {
    Named(String),
    Table(Vec<f64>),
}

impl Default for WaveformSpec {
    fn default() -> Self {
        WaveformSpec::Named("carotid".into())
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Carotid,
    Sine,
    /// Periodic Catmull-Rom through one beat of samples.
    Table(Vec<f64>),
}

impl Shape {
    fn raw(&self, phase: f64) -> f64 {
        match self {
            Shape::Carotid => carotid_raw(phase),
            Shape::Sine => 0.5 * (1.0 - (2.0 * PI * phase).cos()),
            Shape::Table(t) => catmull_rom_periodic(t, phase),
        }
    }
}

/// One-beat pressure shape normalized to `[0, 1]`, minimum at phase 0.
#[derive(Debug, Clone)]
pub struct PressureTemplate {
    shape: Shape,
    phase_offset: f64,
    lo: f64,
    hi: f64,
}

impl PressureTemplate {
    pub fn named(name: &str) -> Result<Self> {
        let shape = match name {
            "carotid" => Shape::Carotid,
            "sine" => Shape::Sine,
            _ => {
                return Err(Error::UnknownTemplate {
                    name: name.to_string(),
                    available: TEMPLATE_NAMES.join(", "),
                })
            }
        };
        Ok(Self::normalized(shape))
    }

    pub fn table(samples: &[f64]) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::invalid("a tabulated beat needs at least 4 samples"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated beat contains non-finite values"));
        }
        Ok(Self::normalized(Shape::Table(samples.to_vec())))
    }

    pub fn from_spec(spec: &WaveformSpec) -> Result<Self> {
        match spec {
            WaveformSpec::Named(n) => Self::named(n),
            WaveformSpec::Table(t) => Self::table(t),
        }
    }

    fn normalized(shape: Shape) -> Self {
        let (mut lo, mut hi, mut arg_lo) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for i in 0..NORMALIZE_GRID {
            let p = i as f64 / NORMALIZE_GRID as f64;
            let v = shape.raw(p);
            if v < lo {
                lo = v;
                arg_lo = p;
            }
            hi = hi.max(v);
        }
        Self {
            shape,
            phase_offset: arg_lo,
            lo,
            hi,
        }
    }

    /// Normalized level in `[0, 1]` at beat phase `phase` (cycles).
    pub fn level(&self, phase: f64) -> f64 {
        if self.hi - self.lo <= 0.0 {
            return 0.0;
        }
        let p = (phase + self.phase_offset).rem_euclid(1.0);
        ((self.shape.raw(p) - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    pub fn pressure_at(&self, t_s: f64, dbp_mmhg: f64, pp_mmhg: f64, heart_rate_hz: f64) -> f64 {
        dbp_mmhg + pp_mmhg * self.level(t_s * heart_rate_hz)
    }
}

fn gauss_periodic(p: f64, mu: f64, sigma: f64) -> f64 {
    (-2..=2)
        .map(|n| {
            let z = (p - n as f64 - mu) / sigma;
            (-0.5 * z * z).exp()
        })
        .sum()
}

/// Carotid-like beat: a periodic sawtooth (linear diastolic run-off closed
/// by an erf upstroke) plus a systolic peak, a late-systolic shoulder and a
/// diastolic wave that leaves a dicrotic notch between them.
fn carotid_raw(phase: f64) -> f64 {
    let p = phase.rem_euclid(1.0);
    let step: f64 = (-3..=3)
        .map(|n| {
            let q = p - n as f64;
            let smooth = 0.5 * (1.0 + libm::erf((q - 0.06) / (SQRT_2 * 0.02)));
            smooth - if q >= 0.0 { 1.0 } else { 0.0 }
        })
        .sum();
    let sawtooth = step - p;
    0.55 * sawtooth
        + gauss_periodic(p, 0.14, 0.04)
        + 0.45 * gauss_periodic(p, 0.27, 0.05)
        + 0.22 * gauss_periodic(p, 0.45, 0.045)
}

fn catmull_rom_periodic(table: &[f64], phase: f64) -> f64 {
    let n = table.len();
    let x = phase.rem_euclid(1.0) * n as f64;
    let i = (x.floor() as usize) % n;
    let t = x - x.floor();
    let at = |k: isize| table[(i as isize + k).rem_euclid(n as isize) as usize];
    let (p0, p1, p2, p3) = (at(-1), at(0), at(1), at(2));
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * (2.0 * p1
        + (p2 - p0) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3)
}

/// Samples a periodic pressure waveform at `rate_hz` for `duration_s`.
///
/// Each beat starts at its minimum (`dbp`) and peaks at `dbp + pp`.
pub fn pressure_template(
    spec: &WaveformSpec,
    dbp_mmhg: f64,
    pp_mmhg: f64,
    heart_rate_hz: f64,
    duration_s: f64,
    rate_hz: f64,
) -> Result<SampledSeries> {
    let template = PressureTemplate::from_spec(spec)?;
    if pp_mmhg < 0.0 {
        return Err(Error::invalid(format!("pulse pressure must be non-negative, got {pp_mmhg}")));
    }
    if !(heart_rate_hz > 0.0) {
        return Err(Error::invalid("heart rate must be positive"));
    }
    if duration_s * heart_rate_hz < 1.0 - 1e-9 {
        return Err(Error::invalid("duration must cover at least one beat"));
    }
    let n = (duration_s * rate_hz).round() as usize;
    let values = (0..n)
        .map(|i| template.pressure_at(i as f64 / rate_hz, dbp_mmhg, pp_mmhg, heart_rate_hz))
        .collect();
    SampledSeries::new(values, rate_hz, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beat_extrema(s: &SampledSeries, hr: f64) -> Vec<(f64, f64)> {
        let per = (s.rate_hz / hr).round() as usize;
        s.values
            .chunks_exact(per)
            .map(|b| {
                (
                    b.iter().cloned().fold(f64::INFINITY, f64::min),
                    b.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            })
            .collect()
    }

    #[test]
    fn carotid_extrema() {
        let s = pressure_template(&WaveformSpec::default(), 63.0, 40.0, 1.0, 10.0, 2000.0).unwrap();
        let ex = beat_extrema(&s, 1.0);
        assert_eq!(ex.len(), 10);
        for (lo, hi) in ex {
            assert!((lo - 63.0).abs() < 0.1);
            assert!((hi - 103.0).abs() < 0.1);
        }
        // Beat starts at its minimum.
        assert!((s.values[0] - 63.0).abs() < 0.01);
    }

    #[test]
    fn carotid_has_a_dicrotic_notch() {
        let s = pressure_template(&WaveformSpec::default(), 0.0, 1.0, 1.0, 1.0, 2000.0).unwrap();
        let v = &s.values;
        let interior_minima = (1..v.len() - 1).filter(|&i| v[i] < v[i - 1] && v[i] < v[i + 1]).count();
        assert!(interior_minima >= 1);
    }

    #[test]
    fn zero_pp_is_flat() {
        let s = pressure_template(&WaveformSpec::default(), 80.0, 0.0, 1.2, 3.0, 500.0).unwrap();
        assert!(s.values.iter().all(|&v| v == 80.0));
    }

    #[test]
    fn table_extrema_follow_table() {
        let table = vec![70.0, 72.0, 95.0, 118.0, 110.0, 96.0, 99.0, 90.0, 82.0, 76.0, 72.5];
        let (lo, hi) = (70.0, 118.0);
        let s = pressure_template(&WaveformSpec::Table(table), lo, hi - lo, 1.0, 4.0, 2000.0).unwrap();
        for (bmin, bmax) in beat_extrema(&s, 1.0) {
            assert!((bmin - lo).abs() < 0.1, "{bmin}");
            assert!((bmax - hi).abs() < 0.1, "{bmax}");
        }
    }

    #[test]
    fn unknown_template_lists_names() {
        let err = pressure_template(&WaveformSpec::Named("aortic".into()), 60.0, 40.0, 1.0, 2.0, 100.0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("carotid") && err.contains("sine"), "{err}");
    }

    #[test]
    fn smooth_at_beat_boundary() {
        let t = PressureTemplate::named("carotid").unwrap();
        let h = 1e-5;
        let left = (t.level(1.0 - h) - t.level(1.0 - 2.0 * h)) / h;
        let right = (t.level(1.0 + 2.0 * h) - t.level(1.0 + h)) / h;
        assert!((left - right).abs() < 1e-2, "{left} {right}");
    }
}
