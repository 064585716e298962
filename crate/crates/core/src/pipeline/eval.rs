//! Agreement statistics between a measured pressure waveform and a
//! reference one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampledSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    /// Shift the measured series in time and level so that its minimum in
    /// the first reference cycle meets the reference minimum.
    #[default]
    FirstCycleMinimum,
    None,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-cycle-minimum" => Ok(Self::FirstCycleMinimum),
            "none" => Ok(Self::None),
            _ => Err(Error::invalid(format!(
                "unknown alignment '{s}' (expected first-cycle-minimum or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Share of differences inside the limits of agreement, percent.
    pub pct_within: f64,
}

/// Bland-Altman statistics of `measured - reference` (sample SD, 1.96 SD
/// limits).
pub fn bland_altman(measured: &[f64], reference: &[f64]) -> Result<BlandAltman> {
    if measured.len() != reference.len() {
        return Err(Error::invalid("Bland-Altman inputs differ in length"));
    }
    if measured.len() < 2 {
        return Err(Error::InsufficientBeats {
            valid: measured.len(),
            required: 2,
        });
    }
    let diff: Vec<f64> = measured.iter().zip(reference).map(|(m, r)| m - r).collect();
    let (mean, sd) = crate::pwv::mean_sd(&diff);
    let (lo, hi) = (mean - 1.96 * sd, mean + 1.96 * sd);
    let within = diff.iter().filter(|&&d| d >= lo && d <= hi).count();
    Ok(BlandAltman {
        n: diff.len(),
        mean_diff: mean,
        sd_diff: sd,
        loa_low: lo,
        loa_high: hi,
        pct_within: 100.0 * within as f64 / diff.len() as f64,
    })
}

/// Agreement of one per-beat quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAgreement {
    pub mae: f64,
    pub max_abs_error: f64,
    pub bland_altman: BlandAltman,
}

impl MetricAgreement {
    fn new(measured: &[f64], reference: &[f64]) -> Result<Self> {
        let err: Vec<f64> = measured.iter().zip(reference).map(|(m, r)| (m - r).abs()).collect();
        Ok(Self {
            mae: err.iter().sum::<f64>() / err.len().max(1) as f64,
            max_abs_error: err.iter().cloned().fold(0.0, f64::max),
            bland_altman: bland_altman(measured, reference)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatAgreement {
    pub n_beats: usize,
    pub dbp: MetricAgreement,
    pub map: MetricAgreement,
    pub sbp: MetricAgreement,
    pub pp: MetricAgreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub alignment: Alignment,
    /// Added to measured times before comparison, s.
    pub time_shift_s: f64,
    /// Added to measured values before comparison, mmHg.
    #[serde(rename = "value_offset_mmHg")]
    pub value_offset_mmhg: f64,
    pub n_samples: usize,
    pub rmse: f64,
    pub pearson_r: f64,
    pub mae: f64,
    pub sd_of_error: f64,
    /// Per-beat mean arterial pressure.
    pub bland_altman: BlandAltman,
    pub beats: BeatAgreement,
}

pub fn pearson_r(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 && sbb == 0.0 {
        1.0
    } else if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Linear interpolation of `s` at time `t`, or `None` outside its support.
fn value_at(s: &SampledSeries, t: f64) -> Option<f64> {
    let x = (t - s.t0_s) * s.rate_hz;
    let last = (s.len() - 1) as f64;
    if x < -1e-9 || x > last + 1e-9 {
        return None;
    }
    let x = x.clamp(0.0, last);
    let i = (x.floor() as usize).min(s.len().saturating_sub(2));
    let f = x - i as f64;
    Some(match s.values.get(i + 1) {
        Some(&next) => s.values[i] * (1.0 - f) + next * f,
        None => s.values[i],
    })
}

/// Time and value of the minimum of `s` within `[lo, hi]` s, with a
/// parabolic refinement of the time.
fn minimum_in(s: &SampledSeries, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let a = ((lo - s.t0_s) * s.rate_hz).ceil().max(0.0) as usize;
    let b = (((hi - s.t0_s) * s.rate_hz).floor().max(-1.0) + 1.0) as usize;
    let b = b.min(s.len());
    if a >= b {
        return None;
    }
    let i = (a..b).min_by(|&i, &j| s.values[i].total_cmp(&s.values[j]).then(i.cmp(&j)))?;
    let mut off = 0.0;
    if i > 0 && i + 1 < s.len() {
        let (l, m, r) = (s.values[i - 1], s.values[i], s.values[i + 1]);
        let den = l - 2.0 * m + r;
        if den > 0.0 {
            off = (0.5 * (l - r) / den).clamp(-0.5, 0.5);
        }
    }
    Some((s.time_of(i) + off / s.rate_hz, s.values[i]))
}

fn median_spacing(onsets: &[f64]) -> Option<f64> {
    let mut d: Vec<f64> = onsets.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

struct BeatValues {
    dbp: f64,
    map: f64,
    sbp: f64,
}

fn beat_values(v: &[f64]) -> BeatValues {
    BeatValues {
        dbp: v.iter().cloned().fold(f64::INFINITY, f64::min),
        sbp: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        map: v.iter().sum::<f64>() / v.len() as f64,
    }
}

/// Compares `measured` with `reference` on the reference grid.
///
/// Beats are delimited by `reference_onsets_s`; only beats fully covered by
/// both series count, and at least two are required.
pub fn evaluate(
    measured: &SampledSeries,
    reference: &SampledSeries,
    reference_onsets_s: &[f64],
    alignment: Alignment,
) -> Result<EvalReport> {
    if measured.len() < 2 || reference.len() < 2 {
        return Err(Error::EmptySeries);
    }
    let (shift, offset) = match alignment {
        Alignment::None => (0.0, 0.0),
        Alignment::FirstCycleMinimum => {
            let period = median_spacing(reference_onsets_s).ok_or(Error::InsufficientBeats {
                valid: reference_onsets_s.len().saturating_sub(1),
                required: 2,
            })?;
            let first = reference_onsets_s[0];
            let (lo, hi) = (first - period / 2.0, first + period / 2.0);
            let (tr, vr) = minimum_in(reference, lo, hi).ok_or(Error::NoBeatDetected)?;
            let (tm, vm) = minimum_in(measured, lo, hi).ok_or(Error::NoBeatDetected)?;
            (tr - tm, vr - vm)
        }
    };
    let aligned = SampledSeries {
        values: measured.values.iter().map(|v| v + offset).collect(),
        rate_hz: measured.rate_hz,
        t0_s: measured.t0_s + shift,
    };

    let mut m = Vec::with_capacity(reference.len());
    let mut r = Vec::with_capacity(reference.len());
    let mut idx = Vec::with_capacity(reference.len());
    for (i, &v) in reference.values.iter().enumerate() {
        if let Some(x) = value_at(&aligned, reference.time_of(i)) {
            m.push(x);
            r.push(v);
            idx.push(i);
        }
    }
    if m.len() < 2 {
        return Err(Error::invalid("measured and reference series do not overlap"));
    }
    let err: Vec<f64> = m.iter().zip(&r).map(|(a, b)| a - b).collect();
    let n = err.len() as f64;
    let rmse = (err.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mae = err.iter().map(|e| e.abs()).sum::<f64>() / n;
    let (_, sd_of_error) = crate::pwv::mean_sd(&err);

    // Beats on the common grid.
    let (first_idx, last_idx) = (idx[0], *idx.last().unwrap());
    let mut meas_beats = Vec::new();
    let mut ref_beats = Vec::new();
    for w in reference_onsets_s.windows(2) {
        let a = ((w[0] - reference.t0_s) * reference.rate_hz).round();
        let b = ((w[1] - reference.t0_s) * reference.rate_hz).round();
        if a < first_idx as f64 || b > (last_idx + 1) as f64 || b - a < 2.0 {
            continue;
        }
        let (a, b) = (a as usize - first_idx, b as usize - first_idx);
        meas_beats.push(beat_values(&m[a..b]));
        ref_beats.push(beat_values(&r[a..b]));
    }
    if meas_beats.len() < 2 {
        return Err(Error::InsufficientBeats {
            valid: meas_beats.len(),
            required: 2,
        });
    }
    let col = |b: &[BeatValues], f: fn(&BeatValues) -> f64| b.iter().map(f).collect::<Vec<f64>>();
    let agreement = |f: fn(&BeatValues) -> f64| MetricAgreement::new(&col(&meas_beats, f), &col(&ref_beats, f));
    let map = agreement(|b| b.map)?;
    let beats = BeatAgreement {
        n_beats: meas_beats.len(),
        dbp: agreement(|b| b.dbp)?,
        map,
        sbp: agreement(|b| b.sbp)?,
        pp: agreement(|b| b.sbp - b.dbp)?,
    };
    Ok(EvalReport {
        alignment,
        time_shift_s: shift,
        value_offset_mmhg: offset,
        n_samples: err.len(),
        rmse,
        pearson_r: pearson_r(&m, &r),
        mae,
        sd_of_error,
        bland_altman: map.bland_altman,
        beats,
    })
}
