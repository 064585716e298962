//! Diameter to pressure conversion and beat-level hemodynamics.
//!
//! Pressure follows the elastic-tube relation
//! `P(t) = DBP + 2 rho PWV^2 ln(D(t) / Dd)`, evaluated in Pa and reported in
//! mmHg.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rf::RfStreamHeader;
use crate::signal::{envelope_of, SampledSeries};
use crate::wall::WallRegion;

pub const MMHG_TO_PA: f64 = 133.322;
/// Blood density, kg/m^3.
pub const RHO_BLOOD: f64 = 1060.0;
/// Leading-edge threshold for the end-diastolic diameter, as a fraction of
/// the local envelope peak.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.3;
/// Fractions above this sit on the flat top of the echo envelope and give
/// no usable edge.
pub const MAX_EDGE_THRESHOLD: f64 = 0.9;

/// Absolute lumen diameter over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterWaveform {
    pub series: SampledSeries,
    pub d0_mm: f64,
    pub beat_onsets_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureWaveform {
    pub series: SampledSeries,
    pub diameter: SampledSeries,
    pub dd_mm: f64,
    #[serde(rename = "dbp_input_mmHg")]
    pub dbp_input_mmhg: f64,
    pub pwv_used_mps: f64,
    pub rho_kg_m3: f64,
    pub beat_onsets_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatRecord {
    pub onset_s: f64,
    #[serde(rename = "dbp_mmHg")]
    pub dbp_mmhg: f64,
    #[serde(rename = "map_mmHg")]
    pub map_mmhg: f64,
    #[serde(rename = "sbp_mmHg")]
    pub sbp_mmhg: f64,
    #[serde(rename = "pp_mmHg")]
    pub pp_mmhg: f64,
    /// `(MAP - DBP) / PP`; absent for a beat without pulse pressure.
    pub ff: Option<f64>,
    pub ds_mm: f64,
    pub dd_mm: f64,
    pub flagged: bool,
}

/// Leading edge of one wall echo, in raw samples: where the envelope last
/// rises through `threshold * peak` before the peak.
fn leading_edge(env: &[f64], center: usize, reach: usize, threshold: f64, wall: &'static str) -> Result<f64> {
    let n = env.len();
    let lo = center.saturating_sub(reach);
    let peak_lo = center.saturating_sub(reach / 2);
    let peak_hi = (center + reach / 2 + 1).min(n);
    if peak_lo >= peak_hi {
        return Err(Error::OutOfBounds {
            lo: peak_lo as i64,
            hi: peak_hi as i64,
            len: n,
        });
    }
    let peak_idx = (peak_lo..peak_hi)
        .max_by(|&a, &b| env[a].total_cmp(&env[b]).then(b.cmp(&a)))
        .unwrap();
    let level = threshold * env[peak_idx];
    let mut i = peak_idx;
    while i > lo {
        if env[i - 1] < level {
            let (a, b) = (env[i - 1], env[i]);
            return Ok((i - 1) as f64 + (level - a) / (b - a));
        }
        i -= 1;
    }
    Err(Error::ThresholdNotCrossed { wall })
}

/// End-diastolic inner diameter (mm) from the leading edges of the two wall
/// echoes in a single frame.
pub fn end_diastolic_diameter(
    frame: &[i16],
    region: &WallRegion,
    header: &RfStreamHeader,
    threshold_frac: f64,
) -> Result<f64> {
    if !(threshold_frac > 0.0 && threshold_frac <= MAX_EDGE_THRESHOLD) {
        return Err(Error::invalid(format!(
            "edge threshold must lie in (0, {MAX_EDGE_THRESHOLD}], got {threshold_frac}"
        )));
    }
    let x: Vec<f64> = frame.iter().map(|&v| v as f64).collect();
    let env = envelope_of(&x);
    let reach = 2 * region.half_window_raw();
    let ant = leading_edge(&env, region.anterior_raw(), reach, threshold_frac, "anterior")?;
    let post = leading_edge(&env, region.posterior_raw(), reach, threshold_frac, "posterior")?;
    Ok((post - ant) * header.speed_of_sound_mps() / (2.0 * header.rf_rate()) * 1e3)
}

/// `D(t) = d0 + distension(t) - distension(anchor)`.
pub fn diameter_waveform(
    distension_mm: &SampledSeries,
    d0_mm: f64,
    anchor_index: usize,
    beat_onsets_s: Vec<f64>,
) -> Result<DiameterWaveform> {
    if !(d0_mm > 0.0) {
        return Err(Error::invalid(format!("end-diastolic diameter must be positive, got {d0_mm}")));
    }
    let base = *distension_mm.values.get(anchor_index).ok_or(Error::OutOfBounds {
        lo: anchor_index as i64,
        hi: anchor_index as i64 + 1,
        len: distension_mm.len(),
    })?;
    Ok(DiameterWaveform {
        series: SampledSeries {
            values: distension_mm.values.iter().map(|v| d0_mm + v - base).collect(),
            rate_hz: distension_mm.rate_hz,
            t0_s: distension_mm.t0_s,
        },
        d0_mm,
        beat_onsets_s,
    })
}

fn pressure_rise_mmhg(d: f64, dd: f64, pwv: f64, rho: f64) -> f64 {
    2.0 * rho * pwv * pwv * (d / dd).ln() / MMHG_TO_PA
}

pub fn pressure_from_diameter(
    d: &DiameterWaveform,
    pwv_mps: f64,
    dbp_mmhg: f64,
    rho: f64,
) -> Result<PressureWaveform> {
    if !(pwv_mps > 0.0) {
        return Err(Error::invalid(format!("pwv must be positive, got {pwv_mps}")));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("density must be positive"));
    }
    if !(d.d0_mm > 0.0) || d.series.values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("diameters must be positive"));
    }
    Ok(PressureWaveform {
        series: SampledSeries {
            values: d
                .series
                .values
                .iter()
                .map(|&v| dbp_mmhg + pressure_rise_mmhg(v, d.d0_mm, pwv_mps, rho))
                .collect(),
            rate_hz: d.series.rate_hz,
            t0_s: d.series.t0_s,
        },
        diameter: d.series.clone(),
        dd_mm: d.d0_mm,
        dbp_input_mmhg: dbp_mmhg,
        pwv_used_mps: pwv_mps,
        rho_kg_m3: rho,
        beat_onsets_s: d.beat_onsets_s.clone(),
    })
}

/// Pulse pressure (mmHg) from systolic and diastolic diameters.
pub fn pulse_pressure(ds_mm: f64, dd_mm: f64, pwv_mps: f64, rho: f64) -> Result<f64> {
    if !(dd_mm > 0.0) || !(pwv_mps > 0.0) {
        return Err(Error::invalid("diameter and pwv must be positive"));
    }
    if ds_mm < dd_mm {
        return Err(Error::InvertedSystole { ds_mm, dd_mm });
    }
    Ok(pressure_rise_mmhg(ds_mm, dd_mm, pwv_mps, rho))
}

/// Per-beat DBP/MAP/SBP/PP/FF over every complete beat (onset to next onset).
pub fn beat_metrics(p: &PressureWaveform) -> Result<Vec<BeatRecord>> {
    let series = &p.series;
    let mut out = Vec::new();
    for pair in p.beat_onsets_s.windows(2) {
        let lo = ((pair[0] - series.t0_s) * series.rate_hz).round();
        let hi = ((pair[1] - series.t0_s) * series.rate_hz).round();
        if lo < 0.0 || hi > series.len() as f64 || hi - lo < 2.0 {
            continue;
        }
        let (lo, hi) = (lo as usize, hi as usize);
        let beat = &series.values[lo..hi];
        let dbp = beat.iter().cloned().fold(f64::INFINITY, f64::min);
        let sbp = beat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let map = (beat.iter().sum::<f64>() / beat.len() as f64).clamp(dbp, sbp);
        let pp = sbp - dbp;
        let dia = &p.diameter.values[lo.min(p.diameter.len())..hi.min(p.diameter.len())];
        let ds = dia.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dd = dia.iter().cloned().fold(f64::INFINITY, f64::min);
        let ff = (pp > 0.0).then(|| (map - dbp) / pp);
        out.push(BeatRecord {
            onset_s: pair[0],
            dbp_mmhg: dbp,
            map_mmhg: map,
            sbp_mmhg: sbp,
            pp_mmhg: pp,
            ff,
            ds_mm: ds,
            dd_mm: dd,
            flagged: ff.is_none_or(|f| !(f > 0.0 && f < 1.0)),
        });
    }
    if out.is_empty() {
        return Err(Error::NoBeatDetected);
    }
    Ok(out)
}

/// Pressure-strain elastic modulus `Ep = PP Dd / dD` (mmHg) and area
/// compliance `AC = pi/4 (Ds^2 - Dd^2) / PP` (mm^2/mmHg).
pub fn stiffness_indices(pp_mmhg: f64, ds_mm: f64, dd_mm: f64) -> Result<(f64, f64)> {
    if !(dd_mm > 0.0) {
        return Err(Error::invalid("diastolic diameter must be positive"));
    }
    if !(pp_mmhg > 0.0) {
        return Err(Error::invalid("pulse pressure must be positive"));
    }
    let dd = ds_mm - dd_mm;
    if dd <= 0.0 {
        return Err(Error::invalid(format!("no distension (Ds {ds_mm} <= Dd {dd_mm})")));
    }
    let ep = pp_mmhg * dd_mm / dd;
    let ac = std::f64::consts::FRAC_PI_4 * (ds_mm * ds_mm - dd_mm * dd_mm) / pp_mmhg;
    Ok((ep, ac))
}

/// Maps a peripheral (finger) pulse pressure to the carotid site by the
/// ratio of form factors.
pub fn transform_reference_pp(pp_fin_mmhg: f64, ff_c: f64, ff_fin: f64) -> Result<f64> {
    if !(ff_fin > 0.0) {
        return Err(Error::invalid(format!("peripheral form factor must be positive, got {ff_fin}")));
    }
    Ok(pp_fin_mmhg * ff_c / ff_fin)
}

/// Carotid reference SBP, with DBP taken as equal along the arterial tree.
pub fn transform_reference_sbp(pp_fin_mmhg: f64, ff_c: f64, ff_fin: f64, dbp_mmhg: f64) -> Result<f64> {
    Ok(transform_reference_pp(pp_fin_mmhg, ff_c, ff_fin)? + dbp_mmhg)
}
