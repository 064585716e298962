use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pressure::PressureWaveform;
use crate::pwv::PwvEstimate;
use crate::signal::SampledSeries;
use crate::wall::WallRegion;

use super::{Assessment, SessionResult};

pub const WAVEFORM_CSV_HEADER: &str = "time_s,pressure_mmHg,diameter_mm";

/// Writes the pressure and diameter waveforms, one row per sample.
pub fn write_waveform_csv<W: Write>(p: &PressureWaveform, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{WAVEFORM_CSV_HEADER}")?;
    for (i, (pr, d)) in p.series.values.iter().zip(&p.diameter.values).enumerate() {
        writeln!(w, "{:.4},{pr:.4},{d:.6}", p.series.time_of(i))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `time_s,value[,...]` table with a uniform time step and returns
/// the second column. Blank lines and a non-numeric first row are skipped.
pub fn read_waveform_csv<R: Read>(r: R) -> Result<SampledSeries> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let parsed = (cols.next().map(str::parse::<f64>), cols.next().map(str::parse::<f64>));
        match parsed {
            (Some(Ok(t)), Some(Ok(v))) => {
                times.push(t);
                values.push(v);
            }
            _ if n == 0 => continue,
            _ => return Err(Error::MalformedTable(format!("line {}: expected two numeric columns", n + 1))),
        }
    }
    if times.len() < 2 {
        return Err(Error::MalformedTable("fewer than two rows".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::MalformedTable("time column must increase".into()));
    }
    // Times are printed rounded, so allow a fraction of a step.
    for (i, t) in times.iter().enumerate() {
        if (t - (times[0] + i as f64 * dt)).abs() > 0.25 * dt {
            return Err(Error::MalformedTable(format!("row {}: time step is not uniform", i + 1)));
        }
    }
    SampledSeries::new(values, 1.0 / dt, times[0])
}

/// Session-level numbers written next to the waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub pwv_mean_mps: f64,
    pub pwv_sd_mps: f64,
    pub pwv_per_beat_mps: Vec<f64>,
    pub n_invalid_beats: usize,
    pub dd_mm: f64,
    #[serde(rename = "dbp_input_mmHg")]
    pub dbp_input_mmhg: f64,
    pub rho_kg_m3: f64,
    pub diameter_channel: usize,
    pub n_beats: usize,
    pub duration_s: f64,
    pub regions: Vec<WallRegion>,
    pub assessments: Vec<AssessmentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentSummary {
    pub start_s: f64,
    pub end_s: f64,
    pub pwv_mean_mps: f64,
    pub pwv_sd_mps: f64,
    pub period_s: f64,
    pub d0_mm: f64,
    pub anchor_s: f64,
}

impl From<&Assessment> for AssessmentSummary {
    fn from(a: &Assessment) -> Self {
        Self {
            start_s: a.start_s,
            end_s: a.end_s,
            pwv_mean_mps: a.pwv.mean_mps,
            pwv_sd_mps: a.pwv.sd_mps,
            period_s: a.period_s,
            d0_mm: a.d0_mm,
            anchor_s: a.anchor_s,
        }
    }
}

impl SessionSummary {
    pub fn new(r: &SessionResult) -> Self {
        let p: &PwvEstimate = &r.pwv;
        Self {
            pwv_mean_mps: p.mean_mps,
            pwv_sd_mps: p.sd_mps,
            pwv_per_beat_mps: p.per_beat_mps.clone(),
            n_invalid_beats: p.n_invalid,
            dd_mm: r.pressure.dd_mm,
            dbp_input_mmhg: r.pressure.dbp_input_mmhg,
            rho_kg_m3: r.pressure.rho_kg_m3,
            diameter_channel: r.diameter_channel,
            n_beats: r.beats.len(),
            duration_s: r.pressure.series.duration_s(),
            regions: r.regions.clone(),
            assessments: r.assessments.iter().map(AssessmentSummary::from).collect(),
        }
    }
}

/// Pretty-printed JSON to `path`.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
