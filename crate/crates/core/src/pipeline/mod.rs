//! Session processing: wall identification, PWV assessment, 200 Hz
//! diameter tracking and pressure reconstruction over a stream of RF ticks.
//!
//! [`StreamingPipeline`] consumes ticks one at a time and keeps only a
//! bounded frame history (one assessment window plus two beats). PWV is
//! assessed over the first `assess_duration_s` seconds and, when an interval
//! is configured, again at every interval. Each assessment also fixes the
//! end-diastolic diameter used by the samples that follow it.

mod eval;
mod history;
mod io;
mod onset;

use std::io::Read;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pressure::{
    beat_metrics, diameter_waveform, end_diastolic_diameter, pressure_from_diameter, BeatRecord, PressureWaveform,
    DEFAULT_EDGE_THRESHOLD, MAX_EDGE_THRESHOLD, RHO_BLOOD,
};
use crate::pwv::{pwv_session, PwvEstimate, MAX_HEART_RATE_HZ, MIN_ASSESS_S, MIN_HEART_RATE_HZ};
use crate::rf::{FrameSource, RfReader, RfStreamHeader};
use crate::signal::SampledSeries;
use crate::wall::{identify_channels, TrackerSettings, WallRegion, WallTracker, IDENTIFY_FRAMES, SNR_GATE_DB};

pub use eval::{bland_altman, evaluate, pearson_r, Alignment, BeatAgreement, BlandAltman, EvalReport, MetricAgreement};
pub use history::FrameHistory;
pub use io::{read_waveform_csv, write_json, write_waveform_csv, AssessmentSummary, SessionSummary, WAVEFORM_CSV_HEADER};
pub use onset::OnsetDetector;

/// Rate of the diameter and pressure waveforms.
pub const DIAMETER_RATE_HZ: f64 = 200.0;
pub const DEFAULT_ASSESS_S: f64 = 10.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub waveform_csv: Option<PathBuf>,
    pub beats_json: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Diastolic pressure from an external cuff reading.
    #[serde(rename = "dbp_input_mmHg")]
    pub dbp_input_mmhg: f64,
    #[serde(default = "default_rho")]
    pub rho_kg_m3: f64,
    #[serde(default = "default_assess")]
    pub assess_duration_s: f64,
    /// Re-assessment period; `None` assesses once at the start.
    #[serde(default)]
    pub pwv_reassess_interval_s: Option<f64>,
    #[serde(default = "default_gate")]
    pub snr_gate_db: f64,
    #[serde(default = "default_edge")]
    pub edge_threshold: f64,
    /// Worker threads for the parallel stages; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn default_rho() -> f64 {
    RHO_BLOOD
}

fn default_assess() -> f64 {
    DEFAULT_ASSESS_S
}

fn default_gate() -> f64 {
    SNR_GATE_DB
}

fn default_edge() -> f64 {
    DEFAULT_EDGE_THRESHOLD
}

impl SessionConfig {
    pub fn new(dbp_input_mmhg: f64) -> Self {
        Self {
            dbp_input_mmhg,
            rho_kg_m3: RHO_BLOOD,
            assess_duration_s: DEFAULT_ASSESS_S,
            pwv_reassess_interval_s: None,
            snr_gate_db: SNR_GATE_DB,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            workers: None,
            outputs: OutputPaths::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.dbp_input_mmhg > 0.0 && self.dbp_input_mmhg.is_finite()) {
            return bad(format!("dbp_input_mmHg must be positive, got {}", self.dbp_input_mmhg));
        }
        if !(self.rho_kg_m3 > 0.0) {
            return bad(format!("rho_kg_m3 must be positive, got {}", self.rho_kg_m3));
        }
        if !(self.snr_gate_db >= 0.0) {
            return bad(format!("snr_gate_db must be non-negative, got {}", self.snr_gate_db));
        }
        if !(self.assess_duration_s >= MIN_ASSESS_S) {
            return bad(format!(
                "assess_duration_s must be at least {MIN_ASSESS_S} s, got {}",
                self.assess_duration_s
            ));
        }
        if let Some(i) = self.pwv_reassess_interval_s {
            if !(i >= self.assess_duration_s) {
                return bad(format!(
                    "pwv_reassess_interval_s ({i}) must not be shorter than assess_duration_s ({})",
                    self.assess_duration_s
                ));
            }
        }
        if !(self.edge_threshold > 0.0 && self.edge_threshold <= MAX_EDGE_THRESHOLD) {
            return bad(format!(
                "edge_threshold must lie in (0, {MAX_EDGE_THRESHOLD}], got {}",
                self.edge_threshold
            ));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }
}

/// One PWV assessment and the diameter anchor taken with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub start_s: f64,
    pub end_s: f64,
    pub pwv: PwvEstimate,
    pub period_s: f64,
    pub d0_mm: f64,
    pub anchor_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub pressure: PressureWaveform,
    pub beats: Vec<BeatRecord>,
    /// The first assessment's estimate.
    pub pwv: PwvEstimate,
    pub assessments: Vec<Assessment>,
    pub regions: Vec<WallRegion>,
    pub diameter_channel: usize,
}

#[derive(Debug, Clone)]
struct Segment {
    start_tick: usize,
    end_tick: usize,
    pwv: Option<(PwvEstimate, f64)>,
    /// 200 Hz sample index of the anchor and the diameter measured there.
    anchor: Option<(usize, f64)>,
}

/// Tick-by-tick session processor.
pub struct StreamingPipeline {
    config: SessionConfig,
    header: RfStreamHeader,
    settings: TrackerSettings,
    step: usize,
    assess_ticks: usize,
    reassess_ticks: Option<usize>,
    history: FrameHistory,
    n_ticks: usize,
    regions: Option<Vec<WallRegion>>,
    channel: usize,
    tracker: Option<WallTracker>,
    distension: Vec<f64>,
    centers: Vec<[i64; 2]>,
    detector: Option<OnsetDetector>,
    onsets: Vec<usize>,
    segments: Vec<Segment>,
}

impl StreamingPipeline {
    pub fn new(header: RfStreamHeader, config: SessionConfig) -> Result<Self> {
        header.validate()?;
        config.validate()?;
        let prf = header.prf();
        let ratio = prf / DIAMETER_RATE_HZ;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "PRF {prf} Hz is not a multiple of the {DIAMETER_RATE_HZ} Hz diameter rate"
            )));
        }
        let assess_ticks = (config.assess_duration_s * prf).round() as usize;
        let reassess_ticks = config.pwv_reassess_interval_s.map(|s| (s * prf).round() as usize);
        let capacity = assess_ticks + 2 * (prf / MIN_HEART_RATE_HZ).ceil() as usize;
        Ok(Self {
            settings: TrackerSettings::optimized(),
            step: ratio.round() as usize,
            assess_ticks,
            reassess_ticks,
            history: FrameHistory::new(header, capacity),
            n_ticks: 0,
            regions: None,
            channel: header.channels() / 2,
            tracker: None,
            distension: Vec::new(),
            centers: Vec::new(),
            detector: None,
            onsets: Vec::new(),
            segments: Vec::new(),
            config,
            header,
        })
    }

    pub fn header(&self) -> &RfStreamHeader {
        &self.header
    }

    /// Ticks consumed so far.
    pub fn ticks_seen(&self) -> usize {
        self.n_ticks
    }

    /// Ticks currently held in the frame history.
    pub fn resident_ticks(&self) -> usize {
        self.history.len()
    }

    /// Upper bound on [`resident_ticks`](Self::resident_ticks): one
    /// assessment window plus two beats.
    pub fn history_capacity(&self) -> usize {
        self.history.capacity()
    }

    /// Onsets confirmed so far, s.
    pub fn onsets_s(&self) -> Vec<f64> {
        self.onsets.iter().map(|&i| i as f64 / DIAMETER_RATE_HZ).collect()
    }

    /// Consumes one tick (all channels, channel-major).
    pub fn push_tick(&mut self, tick: &[i16]) -> Result<()> {
        if tick.len() != self.header.tick_len() {
            return Err(Error::invalid(format!(
                "tick has {} samples, header expects {}",
                tick.len(),
                self.header.tick_len()
            )));
        }
        self.history.push(tick);
        let t = self.n_ticks;
        self.n_ticks += 1;
        if t == 0 || self.reassess_ticks.is_some_and(|r| t.is_multiple_of(r)) {
            if let Some(last) = self.segments.last_mut() {
                last.end_tick = t;
            }
            self.segments.push(Segment {
                start_tick: t,
                end_tick: usize::MAX,
                pwv: None,
                anchor: None,
            });
        }
        if self.regions.is_none() {
            if self.n_ticks == IDENTIFY_FRAMES {
                self.identify()?;
            }
        } else if t.is_multiple_of(self.step) {
            self.track(t)?;
        }
        let seg = self.segments.len() - 1;
        let start = self.segments[seg].start_tick;
        if self.segments[seg].pwv.is_none() && t + 1 == start + self.assess_ticks {
            self.assess(seg, start..t + 1)?;
        }
        Ok(())
    }

    fn identify(&mut self) -> Result<()> {
        let start = self.history.ticks().start;
        let regions = identify_channels(&self.history, start, self.config.snr_gate_db)?;
        let region = &regions[self.channel];
        let frame = self.history.frame(start, self.channel);
        let tracker = WallTracker::new(region, &self.header, DIAMETER_RATE_HZ, self.settings, &frame)?;
        self.distension.push(tracker.distension_mm());
        self.centers.push(tracker.centers());
        self.tracker = Some(tracker);
        self.regions = Some(regions);
        for t in (start + self.step..self.n_ticks).step_by(self.step) {
            self.track(t)?;
        }
        Ok(())
    }

    fn track(&mut self, t: usize) -> Result<()> {
        let Some(tracker) = self.tracker.as_mut() else {
            return Ok(());
        };
        let frame = self.history.frame(t, self.channel);
        tracker.step(&frame)?;
        self.distension.push(tracker.distension_mm());
        self.centers.push(tracker.centers());
        let found = match self.detector.as_mut() {
            Some(d) => d.update(&self.distension),
            None => Vec::new(),
        };
        for i in found {
            self.onsets.push(i);
            self.measure_anchor(i)?;
            let frame = self.history.frame(t, self.channel);
            self.tracker.as_mut().expect("tracker present").reanchor(&frame)?;
        }
        Ok(())
    }

    /// Measures the end-diastolic diameter at onset sample `i` for the
    /// segment it falls in, unless that segment already has an anchor.
    fn measure_anchor(&mut self, i: usize) -> Result<()> {
        let tick = i * self.step;
        let Some(seg) = self.segments.iter_mut().rev().find(|s| s.start_tick <= tick) else {
            return Ok(());
        };
        if seg.anchor.is_some() || !self.history.ticks().contains(&tick) {
            return Ok(());
        }
        let regions = self.regions.as_ref().expect("walls identified");
        let [a, p] = self.centers[i];
        let region = WallRegion {
            anterior_center_u: a.max(0) as usize,
            posterior_center_u: p.max(0) as usize,
            ..regions[self.channel]
        };
        let frame = self.history.frame(tick, self.channel);
        let d0 = end_diastolic_diameter(&frame, &region, &self.header, self.config.edge_threshold)?;
        seg.anchor = Some((i, d0));
        Ok(())
    }

    fn assess(&mut self, seg: usize, ticks: std::ops::Range<usize>) -> Result<()> {
        let regions = self.regions.as_ref().expect("walls identified");
        let (estimate, low) = pwv_session(&self.history, regions, ticks, self.settings)?;
        let spacing: Vec<usize> = low.minima.windows(2).map(|w| w[1] - w[0]).collect();
        let period_s = if spacing.is_empty() {
            1.0 / MAX_HEART_RATE_HZ
        } else {
            let mut s = spacing;
            s.sort_unstable();
            (s[s.len() / 2] * low.step) as f64 / self.header.prf()
        };
        self.segments[seg].pwv = Some((estimate, period_s));
        let beat_ticks = (period_s * self.header.prf()).ceil() as usize;
        self.history.set_capacity(self.assess_ticks + 2 * beat_ticks);
        if self.detector.is_none() {
            // Onsets inside the first window are found after the fact; the
            // tracker is re-anchored only on onsets confirmed from here on.
            let mut detector = OnsetDetector::new(period_s, DIAMETER_RATE_HZ);
            let found = detector.update(&self.distension);
            self.detector = Some(detector);
            for i in found {
                self.onsets.push(i);
                self.measure_anchor(i)?;
            }
        }
        Ok(())
    }

    /// Completes pending work and assembles the session result.
    pub fn finish(mut self) -> Result<SessionResult> {
        let prf = self.header.prf();
        if self.regions.is_none() {
            if self.n_ticks == 0 {
                return Err(Error::StreamTooShort {
                    seconds: 0.0,
                    required: self.config.assess_duration_s,
                });
            }
            self.identify()?;
        }
        if let Some(last) = self.segments.last_mut() {
            last.end_tick = self.n_ticks;
        }
        let seg = self.segments.len() - 1;
        if self.segments[seg].pwv.is_none() {
            let start = self.segments[seg].start_tick;
            let avail = (self.n_ticks - start) as f64 / prf;
            let outcome = if avail >= MIN_ASSESS_S {
                self.assess(seg, start..self.n_ticks)
            } else {
                Err(Error::StreamTooShort {
                    seconds: avail,
                    required: self.config.assess_duration_s,
                })
            };
            if let Err(e) = outcome {
                if seg == 0 {
                    return Err(e);
                }
                self.segments.pop();
                if let Some(last) = self.segments.last_mut() {
                    last.end_tick = self.n_ticks;
                }
            }
        }
        if self.segments[0].anchor.is_none() {
            return Err(Error::NoBeatDetected);
        }
        // A later segment without an anchor keeps its predecessor's.
        let mut merged: Vec<Segment> = Vec::with_capacity(self.segments.len());
        for s in self.segments.drain(..) {
            match (merged.last_mut(), s.anchor.is_some() && s.pwv.is_some()) {
                (Some(prev), false) => prev.end_tick = s.end_tick,
                _ => merged.push(s),
            }
        }

        let all = SampledSeries::new(self.distension.clone(), DIAMETER_RATE_HZ, 0.0)?;
        let onsets_s = self.onsets_s();
        let mut pressure = Vec::with_capacity(all.len());
        let mut diameter = Vec::with_capacity(all.len());
        let mut assessments = Vec::with_capacity(merged.len());
        for (j, s) in merged.iter().enumerate() {
            let (estimate, period_s) = s.pwv.clone().expect("assessed segment");
            let (anchor, d0) = s.anchor.expect("anchored segment");
            let lo = if j == 0 { 0 } else { s.start_tick.div_ceil(self.step) };
            let hi = s.end_tick.div_ceil(self.step).min(all.len());
            let d = diameter_waveform(&all, d0, anchor, onsets_s.clone())?;
            let part = SampledSeries::new(d.series.values[lo..hi].to_vec(), DIAMETER_RATE_HZ, lo as f64 / DIAMETER_RATE_HZ)?;
            let d = crate::pressure::DiameterWaveform { series: part, ..d };
            let p = pressure_from_diameter(&d, estimate.mean_mps, self.config.dbp_input_mmhg, self.config.rho_kg_m3)?;
            pressure.extend_from_slice(&p.series.values);
            diameter.extend_from_slice(&d.series.values);
            assessments.push(Assessment {
                start_s: s.start_tick as f64 / prf,
                end_s: s.end_tick.min(self.n_ticks) as f64 / prf,
                pwv: estimate,
                period_s,
                d0_mm: d0,
                anchor_s: anchor as f64 / DIAMETER_RATE_HZ,
            });
        }
        let first = &assessments[0];
        let waveform = PressureWaveform {
            series: SampledSeries::new(pressure, DIAMETER_RATE_HZ, 0.0)?,
            diameter: SampledSeries::new(diameter, DIAMETER_RATE_HZ, 0.0)?,
            dd_mm: first.d0_mm,
            dbp_input_mmhg: self.config.dbp_input_mmhg,
            pwv_used_mps: first.pwv.mean_mps,
            rho_kg_m3: self.config.rho_kg_m3,
            beat_onsets_s: onsets_s,
        };
        let beats = beat_metrics(&waveform)?;
        Ok(SessionResult {
            pwv: first.pwv.clone(),
            pressure: waveform,
            beats,
            assessments,
            regions: self.regions.take().expect("walls identified"),
            diameter_channel: self.channel,
        })
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}

/// Runs a session over every tick of `source`.
pub fn run_pipeline<S: FrameSource + ?Sized>(source: &S, config: &SessionConfig) -> Result<SessionResult> {
    with_workers(config.workers, || {
        let header = *source.header();
        let mut pipeline = StreamingPipeline::new(header, config.clone())?;
        let mut tick = Vec::with_capacity(header.tick_len());
        for t in source.ticks() {
            tick.clear();
            for ch in 0..header.channels() {
                tick.extend_from_slice(&source.frame(t, ch));
            }
            pipeline.push_tick(&tick)?;
        }
        pipeline.finish()
    })
}

/// Runs a session while reading ticks sequentially from `reader`.
pub fn run_reader<R: Read + Send>(mut reader: RfReader<R>, config: &SessionConfig) -> Result<SessionResult> {
    with_workers(config.workers, move || {
        let mut pipeline = StreamingPipeline::new(*reader.header(), config.clone())?;
        let mut tick = Vec::new();
        while reader.next_tick(&mut tick)? {
            pipeline.push_tick(&tick)?;
        }
        pipeline.finish()
    })
}

/// Session PWV over the first `assess_duration_s` seconds read from
/// `reader` (or the whole stream if shorter, down to the minimum).
pub fn pwv_from_reader<R: Read>(mut reader: RfReader<R>, assess_duration_s: f64, snr_gate_db: f64) -> Result<PwvEstimate> {
    let header = *reader.header();
    let want = (assess_duration_s * header.prf()).round() as usize;
    let mut history = FrameHistory::new(header, want);
    let mut tick = Vec::new();
    while history.len() < want && reader.next_tick(&mut tick)? {
        history.push(&tick);
    }
    let seconds = history.len() as f64 / header.prf();
    if seconds < MIN_ASSESS_S {
        return Err(Error::StreamTooShort {
            seconds,
            required: assess_duration_s,
        });
    }
    let regions = identify_channels(&history, 0, snr_gate_db)?;
    let ticks = history.ticks();
    Ok(pwv_session(&history, &regions, ticks, TrackerSettings::optimized())?.0)
}
