//! Two-stage local pulse wave velocity estimation.
//!
//! Stage one tracks every channel at 100 Hz to find the beat minima. Stage
//! two re-tracks the 160 frames (80 ms) that follow each minimum at the
//! full PRF, plus two window lengths of context on either side so the
//! 16 Hz zero-phase filter has settled inside the window. The filtered
//! distension is upsampled to 10 kHz and the maximum of its second
//! derivative inside the window is the beat's time reference on that
//! channel. The slope of element position against time
//! reference is the beat's PWV.
//!
//! Beats are refined concurrently; results are merged in beat order, so the
//! estimate does not depend on scheduling.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rf::FrameSource;
use crate::signal::{resample_to, second_derivative_max, zero_phase_lowpass, SampledSeries};
use crate::wall::{track_channels, track_distension, TrackerSettings, WallRegion};

pub const LOW_RATE_HZ: f64 = 100.0;
/// Low-rate samples covered by one refinement window.
pub const WINDOW_LOW_SAMPLES: usize = 8;
pub const FILTER_ORDER: usize = 4;
/// Window lengths of filter context tracked on each side of a window.
pub const CONTEXT_WINDOWS: usize = 2;
pub const FILTER_CUTOFF_HZ: f64 = 16.0;
pub const UPSAMPLE_HZ: f64 = 10_000.0;
pub const MIN_VALID_BEATS: usize = 3;
pub const MIN_ASSESS_S: f64 = 2.0;
pub const MIN_HEART_RATE_HZ: f64 = 0.5;
pub const MAX_HEART_RATE_HZ: f64 = 3.0;
pub const REFRACTORY_S: f64 = 0.4;
/// Minimum normalized autocorrelation at the fundamental period.
const MIN_PERIODICITY: f64 = 0.3;
/// A beat minimum must lie in the lowest part of its local range.
pub const DEPTH_FRACTION: f64 = 0.3;

/// High-rate refinement window of one beat, in absolute PRF ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatWindow {
    pub lowrate_min_index: usize,
    pub hi_start_frame: usize,
    pub hi_end_frame: usize,
}

impl BeatWindow {
    pub fn frames(&self) -> Range<usize> {
        self.hi_start_frame..self.hi_end_frame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatStatus {
    Valid,
    Retrograde,
    TrackingFailed,
}

/// Timing and PWV of one beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatPwv {
    pub window: BeatWindow,
    /// Time reference per channel, s. Empty when tracking failed.
    pub times_s: Vec<f64>,
    pub pwv_mps: Option<f64>,
    pub r2: Option<f64>,
    pub status: BeatStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwvEstimate {
    /// PWV of every valid beat, in beat order.
    pub per_beat_mps: Vec<f64>,
    pub mean_mps: f64,
    /// Sample standard deviation over the valid beats.
    pub sd_mps: f64,
    /// Per-channel time references of every valid beat.
    pub per_beat_times: Vec<Vec<f64>>,
    pub regression_r2: Vec<f64>,
    pub n_invalid: usize,
    pub beats: Vec<BeatPwv>,
}

impl PwvEstimate {
    /// Aggregates per-beat results; fails with fewer than
    /// [`MIN_VALID_BEATS`] valid beats.
    pub fn from_beats(beats: Vec<BeatPwv>) -> Result<Self> {
        let valid: Vec<&BeatPwv> = beats.iter().filter(|b| b.status == BeatStatus::Valid).collect();
        if valid.len() < MIN_VALID_BEATS {
            return Err(Error::InsufficientBeats {
                valid: valid.len(),
                required: MIN_VALID_BEATS,
            });
        }
        let per_beat_mps: Vec<f64> = valid.iter().map(|b| b.pwv_mps.unwrap()).collect();
        let (mean_mps, sd_mps) = mean_sd(&per_beat_mps);
        Ok(Self {
            per_beat_times: valid.iter().map(|b| b.times_s.clone()).collect(),
            regression_r2: valid.iter().map(|b| b.r2.unwrap()).collect(),
            n_invalid: beats.len() - valid.len(),
            per_beat_mps,
            mean_mps,
            sd_mps,
            beats,
        })
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares slope of position against time (m/s) and the r^2 of the
/// fit. Times must be strictly increasing.
pub fn pwv_regression(positions_m: &[f64], times_s: &[f64]) -> Result<(f64, f64)> {
    if positions_m.len() != times_s.len() || times_s.len() < 2 {
        return Err(Error::invalid(format!(
            "need matching positions and times (at least 2), got {} and {}",
            positions_m.len(),
            times_s.len()
        )));
    }
    if times_s.iter().any(|t| !t.is_finite()) || times_s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::RetrogradeTiming);
    }
    let n = times_s.len() as f64;
    let tm = times_s.iter().sum::<f64>() / n;
    let xm = positions_m.iter().sum::<f64>() / n;
    let (mut stt, mut stx, mut sxx) = (0.0, 0.0, 0.0);
    for (t, x) in times_s.iter().zip(positions_m) {
        stt += (t - tm) * (t - tm);
        stx += (t - tm) * (x - xm);
        sxx += (x - xm) * (x - xm);
    }
    let slope = stx / stt;
    let r2 = if sxx > 0.0 { stx * stx / (stt * sxx) } else { 1.0 };
    Ok((slope, r2))
}

/// Fundamental period (samples) from the autocorrelation, searched between
/// the heart-rate limits.
fn fundamental_period(x: &[f64], rate_hz: f64) -> Option<usize> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let r0: f64 = d.iter().map(|v| v * v).sum();
    if !(r0 > 0.0) {
        return None;
    }
    let lag_lo = (rate_hz / MAX_HEART_RATE_HZ).floor().max(1.0) as usize;
    let lag_hi = ((rate_hz / MIN_HEART_RATE_HZ).ceil() as usize).min(n.saturating_sub(2));
    if lag_lo + 2 > lag_hi {
        return None;
    }
    // Unbiased normalization keeps long lags comparable to short ones.
    let ac: Vec<f64> = (0..=lag_hi + 1)
        .map(|k| {
            let s: f64 = d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum();
            s / (n - k) as f64 * n as f64 / r0
        })
        .collect();
    let peaks: Vec<usize> = (lag_lo.max(1)..=lag_hi)
        .filter(|&k| ac[k] > ac[k - 1] && ac[k] >= ac[k + 1])
        .collect();
    let best = peaks.iter().map(|&k| ac[k]).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= MIN_PERIODICITY) {
        return None;
    }
    peaks.into_iter().find(|&k| ac[k] >= 0.8 * best)
}

/// Beat minima of a (filtered) distension series, as sample indices.
///
/// The series must show a fundamental between 0.5 and 3 Hz. Local minima
/// must be the lowest point within one refractory period
/// (`min(0.4 s, 0.6 period)`) on either side and sit in the lowest 30% of
/// the surrounding beat's range, which rejects dicrotic notches and dips
/// next to a minimum cut off by the series edge.
pub fn detect_beat_minima(series: &SampledSeries) -> Result<Vec<usize>> {
    let x = &series.values;
    let period = fundamental_period(x, series.rate_hz).ok_or(Error::NoBeatDetected)?;
    let refractory = ((REFRACTORY_S * series.rate_hz).min(0.6 * period as f64)).round() as usize;
    let half = period / 2;
    let mut candidates: Vec<usize> = (1..x.len() - 1)
        .filter(|&i| x[i] < x[i - 1] && x[i] <= x[i + 1])
        .filter(|&i| {
            let lo = i.saturating_sub(refractory);
            let hi = (i + refractory + 1).min(x.len());
            x[lo..hi].iter().all(|&v| v >= x[i])
        })
        .filter(|&i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            let (mn, mx) = x[lo..hi]
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            x[i] <= mn + DEPTH_FRACTION * (mx - mn)
        })
        .collect();
    candidates.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= refractory) {
            accepted.push(c);
        }
    }
    if accepted.is_empty() {
        return Err(Error::NoBeatDetected);
    }
    accepted.sort_unstable();
    Ok(accepted)
}

fn filtered(series: &SampledSeries) -> Result<SampledSeries> {
    zero_phase_lowpass(series, FILTER_ORDER, FILTER_CUTOFF_HZ)
}

/// Element-wise mean of equally sampled series.
pub fn channel_mean(series: &[SampledSeries]) -> Result<SampledSeries> {
    let first = series.first().ok_or(Error::EmptySeries)?;
    let n = series.iter().map(|s| s.len()).min().unwrap();
    let values = (0..n)
        .map(|i| series.iter().map(|s| s.values[i]).sum::<f64>() / series.len() as f64)
        .collect();
    SampledSeries::new(values, first.rate_hz, first.t0_s)
}

/// Result of the 100 Hz pre-pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRatePass {
    /// Per-channel distension, mm.
    pub distension: Vec<SampledSeries>,
    /// Filtered channel-mean distension used for beat detection.
    pub combined: SampledSeries,
    /// Beat minima, indices into the 100 Hz series.
    pub minima: Vec<usize>,
    /// Absolute tick of low-rate sample 0.
    pub start_tick: usize,
    /// PRF ticks per low-rate sample.
    pub step: usize,
}

impl LowRatePass {
    pub fn onsets_s(&self) -> Vec<f64> {
        self.minima.iter().map(|&m| self.combined.time_of(m)).collect()
    }
}

fn low_rate_step<S: FrameSource + ?Sized>(source: &S) -> Result<usize> {
    let step = source.header().prf() / LOW_RATE_HZ;
    if step < 1.0 || (step - step.round()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "PRF {} Hz is not a multiple of the {LOW_RATE_HZ} Hz pre-pass rate",
            source.header().prf()
        )));
    }
    Ok(step.round() as usize)
}

/// Tracks every channel at 100 Hz over `ticks` and locates the beat minima.
pub fn lowrate_pass<S: FrameSource + ?Sized>(
    source: &S,
    regions: &[WallRegion],
    ticks: Range<usize>,
    settings: TrackerSettings,
) -> Result<LowRatePass> {
    let step = low_rate_step(source)?;
    let prf = source.header().prf();
    if (ticks.len() as f64) < MIN_ASSESS_S * prf {
        return Err(Error::invalid(format!(
            "PWV assessment needs at least {MIN_ASSESS_S} s of frames, got {:.3} s",
            ticks.len() as f64 / prf
        )));
    }
    let distension = track_channels(source, regions, LOW_RATE_HZ, ticks.clone(), settings, &[])?;
    let combined = filtered(&channel_mean(&distension)?)?;
    let minima = detect_beat_minima(&combined)?;
    Ok(LowRatePass {
        distension,
        combined,
        minima,
        start_tick: ticks.start,
        step,
    })
}

/// One 160-frame window per minimum, starting at the minimum. Windows that
/// would run past `end_tick` are dropped.
pub fn locate_highrate_ranges(minima: &[usize], start_tick: usize, step: usize, end_tick: usize) -> Vec<BeatWindow> {
    minima
        .iter()
        .map(|&m| {
            let hi_start_frame = start_tick + m * step;
            BeatWindow {
                lowrate_min_index: m,
                hi_start_frame,
                hi_end_frame: hi_start_frame + WINDOW_LOW_SAMPLES * step,
            }
        })
        .filter(|w| w.hi_end_frame <= end_tick)
        .collect()
}

/// Time of the second-derivative maximum of a full-rate distension
/// segment after 16 Hz zero-phase filtering and 10 kHz resampling, searched
/// over the input samples `within`.
pub fn time_reference(distension: &SampledSeries, within: Range<usize>) -> Result<f64> {
    let up = resample_to(&filtered(distension)?, UPSAMPLE_HZ)?;
    let ratio = UPSAMPLE_HZ / distension.rate_hz;
    let lo = (within.start as f64 * ratio).round() as usize;
    let hi = ((within.end as f64 * ratio).round() as usize).min(up.len());
    second_derivative_max(&up, lo..hi)
}

/// Frames tracked around a window: the window plus `CONTEXT_WINDOWS` of its
/// lengths on each side, clamped to the stream.
pub fn context_span(window: &BeatWindow, ticks: &Range<usize>) -> Range<usize> {
    let len = CONTEXT_WINDOWS * window.frames().len();
    window.hi_start_frame.saturating_sub(len).max(ticks.start)..(window.hi_end_frame + len).min(ticks.end)
}

/// Windows whose filter context lies entirely inside `ticks`; the others
/// sit too close to a stream edge for a settled filter.
pub fn with_full_context(windows: &[BeatWindow], ticks: &Range<usize>) -> Vec<BeatWindow> {
    windows
        .iter()
        .filter(|w| context_span(w, ticks).len() == (2 * CONTEXT_WINDOWS + 1) * w.frames().len())
        .copied()
        .collect()
}

/// Time reference of one beat on one channel.
pub fn beat_time_reference<S: FrameSource + ?Sized>(
    source: &S,
    region: &WallRegion,
    window: &BeatWindow,
    settings: TrackerSettings,
) -> Result<f64> {
    let prf = source.header().prf();
    let span = context_span(window, &source.ticks());
    let d = track_distension(source, region, prf, span.clone(), settings, &[span.start])?;
    let lo = window.hi_start_frame - span.start;
    time_reference(&d, lo..lo + window.frames().len())
}

/// Element positions along the artery, m.
pub fn element_positions<S: FrameSource + ?Sized>(source: &S, regions: &[WallRegion]) -> Vec<f64> {
    let spacing = source.header().element_spacing_m();
    regions.iter().map(|r| r.channel as f64 * spacing).collect()
}

fn beat_from_times(window: BeatWindow, times: Result<Vec<f64>>, positions: &[f64]) -> BeatPwv {
    let times = match times {
        Ok(t) => t,
        Err(_) => {
            return BeatPwv {
                window,
                times_s: Vec::new(),
                pwv_mps: None,
                r2: None,
                status: BeatStatus::TrackingFailed,
            }
        }
    };
    match pwv_regression(positions, &times) {
        Ok((v, r2)) if v > 0.0 => BeatPwv {
            window,
            times_s: times,
            pwv_mps: Some(v),
            r2: Some(r2),
            status: BeatStatus::Valid,
        },
        _ => BeatPwv {
            window,
            times_s: times,
            pwv_mps: None,
            r2: None,
            status: BeatStatus::Retrograde,
        },
    }
}

/// High-rate refinement of every window; beats run concurrently.
pub fn refine_beats<S: FrameSource + ?Sized>(
    source: &S,
    regions: &[WallRegion],
    windows: &[BeatWindow],
    settings: TrackerSettings,
) -> Vec<BeatPwv> {
    let positions = element_positions(source, regions);
    windows
        .par_iter()
        .map(|w| {
            let times: Result<Vec<f64>> = regions
                .iter()
                .map(|r| beat_time_reference(source, r, w, settings))
                .collect();
            beat_from_times(*w, times, &positions)
        })
        .collect()
}

/// Two-stage session PWV over `ticks`.
pub fn pwv_session<S: FrameSource + ?Sized>(
    source: &S,
    regions: &[WallRegion],
    ticks: Range<usize>,
    settings: TrackerSettings,
) -> Result<(PwvEstimate, LowRatePass)> {
    let low = lowrate_pass(source, regions, ticks.clone(), settings)?;
    let windows = with_full_context(&locate_highrate_ranges(&low.minima, low.start_tick, low.step, ticks.end), &ticks);
    let beats = refine_beats(source, regions, &windows, settings);
    Ok((PwvEstimate::from_beats(beats)?, low))
}

/// Reference path: every channel tracked at the full PRF over the whole of
/// `ticks`, filtered and resampled once, with time references taken inside
/// the given windows.
pub fn pwv_full_rate<S: FrameSource + ?Sized>(
    source: &S,
    regions: &[WallRegion],
    ticks: Range<usize>,
    windows: &[BeatWindow],
    settings: TrackerSettings,
) -> Result<Vec<BeatPwv>> {
    let prf = source.header().prf();
    let anchors: Vec<usize> = windows.iter().map(|w| context_span(w, &ticks).start).collect();
    let distension = track_channels(source, regions, prf, ticks.clone(), settings, &anchors)?;
    let up: Vec<SampledSeries> = distension
        .par_iter()
        .map(|d| resample_to(&filtered(d)?, UPSAMPLE_HZ))
        .collect::<Result<_>>()?;
    let positions = element_positions(source, regions);
    let ratio = UPSAMPLE_HZ / prf;
    Ok(windows
        .iter()
        .map(|w| {
            let lo = ((w.hi_start_frame - ticks.start) as f64 * ratio).round() as usize;
            let hi = ((w.hi_end_frame - ticks.start) as f64 * ratio).round() as usize;
            let times: Result<Vec<f64>> = up
                .iter()
                .map(|u| second_derivative_max(u, lo..hi.min(u.len())))
                .collect();
            beat_from_times(*w, times, &positions)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exact_line() {
        let (v, r2) = pwv_regression(&[0.0, 0.018, 0.036], &[0.0, 2.25e-3, 4.5e-3]).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_fixture() {
        // Oracle: slope 7.998683344305466, r^2 0.99983542.
        let (v, r2) = pwv_regression(&[0.0, 0.018, 0.036], &[0.0, 2.2e-3, 4.5e-3]).unwrap();
        assert!((v - 7.998_683_344_305_466).abs() < 1e-9, "{v}");
        assert!((r2 - 0.999_835_42).abs() < 1e-8, "{r2}");
    }

    #[test]
    fn retrograde_rejected() {
        assert!(matches!(
            pwv_regression(&[0.0, 0.018, 0.036], &[0.0, 3e-3, 2e-3]),
            Err(Error::RetrogradeTiming)
        ));
    }

    #[test]
    fn offset_and_scaling() {
        let t = [0.0013, 0.0035, 0.0059];
        let (v, _) = pwv_regression(&[0.0, 0.018, 0.036], &t).unwrap();
        let shifted: Vec<f64> = t.iter().map(|x| x + 0.25).collect();
        let (vs, _) = pwv_regression(&[0.0, 0.018, 0.036], &shifted).unwrap();
        assert!((v - vs).abs() < 1e-9 * v);
        let (v2, _) = pwv_regression(&[0.0, 0.036, 0.072], &t).unwrap();
        assert!((v2 - 2.0 * v).abs() < 1e-12 * v);
    }

    fn beat(pwv: f64) -> BeatPwv {
        BeatPwv {
            window: BeatWindow {
                lowrate_min_index: 0,
                hi_start_frame: 0,
                hi_end_frame: 160,
            },
            times_s: vec![0.0, 0.018 / pwv, 0.036 / pwv],
            pwv_mps: Some(pwv),
            r2: Some(1.0),
            status: BeatStatus::Valid,
        }
    }

    #[test]
    fn session_statistics() {
        let e = PwvEstimate::from_beats(vec![beat(8.0); 5]).unwrap();
        assert_eq!((e.mean_mps, e.sd_mps), (8.0, 0.0));
        let e = PwvEstimate::from_beats(vec![beat(7.8), beat(8.0), beat(8.2)]).unwrap();
        assert!((e.mean_mps - 8.0).abs() < 1e-12);
        assert!((e.sd_mps - 0.2).abs() < 1e-12);
        let (m, s) = mean_sd(&e.per_beat_mps);
        assert_eq!((m, s), (e.mean_mps, e.sd_mps));
    }

    #[test]
    fn too_few_beats() {
        let mut bad = beat(8.0);
        bad.status = BeatStatus::Retrograde;
        assert!(matches!(
            PwvEstimate::from_beats(vec![beat(8.0), beat(8.1), bad]),
            Err(Error::InsufficientBeats { valid: 2, required: 3 })
        ));
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(WINDOW_LOW_SAMPLES * 20, 160);
        let w = locate_highrate_ranges(&[250], 0, 20, 20_000);
        assert_eq!((w[0].hi_start_frame, w[0].hi_end_frame), (5000, 5160));
        // Minimum 30 frames before the end.
        assert!(locate_highrate_ranges(&[(20_000 - 30) / 20], 0, 20, 20_000).is_empty());
        let minima: Vec<usize> = (0..10).map(|k| 5 + 100 * k).chain([998]).collect();
        assert_eq!(locate_highrate_ranges(&minima, 0, 20, 20_000).len(), 10);
    }

    fn pulse_train(hr: f64, rate: f64, secs: f64) -> SampledSeries {
        let n = (rate * secs) as usize;
        let v = (0..n)
            .map(|i| {
                let ph = (i as f64 / rate * hr).fract();
                // Sharp rise, slow decay, small notch bump.
                let rise = 1.0 / (1.0 + (-(ph - 0.08) * 80.0).exp());
                rise * (-(ph - 0.08).max(0.0) * 2.5).exp() + 0.08 * (-((ph - 0.45) / 0.03).powi(2)).exp()
            })
            .collect();
        SampledSeries::new(v, rate, 0.0).unwrap()
    }

    #[test]
    fn minima_spacing_follows_heart_rate() {
        for hr in [1.0, 1.2] {
            let s = filtered(&pulse_train(hr, 100.0, 10.0)).unwrap();
            let m = detect_beat_minima(&s).unwrap();
            let expect = (10.0 * hr) as usize;
            assert!(m.len().abs_diff(expect) <= 1, "{hr}: {m:?}");
            for pair in m.windows(2) {
                let dt = (pair[1] - pair[0]) as f64 / 100.0;
                assert!((dt - 1.0 / hr).abs() <= 0.05, "{hr}: {m:?}");
            }
        }
    }

    #[test]
    fn flat_series_has_no_beats() {
        let s = SampledSeries::new(vec![0.2; 1000], 100.0, 0.0).unwrap();
        assert!(matches!(detect_beat_minima(&s), Err(Error::NoBeatDetected)));
    }

    fn logistic(k: f64, t1: f64) -> SampledSeries {
        SampledSeries::new(
            (0..480)
                .map(|i| 1.0 / (1.0 + (-k * (i as f64 / 2000.0 - t1)).exp()))
                .collect(),
            2000.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn logistic_time_reference() {
        // The 16 Hz filter pulls the curvature peak of a k = 40 upstroke
        // slightly earlier; a delayed copy must move by the delay exactly.
        let (k, t1) = (40.0, 0.13);
        let t = time_reference(&logistic(k, t1), 160..320).unwrap();
        let analytic = t1 - (2.0 + 3f64.sqrt()).ln() / k;
        assert!((t - analytic).abs() <= 2e-3, "{t} vs {analytic}");
        let late = time_reference(&logistic(k, t1 + 2.24e-3), 160..320).unwrap();
        assert!((late - t - 2.24e-3).abs() <= 1e-4, "{}", late - t);
    }

    #[test]
    fn identical_channels_identical_references() {
        let s = SampledSeries::new(
            (0..160).map(|i| (1.0 - (2.0 * PI * i as f64 / 320.0).cos()) * 0.1).collect(),
            2000.0,
            1.0,
        )
        .unwrap();
        assert_eq!(time_reference(&s, 0..160).unwrap(), time_reference(&s.clone(), 0..160).unwrap());
    }
}
