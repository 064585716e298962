//! Wall identification, SNR gating and cross-correlation wall tracking.
//!
//! Displacements are measured in interpolated samples: every RF frame is
//! spline-upsampled by [`INTERP_FACTOR`] (80 MHz to 1.2 GHz), and only the
//! neighborhood of each wall echo is interpolated.
//!
//! The optimized tracker follows three cost reductions: a short reference
//! window (`2W = 480`), a carrier-crest peak tracker that predicts the shift
//! `dp` so the correlation search only spans `[dp - 3, dp + 3]`, and reduced
//! frame rates wherever the timing resolution allows it. Each frame is
//! correlated against the reference window of a key frame that is renewed
//! at beat onsets; displacements carry over across key frames, and the
//! correlation peak is refined to a fraction of a sample by a parabolic fit.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::NOISE_DEPTH_M;
use crate::rf::{FrameSource, RfStreamHeader};
use crate::signal::{envelope_of, spline_upsample, SampledSeries};

pub const INTERP_FACTOR: usize = 15;
/// Half reference window, interpolated samples (`2W = 480`, 32 raw samples).
pub const DEFAULT_HALF_WINDOW: usize = 240;
/// Half window of the exhaustive tracker, spanning the whole echo envelope.
pub const EXHAUSTIVE_HALF_WINDOW: usize = 330;
pub const NARROW_RADIUS: i64 = 3;
pub const WIDE_RADIUS: i64 = 60;
/// Largest plausible peak shift per frame at [`REFERENCE_PRF`], interpolated samples.
pub const PHYSIO_BOUND: f64 = 15.0;
pub const REFERENCE_PRF: f64 = 2000.0;
pub const DEFAULT_CARRIER_HZ: f64 = 5e6;
/// Frames averaged into each key reference window.
pub const KEY_FRAMES: usize = 8;
pub const SNR_GATE_DB: f64 = 15.0;
/// SNR values are compared at 0.05 dB precision.
pub const SNR_GATE_TOLERANCE_DB: f64 = 0.05;

/// Envelope peaks below this multiple of the median envelope are noise.
const PEAK_FLOOR: f64 = 5.0;
const MIN_WALL_SEPARATION_M: f64 = 1e-3;
/// Extra raw samples interpolated on each side of a segment so the natural
/// boundary of the local spline stays away from the samples in use.
const SEGMENT_MARGIN: i64 = 8;
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallRegion {
    pub channel: usize,
    pub anterior_center_u: usize,
    pub posterior_center_u: usize,
    pub half_window_w: usize,
    pub snr_db: f64,
}

impl WallRegion {
    pub fn anterior_raw(&self) -> usize {
        raw_index(self.anterior_center_u)
    }

    pub fn posterior_raw(&self) -> usize {
        raw_index(self.posterior_center_u)
    }

    pub fn half_window_raw(&self) -> usize {
        self.half_window_w.div_ceil(INTERP_FACTOR)
    }

    fn centers(&self) -> [usize; 2] {
        [self.anterior_center_u, self.posterior_center_u]
    }
}

fn raw_index(u: usize) -> usize {
    (u as f64 / INTERP_FACTOR as f64).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    /// Integer argmax of the correlation, interpolated samples.
    pub delta: i64,
    /// Parabolic sub-sample correction in `[-0.5, 0.5]`.
    pub fraction: f64,
    pub peak_corr: f64,
    pub search_lo: i64,
    pub search_hi: i64,
    pub fallback_used: bool,
}

impl ShiftEstimate {
    pub fn refined(&self) -> f64 {
        self.delta as f64 + self.fraction
    }
}

/// Size of one interpolated sample in metres of depth.
pub fn interp_sample_m(header: &RfStreamHeader, factor: usize) -> f64 {
    header.speed_of_sound_mps() / (2.0 * header.rf_rate() * factor as f64)
}

fn mean_abs(x: impl Iterator<Item = f64>) -> (f64, usize) {
    x.fold((0.0, 0), |(s, n), v| (s + v.abs(), n + 1))
}

fn wall_window(center_raw: usize, half: usize, len: usize) -> Range<usize> {
    center_raw.saturating_sub(half)..(center_raw + half).min(len)
}

fn snr_sums<F: AsRef<[i16]>>(frames: &[F], region: &WallRegion, header: &RfStreamHeader) -> (f64, f64) {
    let half = region.half_window_raw();
    let noise_len = header.samples_above_depth(NOISE_DEPTH_M);
    let (mut wall, mut nw, mut noise, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for f in frames {
        let f = f.as_ref();
        for c in [region.anterior_raw(), region.posterior_raw()] {
            let (s, n) = mean_abs(f[wall_window(c, half, f.len())].iter().map(|&v| v as f64));
            wall += s;
            nw += n;
        }
        let (s, n) = mean_abs(f[..noise_len.min(f.len())].iter().map(|&v| v as f64));
        noise += s;
        nn += n;
    }
    (wall / nw.max(1) as f64, noise / nn.max(1) as f64)
}

fn ratio_db(wall: f64, noise: f64) -> f64 {
    if noise == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (wall / noise).log10()
    }
}

/// Mean absolute echo amplitude in the two wall windows over the mean
/// absolute amplitude of the samples shallower than 5 mm, in dB.
/// Returns `+inf` when the noise window is silent.
pub fn snr_db(frame: &[i16], region: &WallRegion, header: &RfStreamHeader) -> f64 {
    let (w, n) = snr_sums(&[frame], region, header);
    ratio_db(w, n)
}

/// Pooled SNR over several frames.
pub fn snr_db_frames<F: AsRef<[i16]>>(frames: &[F], region: &WallRegion, header: &RfStreamHeader) -> f64 {
    let (w, n) = snr_sums(frames, region, header);
    ratio_db(w, n)
}

pub fn passes_gate(snr_db: f64, gate_db: f64) -> bool {
    snr_db >= gate_db - SNR_GATE_TOLERANCE_DB
}

/// Parabolic vertex offset through three equally spaced values.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom < 0.0 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Locates the anterior and posterior wall echoes of `channel` from the
/// mean envelope of `frames` and applies the SNR gate.
pub fn identify_walls<F: AsRef<[i16]>>(
    frames: &[F],
    channel: usize,
    header: &RfStreamHeader,
    gate_db: f64,
) -> Result<WallRegion> {
    if frames.is_empty() {
        return Err(Error::invalid("wall identification needs at least one frame"));
    }
    let n = frames[0].as_ref().len();
    let mut env = vec![0.0; n];
    for f in frames {
        let x: Vec<f64> = f.as_ref().iter().map(|&v| v as f64).collect();
        for (e, v) in env.iter_mut().zip(envelope_of(&x)) {
            *e += v / frames.len() as f64;
        }
    }
    let mut sorted = env.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = PEAK_FLOOR * sorted[n / 2];
    let mut peaks: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| env[i] > floor && env[i] >= env[i - 1] && env[i] > env[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| env[b].total_cmp(&env[a]).then(a.cmp(&b)));
    let min_sep = header.depth_to_sample(MIN_WALL_SEPARATION_M);
    let first = *peaks.first().ok_or(Error::NoArteryFound { channel })?;
    let second = *peaks
        .iter()
        .find(|&&p| (p as f64 - first as f64).abs() >= min_sep)
        .ok_or(Error::NoArteryFound { channel })?;
    let (ant, post) = (first.min(second), first.max(second));

    // Centers maximize the envelope captured by a wall window, which is
    // steadier under noise than the raw envelope peak.
    let half = DEFAULT_HALF_WINDOW / INTERP_FACTOR;
    let captured = |i: usize| env[i.saturating_sub(half)..(i + half + 1).min(n)].iter().sum::<f64>();
    let refine = |peak: usize| {
        let lo = peak.saturating_sub(half).max(1);
        let hi = (peak + half).min(n - 2);
        let i = (lo..=hi).fold(lo, |b, i| if captured(i) > captured(b) { i } else { b });
        let off = parabolic_offset(captured(i - 1), captured(i), captured(i + 1));
        ((i as f64 + off) * INTERP_FACTOR as f64).round() as usize
    };
    let w = DEFAULT_HALF_WINDOW;
    let margin = (w + WIDE_RADIUS as usize + INTERP_FACTOR * SEGMENT_MARGIN as usize) as i64;
    let (ant_u, post_u) = (refine(ant), refine(post));
    let last_u = ((n - 1) * INTERP_FACTOR) as i64;
    if (ant_u as i64) < margin || post_u as i64 + margin > last_u {
        return Err(Error::OutOfBounds {
            lo: ant_u as i64 - margin,
            hi: post_u as i64 + margin,
            len: last_u as usize + 1,
        });
    }
    let mut region = WallRegion {
        channel,
        anterior_center_u: ant_u,
        posterior_center_u: post_u,
        half_window_w: w,
        snr_db: 0.0,
    };
    region.snr_db = snr_db_frames(frames, &region, header);
    if !passes_gate(region.snr_db, gate_db) {
        return Err(Error::SnrGateFailed {
            channel,
            snr_db: region.snr_db,
            gate_db,
        });
    }
    Ok(region)
}

/// Frames used to identify the walls at the start of a stream.
pub const IDENTIFY_FRAMES: usize = 20;

/// Identifies the walls of every channel from the [`IDENTIFY_FRAMES`]
/// frames starting at `start_tick`, failing on the first channel that has
/// no artery or misses the SNR gate.
pub fn identify_channels<S: FrameSource + ?Sized>(source: &S, start_tick: usize, gate_db: f64) -> Result<Vec<WallRegion>> {
    let end = (start_tick + IDENTIFY_FRAMES).min(source.ticks().end);
    if start_tick >= end {
        return Err(Error::OutOfBounds {
            lo: start_tick as i64,
            hi: end as i64,
            len: source.ticks().end,
        });
    }
    (0..source.header().channels())
        .map(|ch| {
            let frames: Vec<_> = (start_tick..end).map(|t| source.frame(t, ch)).collect();
            identify_walls(&frames, ch, source.header(), gate_db)
        })
        .collect()
}

/// Spline-interpolated stretch of one frame, indexed in interpolated samples.
#[derive(Debug, Clone)]
struct Segment {
    u0: i64,
    data: Vec<f64>,
    /// Prefix sums of squares for window energies.
    energy: Vec<f64>,
}

impl Segment {
    fn build(frame: &[i16], u_lo: i64, u_hi: i64, factor: usize) -> Result<Self> {
        let f = factor as i64;
        let n = frame.len() as i64;
        let out_of_bounds = || Error::OutOfBounds {
            lo: u_lo,
            hi: u_hi,
            len: ((n - 1) * f + 1).max(0) as usize,
        };
        if u_lo < 0 || u_hi > (n - 1) * f {
            return Err(out_of_bounds());
        }
        let raw_lo = (u_lo.div_euclid(f) - SEGMENT_MARGIN).max(0);
        let raw_hi = ((u_hi + f - 1).div_euclid(f) + SEGMENT_MARGIN).min(n - 1);
        let y: Vec<f64> = frame[raw_lo as usize..=raw_hi as usize].iter().map(|&v| v as f64).collect();
        let data = if y.len() >= 4 { spline_upsample(&y, factor) } else { return Err(out_of_bounds()) };
        let mut energy = Vec::with_capacity(data.len() + 1);
        let mut acc = 0.0;
        energy.push(0.0);
        for v in &data {
            acc += v * v;
            energy.push(acc);
        }
        Ok(Self {
            u0: raw_lo * f,
            data,
            energy,
        })
    }

    fn window(&self, start: i64, len: usize) -> &[f64] {
        let s = (start - self.u0) as usize;
        &self.data[s..s + len]
    }

    fn window_energy(&self, start: i64, len: usize) -> f64 {
        let s = (start - self.u0) as usize;
        self.energy[s + len] - self.energy[s]
    }

    fn argmax(&self, lo: i64, hi: i64) -> i64 {
        let mut best = lo;
        for u in lo..=hi {
            if self.data[(u - self.u0) as usize] > self.data[(best - self.u0) as usize] {
                best = u;
            }
        }
        best
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalized correlation between `reference` and the window of `seg`
/// starting at `start`.
fn ncc(reference: &[f64], ref_energy: f64, seg: &Segment, start: i64) -> f64 {
    let num = dot(reference, seg.window(start, reference.len()));
    let den = (ref_energy * seg.window_energy(start, reference.len())).sqrt();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Whether `(d, c)` beats `(best_d, best_c)`: higher correlation, then
/// smaller `|d|`, then negative first.
fn beats(d: i64, c: f64, best_d: i64, best_c: f64) -> bool {
    if c > best_c + TIE_EPS {
        return true;
    }
    if c < best_c - TIE_EPS {
        return false;
    }
    (d.abs(), d) < (best_d.abs(), best_d)
}

/// Correlation values over a contiguous lag range.
struct LagScan {
    lo: i64,
    values: Vec<f64>,
}

impl LagScan {
    fn scan(lo: i64, hi: i64, mut corr: impl FnMut(i64) -> f64) -> Self {
        Self {
            lo,
            values: (lo..=hi).map(&mut corr).collect(),
        }
    }

    fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    fn get(&self, d: i64) -> Option<f64> {
        (d >= self.lo && d <= self.hi()).then(|| self.values[(d - self.lo) as usize])
    }

    fn best(&self) -> (i64, f64) {
        let mut best = (self.lo, self.values[0]);
        for (i, &c) in self.values.iter().enumerate().skip(1) {
            let d = self.lo + i as i64;
            if beats(d, c, best.0, best.1) {
                best = (d, c);
            }
        }
        best
    }

    fn extend_low(&mut self, c: f64) {
        self.lo -= 1;
        self.values.insert(0, c);
    }

    fn extend_high(&mut self, c: f64) {
        self.values.push(c);
    }
}

/// Integer shift `delta` in `[lo, hi]` maximizing the normalized
/// correlation between the `2W` window of `reference` centered at `center`
/// and the window of `current` centered at `center + delta`.
///
/// Both inputs are interpolated-rate frames.
pub fn xcorr_shift(
    reference: &[f64],
    current: &[f64],
    center: usize,
    half_window: usize,
    lo: i64,
    hi: i64,
) -> Result<ShiftEstimate> {
    if lo > hi {
        return Err(Error::invalid(format!("empty search range [{lo}, {hi}]")));
    }
    let w = half_window as i64;
    let c = center as i64;
    let ref_start = c - w;
    let len = 2 * half_window;
    if ref_start < 0 || c + w > reference.len() as i64 || ref_start + lo < 0 || c + w + hi > current.len() as i64 {
        return Err(Error::OutOfBounds {
            lo: ref_start + lo.min(0),
            hi: c + w + hi.max(0),
            len: reference.len().min(current.len()),
        });
    }
    let r = &reference[ref_start as usize..ref_start as usize + len];
    let er = dot(r, r);
    let corr = |d: i64| {
        let s = (ref_start + d) as usize;
        let x = &current[s..s + len];
        let den = (er * dot(x, x)).sqrt();
        if den > 0.0 {
            dot(r, x) / den
        } else {
            0.0
        }
    };
    let scan = LagScan::scan(lo, hi, corr);
    let (delta, peak_corr) = scan.best();
    let in_bounds = |d: i64| ref_start + d >= 0 && c + w + d <= current.len() as i64;
    let neighbor = |d: i64| scan.get(d).or_else(|| in_bounds(d).then(|| corr(d)));
    let fraction = match (neighbor(delta - 1), neighbor(delta + 1)) {
        (Some(l), Some(r)) => parabolic_offset(l, peak_corr, r),
        _ => 0.0,
    };
    Ok(ShiftEstimate {
        delta,
        fraction,
        peak_corr,
        search_lo: lo,
        search_hi: hi,
        fallback_used: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerSettings {
    pub half_window: usize,
    /// Narrowed search radius around the peak-tracker prediction; `None`
    /// searches `[-wide, wide]` on every frame.
    pub narrow_radius: Option<i64>,
    pub wide_radius: i64,
    /// Largest plausible per-frame shift at [`REFERENCE_PRF`].
    pub physio_bound: f64,
    pub interp_factor: usize,
    pub carrier_hz: f64,
    /// Frames averaged, after alignment, into the key reference window.
    pub key_frames: usize,
}

impl TrackerSettings {
    pub fn optimized() -> Self {
        Self {
            half_window: DEFAULT_HALF_WINDOW,
            narrow_radius: Some(NARROW_RADIUS),
            wide_radius: WIDE_RADIUS,
            physio_bound: PHYSIO_BOUND,
            interp_factor: INTERP_FACTOR,
            carrier_hz: DEFAULT_CARRIER_HZ,
            key_frames: KEY_FRAMES,
        }
    }

    pub fn exhaustive() -> Self {
        Self {
            half_window: EXHAUSTIVE_HALF_WINDOW,
            narrow_radius: None,
            ..Self::optimized()
        }
    }

    /// Per-frame bound and wide radius at `rate_hz` frames per second.
    fn radii(&self, rate_hz: f64) -> (i64, i64) {
        let bound = (self.physio_bound * REFERENCE_PRF / rate_hz).ceil() as i64;
        (bound, self.wide_radius.max(bound))
    }
}

impl Default for TrackerSettings {
    fn default() -> Self {
        Self::optimized()
    }
}

/// One step of the carrier-crest peak tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakStep {
    pub peak_u: i64,
    pub delta_p: i64,
    pub fallback_used: bool,
}

/// Tracking state of one wall. Shifts are measured against the reference
/// window of the key frame (the first frame or the latest re-anchor), so
/// estimation errors do not accumulate frame by frame.
#[derive(Debug, Clone)]
struct WallState {
    /// Reference window, averaged over `key_count` aligned frames.
    key_ref: Vec<f64>,
    key_energy: f64,
    key_count: usize,
    key_center: i64,
    key_crest: i64,
    /// Displacement accumulated up to the key frame.
    key_cum: f64,
    /// Shift of the latest frame relative to the key frame.
    shift: f64,
    crest: i64,
}

impl WallState {
    fn start(p: &Params, frame: &[i16], center: i64) -> Result<Self> {
        let seg = segment_for(&p.settings, frame, center, center, p.wide, p.crest_half)?;
        let crest = seg.argmax(center - p.crest_half, center + p.crest_half);
        let w = p.settings.half_window;
        let key_ref = seg.window(center - w as i64, 2 * w).to_vec();
        Ok(Self {
            key_energy: dot(&key_ref, &key_ref),
            key_ref,
            key_count: 1,
            key_center: center,
            key_crest: crest,
            key_cum: 0.0,
            shift: 0.0,
            crest,
        })
    }

    fn cum(&self) -> f64 {
        self.key_cum + self.shift
    }

    fn center(&self) -> i64 {
        self.key_center + self.shift.round() as i64
    }
}

/// Sequential two-wall tracker for one channel.
#[derive(Debug, Clone)]
pub struct WallTracker {
    params: Params,
    sample_mm: f64,
    walls: [WallState; 2],
}

#[derive(Debug, Clone, Copy)]
struct Params {
    settings: TrackerSettings,
    bound: i64,
    wide: i64,
    crest_half: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameShift {
    pub anterior: ShiftEstimate,
    pub posterior: ShiftEstimate,
}

impl WallTracker {
    /// Starts tracking at `first_frame` with windows on the region centers.
    pub fn new(
        region: &WallRegion,
        header: &RfStreamHeader,
        rate_hz: f64,
        settings: TrackerSettings,
        first_frame: &[i16],
    ) -> Result<Self> {
        if settings.interp_factor == 0 || settings.half_window == 0 {
            return Err(Error::invalid("tracker window and interpolation factor must be positive"));
        }
        let (bound, wide) = settings.radii(rate_hz);
        let crest_half =
            ((header.rf_rate() * settings.interp_factor as f64 / settings.carrier_hz) / 2.0).floor() as i64;
        let params = Params {
            settings,
            bound,
            wide,
            crest_half,
        };
        let scale = settings.interp_factor as f64 / INTERP_FACTOR as f64;
        let [a, p] = region.centers().map(|u| (u as f64 * scale).round() as i64);
        Ok(Self {
            walls: [
                WallState::start(&params, first_frame, a)?,
                WallState::start(&params, first_frame, p)?,
            ],
            params,
            sample_mm: interp_sample_m(header, settings.interp_factor) * 1e3,
        })
    }

    fn step_wall(p: &Params, state: &mut WallState, frame: &[i16]) -> Result<ShiftEstimate> {
        let s = &p.settings;
        let w = s.half_window as i64;
        let seg = segment_for(s, frame, state.center(), state.crest, p.wide, p.crest_half)?;
        let ref_start = state.key_center - w;
        let reference = &state.key_ref;
        let er = state.key_energy;
        let corr = |d: i64| ncc(reference, er, &seg, ref_start + d);
        // Lags are relative to the key frame; the search is bounded around
        // the previous frame's shift.
        let base = state.shift.round() as i64;
        let (min_lag, max_lag) = (base - p.wide, base + p.wide);

        let mut fallback = false;
        let mut new_crest = None;
        let mut scan = match s.narrow_radius {
            Some(radius) => {
                let peak = seg.argmax(state.crest - p.crest_half, state.crest + p.crest_half);
                new_crest = Some(peak);
                if (peak - state.crest).abs() > p.bound {
                    fallback = true;
                    LagScan::scan(min_lag, max_lag, corr)
                } else {
                    let dp = peak - state.key_crest;
                    let lo = (dp - radius).clamp(min_lag, max_lag);
                    let hi = (dp + radius).clamp(min_lag, max_lag).max(lo);
                    let mut scan = LagScan::scan(lo, hi, corr);
                    // Climb outward while the maximum sits on a boundary.
                    loop {
                        let (best, _) = scan.best();
                        if best == scan.lo && scan.lo > min_lag {
                            scan.extend_low(corr(scan.lo - 1));
                        } else if best == scan.hi() && scan.hi() < max_lag {
                            scan.extend_high(corr(scan.hi() + 1));
                        } else {
                            break;
                        }
                    }
                    scan
                }
            }
            None => LagScan::scan(min_lag, max_lag, corr),
        };
        let (delta, peak) = scan.best();
        let left = scan.get(delta - 1).unwrap_or_else(|| corr(delta - 1));
        let right = scan.get(delta + 1).unwrap_or_else(|| corr(delta + 1));
        let fraction = parabolic_offset(left, peak, right);
        let (search_lo, search_hi) = (scan.lo, scan.hi());
        scan.values.clear();

        let expected = state.key_crest + delta;
        state.crest = match new_crest {
            Some(c) if (c - expected).abs() <= NARROW_RADIUS => c,
            _ => expected,
        };
        state.shift = delta as f64 + fraction;
        if state.key_count < s.key_frames {
            let n = state.key_count as f64;
            let aligned = seg.window(ref_start + delta, 2 * s.half_window);
            for (r, v) in state.key_ref.iter_mut().zip(aligned) {
                *r = (*r * n + v) / (n + 1.0);
            }
            state.key_energy = dot(&state.key_ref, &state.key_ref);
            state.key_count += 1;
        }
        Ok(ShiftEstimate {
            delta,
            fraction,
            peak_corr: peak,
            search_lo,
            search_hi,
            fallback_used: fallback,
        })
    }

    /// Advances both walls to `frame`. Shift estimates are relative to the
    /// key frame.
    pub fn step(&mut self, frame: &[i16]) -> Result<FrameShift> {
        let anterior = Self::step_wall(&self.params, &mut self.walls[0], frame)?;
        let posterior = Self::step_wall(&self.params, &mut self.walls[1], frame)?;
        Ok(FrameShift { anterior, posterior })
    }

    /// Makes `frame` the new key frame, with each reference window centered
    /// on the wall's envelope peak. `frame` must be the frame passed to the
    /// latest [`step`](Self::step) (or the first frame). Accumulated
    /// displacement is kept.
    pub fn reanchor(&mut self, frame: &[i16]) -> Result<()> {
        let p = self.params;
        let f = p.settings.interp_factor as i64;
        let reach = p.settings.half_window as i64 / f + SEGMENT_MARGIN;
        for state in self.walls.iter_mut() {
            let c_raw = state.center().div_euclid(f);
            let lo = (c_raw - 2 * reach).max(0) as usize;
            let hi = ((c_raw + 2 * reach).max(0) as usize).min(frame.len());
            let x: Vec<f64> = frame[lo..hi].iter().map(|&v| v as f64).collect();
            let env = envelope_of(&x);
            let a = (c_raw - reach).max(lo as i64 + 1) - lo as i64;
            let b = (c_raw + reach).min(hi as i64 - 2) - lo as i64;
            if a > b {
                return Err(Error::OutOfBounds {
                    lo: c_raw - reach,
                    hi: c_raw + reach,
                    len: frame.len(),
                });
            }
            let (a, b) = (a as usize, b as usize);
            let k = (a..=b).max_by(|&i, &j| env[i].total_cmp(&env[j]).then(j.cmp(&i))).unwrap();
            let off = parabolic_offset(env[k - 1], env[k], env[k + 1]);
            let u = (((lo + k) as f64 + off) * f as f64).round() as i64;
            let cum = state.cum();
            *state = WallState::start(&p, frame, u)?;
            state.key_cum = cum;
        }
        Ok(())
    }

    /// Accumulated diameter change since the first frame, in mm.
    pub fn distension_mm(&self) -> f64 {
        (self.walls[1].cum() - self.walls[0].cum()) * self.sample_mm
    }

    /// Accumulated displacement of each wall, interpolated samples.
    pub fn displacements(&self) -> [f64; 2] {
        [self.walls[0].cum(), self.walls[1].cum()]
    }

    /// Current window centers, interpolated samples.
    pub fn centers(&self) -> [i64; 2] {
        [self.walls[0].center(), self.walls[1].center()]
    }
}

fn segment_for(
    settings: &TrackerSettings,
    frame: &[i16],
    center: i64,
    crest: i64,
    wide: i64,
    crest_half: i64,
) -> Result<Segment> {
    let w = settings.half_window as i64;
    let r = wide + 1;
    let lo = (center - w - r).min(crest - crest_half - r);
    let hi = (center + w + r).max(crest + crest_half + r);
    Segment::build(frame, lo, hi, settings.interp_factor)
}

fn frame_step(header: &RfStreamHeader, rate_hz: f64) -> Result<usize> {
    let step = header.prf() / rate_hz;
    if !(rate_hz > 0.0) || step < 1.0 - 1e-9 || (step - step.round()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "tracking rate {rate_hz} Hz must divide the PRF {} Hz",
            header.prf()
        )));
    }
    Ok(step.round() as usize)
}

/// Distension of one channel over `ticks`, sampled every `prf / rate_hz`
/// frames. Windows are re-anchored on the first sampled frame at or after
/// each tick in `anchors`.
pub fn track_distension<S: FrameSource + ?Sized>(
    source: &S,
    region: &WallRegion,
    rate_hz: f64,
    ticks: Range<usize>,
    settings: TrackerSettings,
    anchors: &[usize],
) -> Result<SampledSeries> {
    let header = *source.header();
    let step = frame_step(&header, rate_hz)?;
    let avail = source.ticks();
    if ticks.start < avail.start || ticks.end > avail.end || ticks.is_empty() {
        return Err(Error::OutOfBounds {
            lo: ticks.start as i64,
            hi: ticks.end as i64,
            len: avail.end,
        });
    }
    let ch = region.channel;
    let first = source.frame(ticks.start, ch);
    let mut tracker = WallTracker::new(region, &header, rate_hz, settings, &first)?;
    let mut anchors = anchors.iter().copied().filter(|&a| a >= ticks.start).peekable();
    if anchors.peek() == Some(&ticks.start) {
        tracker.reanchor(&first)?;
    }
    while anchors.peek().is_some_and(|&a| a <= ticks.start) {
        anchors.next();
    }
    let mut values = vec![0.0];
    for tick in ticks.clone().step_by(step).skip(1) {
        let frame = source.frame(tick, ch);
        tracker.step(&frame)?;
        if anchors.peek().is_some_and(|&a| a <= tick) {
            while anchors.peek().is_some_and(|&a| a <= tick) {
                anchors.next();
            }
            tracker.reanchor(&frame)?;
        }
        values.push(tracker.distension_mm());
    }
    SampledSeries::new(values, rate_hz, ticks.start as f64 / header.prf())
}

/// Distension of every region's channel, channels tracked concurrently.
pub fn track_channels<S: FrameSource + ?Sized>(
    source: &S,
    regions: &[WallRegion],
    rate_hz: f64,
    ticks: Range<usize>,
    settings: TrackerSettings,
    anchors: &[usize],
) -> Result<Vec<SampledSeries>> {
    regions
        .par_iter()
        .map(|r| track_distension(source, r, rate_hz, ticks.clone(), settings, anchors))
        .collect()
}

/// Distension over the whole stream with the optimized tracker.
pub fn distension_series<S: FrameSource + ?Sized>(
    source: &S,
    region: &WallRegion,
    rate_hz: f64,
) -> Result<SampledSeries> {
    track_distension(source, region, rate_hz, source.ticks(), TrackerSettings::optimized(), &[])
}

/// Carrier-crest peak tracking of a single echo centered near `center_u`.
///
/// Each frame's peak is the interpolated RF maximum within half a carrier
/// period of the previous peak; steps beyond the physiological bound at
/// `rate_hz` are flagged for a widened correlation search.
pub fn track_peak<F: AsRef<[i16]>>(
    frames: &[F],
    header: &RfStreamHeader,
    center_u: usize,
    rate_hz: f64,
    settings: &TrackerSettings,
) -> Result<Vec<PeakStep>> {
    let (bound, _) = settings.radii(rate_hz);
    let half = ((header.rf_rate() * settings.interp_factor as f64 / settings.carrier_hz) / 2.0).floor() as i64;
    let mut out = Vec::with_capacity(frames.len());
    let mut prev: Option<i64> = None;
    for f in frames {
        let p0 = prev.unwrap_or(center_u as i64);
        let seg = Segment::build(f.as_ref(), p0 - half, p0 + half, settings.interp_factor)?;
        let p = seg.argmax(p0 - half, p0 + half);
        let dp = prev.map_or(0, |q| p - q);
        out.push(PeakStep {
            peak_u: p,
            delta_p: dp,
            fallback_used: dp.abs() > bound,
        });
        prev = Some(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rf::FORMAT_VERSION;
    use std::f64::consts::PI;

    fn header() -> RfStreamHeader {
        RfStreamHeader {
            version: FORMAT_VERSION,
            n_channels: 1,
            rf_rate_hz: 80_000_000,
            prf_hz: 2000,
            samples_per_frame: 3200,
            element_spacing_um: 18_000,
            speed_of_sound_mmps: 1_480_000,
        }
    }

    fn burst(t: f64) -> f64 {
        // 2.5-cycle Hann-windowed 5 MHz burst, t in raw samples.
        let half = 20.0;
        if t.abs() >= half {
            return 0.0;
        }
        0.5 * (1.0 + (PI * t / half).cos()) * (2.0 * PI * t / 16.0).cos()
    }

    fn frame(centers: &[f64], amp: f64) -> Vec<i16> {
        (0..3200)
            .map(|i| {
                let v: f64 = centers.iter().map(|&c| burst(i as f64 - c)).sum();
                (amp * v).round() as i16
            })
            .collect()
    }

    #[test]
    fn depth_of_one_interpolated_sample() {
        let dz = interp_sample_m(&header(), INTERP_FACTOR);
        assert!((dz - 0.616_667e-6).abs() < 1e-11, "{dz}");
    }

    #[test]
    fn snr_log_identities() {
        let h = header();
        let region = WallRegion {
            channel: 0,
            anterior_center_u: 1200 * 15,
            posterior_center_u: 2500 * 15,
            half_window_w: 240,
            snr_db: 0.0,
        };
        let mut f = vec![0i16; 3200];
        for (i, v) in f.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 7 } else { -7 };
        }
        assert!(snr_db(&f, &region, &h).abs() < 1e-12);
        for r in [1184..1216, 2484..2516] {
            f[r].iter_mut().for_each(|v| *v *= 10);
        }
        assert!((snr_db(&f, &region, &h) - 20.0).abs() < 1e-12);
        assert_eq!(snr_db(&vec![0i16; 3200], &region, &h), f64::INFINITY);
    }

    #[test]
    fn gate_boundary_passes() {
        // Wall mean-abs ratio of 10^0.75 (= 5.6234) is exactly 15 dB.
        let h = header();
        let region = WallRegion {
            channel: 0,
            anterior_center_u: 1200 * 15,
            posterior_center_u: 2500 * 15,
            half_window_w: 240,
            snr_db: 0.0,
        };
        let mut f = vec![1000i16; 3200];
        let wall = (1000.0 * 10f64.powf(0.75)).round() as i16;
        for c in [1200, 2500] {
            for v in &mut f[c - 16..c + 16] {
                *v = wall;
            }
        }
        let snr = snr_db(&f, &region, &h);
        assert!((snr - 15.0).abs() < 1e-3, "{snr}");
        assert!(passes_gate(snr, SNR_GATE_DB));
        assert!(!passes_gate(14.9, SNR_GATE_DB));
        assert!((20.0 * 5.623f64.log10() - 15.0).abs() < 1e-3);
    }

    #[test]
    fn identifies_two_walls() {
        let f = frame(&[1200.0, 2497.0], 20000.0);
        let region = identify_walls(&[f], 0, &header(), SNR_GATE_DB).unwrap();
        assert!((region.anterior_center_u as i64 - 1200 * 15).abs() <= 2);
        assert!((region.posterior_center_u as i64 - 2497 * 15).abs() <= 2);
        assert_eq!(region.snr_db, f64::INFINITY);
    }

    #[test]
    fn pure_noise_has_no_artery() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f: Vec<i16> = (0..3200)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * 500.0)
            .map(|v| v.round() as i16)
            .collect();
        assert!(matches!(
            identify_walls(&[f], 2, &header(), SNR_GATE_DB),
            Err(Error::NoArteryFound { channel: 2 })
        ));
        assert!(matches!(
            identify_walls(&[vec![0i16; 3200]], 0, &header(), SNR_GATE_DB),
            Err(Error::NoArteryFound { .. })
        ));
    }

    fn upsampled(f: &[i16]) -> Vec<f64> {
        spline_upsample(&f.iter().map(|&v| v as f64).collect::<Vec<_>>(), INTERP_FACTOR)
    }

    #[test]
    fn identical_frames_give_zero_shift() {
        let a = upsampled(&frame(&[1500.0], 20000.0));
        let e = xcorr_shift(&a, &a, 1500 * 15, 240, -60, 60).unwrap();
        assert_eq!(e.delta, 0);
        assert!(e.fraction.abs() < 0.05);
        assert!((e.peak_corr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constructed_integer_shift() {
        let a: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 211) as f64 - 105.0).collect();
        let b: Vec<f64> = (0..4000).map(|i| a[(i as i64 - 5).clamp(0, 3999) as usize]).collect();
        let e = xcorr_shift(&a, &b, 2000, 240, -60, 60).unwrap();
        assert_eq!(e.delta, 5);
        assert!(e.search_lo <= e.delta && e.delta <= e.search_hi);
    }

    #[test]
    fn subsample_burst_shift() {
        // 0.2 raw samples = 3 interpolated samples.
        let a = upsampled(&frame(&[1500.0], 20000.0));
        let b = upsampled(&frame(&[1500.2], 20000.0));
        let e = xcorr_shift(&a, &b, 1500 * 15, 240, -60, 60).unwrap();
        assert!((e.delta - 3).abs() <= 1, "{e:?}");
        assert!((e.refined() - 3.0).abs() < 0.5, "{e:?}");
    }

    #[test]
    fn out_of_bounds_search() {
        let a = vec![0.0; 1000];
        assert!(matches!(xcorr_shift(&a, &a, 300, 240, -61, 0), Err(Error::OutOfBounds { .. })));
        assert!(xcorr_shift(&a, &a, 500, 240, 3, 2).is_err());
    }

    #[test]
    fn tie_prefers_small_then_negative() {
        assert!(beats(0, 1.0, 1, 1.0));
        assert!(beats(-1, 1.0, 1, 1.0));
        assert!(!beats(2, 1.0, -1, 1.0));
        assert!(beats(5, 1.1, 0, 1.0));
    }

    #[test]
    fn stationary_peak() {
        let f = frame(&[1500.0], 20000.0);
        let frames = vec![f; 10];
        let steps = track_peak(&frames, &header(), 1500 * 15, 2000.0, &TrackerSettings::optimized()).unwrap();
        assert!(steps.iter().all(|s| s.delta_p == 0 && !s.fallback_used));
    }

    #[test]
    fn ramp_peak_drift() {
        let frames: Vec<Vec<i16>> = (0..=20).map(|k| frame(&[1500.0 + 0.1 * k as f64], 20000.0)).collect();
        let steps = track_peak(&frames, &header(), 1500 * 15, 2000.0, &TrackerSettings::optimized()).unwrap();
        let drift: i64 = steps.iter().map(|s| s.delta_p).sum();
        assert!((drift - 30).abs() <= 1, "{drift}");
    }

    #[test]
    fn jump_triggers_fallback() {
        let frames = vec![frame(&[1500.0], 20000.0), frame(&[1500.0 + 50.0 / 15.0], 20000.0)];
        let steps = track_peak(&frames, &header(), 1500 * 15, 2000.0, &TrackerSettings::optimized()).unwrap();
        assert!(steps[1].fallback_used, "{steps:?}");
    }

    fn track(frames: &[Vec<i16>], centers: [usize; 2], settings: TrackerSettings) -> (Vec<f64>, Vec<FrameShift>) {
        let region = WallRegion {
            channel: 0,
            anterior_center_u: centers[0] * 15,
            posterior_center_u: centers[1] * 15,
            half_window_w: 240,
            snr_db: f64::INFINITY,
        };
        let mut t = WallTracker::new(&region, &header(), 2000.0, settings, &frames[0]).unwrap();
        let mut dist = vec![0.0];
        let mut shifts = Vec::new();
        for f in &frames[1..] {
            shifts.push(t.step(f).unwrap());
            dist.push(t.distension_mm());
        }
        (dist, shifts)
    }

    #[test]
    fn no_motion_no_distension() {
        let frames = vec![frame(&[1500.0, 2500.0], 20000.0); 8];
        let (d, _) = track(&frames, [1500, 2500], TrackerSettings::optimized());
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn translation_is_rejected() {
        let frames: Vec<_> = (0..40)
            .map(|k| {
                let x = 0.07 * k as f64;
                frame(&[1500.0 + x, 2500.0 + x], 20000.0)
            })
            .collect();
        for settings in [TrackerSettings::optimized(), TrackerSettings::exhaustive()] {
            let (d, shifts) = track(&frames, [1500, 2500], settings);
            let mm = interp_sample_m(&header(), 15) * 1e3;
            assert!(d.iter().all(|v| v.abs() < mm), "{d:?}");
            for s in shifts {
                assert!((s.anterior.delta - s.posterior.delta).abs() <= 1);
            }
        }
    }

    #[test]
    fn tracks_known_distension() {
        // Posterior wall moves 0.05 raw samples per frame for 60 frames.
        let frames: Vec<_> = (0..60)
            .map(|k| frame(&[1500.0, 2500.0 + 0.05 * k as f64], 20000.0))
            .collect();
        let (d, _) = track(&frames, [1500, 2500], TrackerSettings::optimized());
        let mm_per_raw = 1480.0 / (2.0 * 80e6) * 1e3;
        let expect = 0.05 * 59.0 * mm_per_raw;
        assert!((d[59] - expect).abs() < 0.02 * expect, "{} vs {expect}", d[59]);
    }
}
