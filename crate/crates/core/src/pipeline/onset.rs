use crate::pwv::{DEPTH_FRACTION, REFRACTORY_S};

/// Causal beat-onset detector for a growing distension series.
///
/// A sample is an onset once one refractory period of later samples has
/// arrived and it is the strict minimum over a refractory period on either
/// side, in the lowest part of the surrounding half-period range. The
/// rules match the batch detector in [`crate::pwv::detect_beat_minima`].
#[derive(Debug, Clone)]
pub struct OnsetDetector {
    refractory: usize,
    half_period: usize,
    next: usize,
    last: Option<usize>,
}

impl OnsetDetector {
    /// `period_s` is the expected beat period, `rate_hz` the series rate.
    pub fn new(period_s: f64, rate_hz: f64) -> Self {
        let refractory = ((REFRACTORY_S.min(0.6 * period_s)) * rate_hz).round().max(1.0) as usize;
        Self {
            refractory,
            half_period: ((period_s * rate_hz) / 2.0).round().max(1.0) as usize,
            next: 0,
            last: None,
        }
    }

    /// Samples that must follow an onset before it is confirmed.
    pub fn lag(&self) -> usize {
        self.refractory
    }

    /// Onsets confirmed by the samples of `x` seen so far, in order. `x`
    /// must only ever grow between calls.
    pub fn update(&mut self, x: &[f64]) -> Vec<usize> {
        let r = self.refractory;
        let mut out = Vec::new();
        while self.next + r < x.len() {
            let i = self.next;
            self.next += 1;
            if i < r || self.last.is_some_and(|l| i - l < r) {
                continue;
            }
            let v = x[i];
            if !(x[i - r..i].iter().all(|&u| u > v) && x[i + 1..=i + r].iter().all(|&u| u >= v)) {
                continue;
            }
            let lo = i.saturating_sub(self.half_period);
            let hi = (i + self.half_period).min(x.len() - 1);
            let (mn, mx) = x[lo..=hi]
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &u| (a.min(u), b.max(u)));
            if v > mn + DEPTH_FRACTION * (mx - mn) {
                continue;
            }
            self.last = Some(i);
            out.push(i);
        }
        out
    }
}
