use std::f64::consts::PI;

use super::SampledSeries;
use crate::error::{Error, Result};

/// One biquad in transposed direct form II, `a0` normalized to 1.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Steady-state delay line for a unit-gain section at constant input 1.
    fn steady_state(&self) -> [f64; 2] {
        [1.0 - self.b[0], self.b[2] - self.a[1]]
    }
}

/// Digital Butterworth low-pass as a cascade of second-order sections
/// (bilinear transform with frequency prewarping).
#[derive(Debug, Clone)]
pub struct Butterworth {
    sections: Vec<Biquad>,
    order: usize,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        if order == 0 || !order.is_multiple_of(2) {
            return Err(Error::invalid(format!("filter order must be even and positive, got {order}")));
        }
        if !(cutoff_hz > 0.0) || cutoff_hz >= rate_hz / 2.0 {
            return Err(Error::invalid(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, Nyquist = {} Hz)",
                rate_hz / 2.0
            )));
        }
        let k = 2.0 * rate_hz;
        let wc = k * (PI * cutoff_hz / rate_hz).tan();
        let sections = (0..order / 2)
            .map(|i| {
                // Analog prototype pole pair at angle theta from the negative real axis.
                let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
                let re = -theta.sin();
                let z2 = k * k - 2.0 * re * wc * k + wc * wc;
                let z1 = 2.0 * (wc * wc - k * k);
                let z0 = k * k + 2.0 * re * wc * k + wc * wc;
                let g = wc * wc / z2;
                Biquad {
                    b: [g, 2.0 * g, g],
                    a: [z1 / z2, z0 / z2],
                }
            })
            .collect();
        Ok(Self { sections, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Squared magnitude response of one pass at `freq_hz`.
    pub fn gain(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / rate_hz;
        let (c1, s1, c2, s2) = (w.cos(), -w.sin(), (2.0 * w).cos(), -(2.0 * w).sin());
        self.sections.iter().fold(1.0, |acc, q| {
            let nr = q.b[0] + q.b[1] * c1 + q.b[2] * c2;
            let ni = q.b[1] * s1 + q.b[2] * s2;
            let dr = 1.0 + q.a[0] * c1 + q.a[1] * c2;
            let di = q.a[0] * s1 + q.a[1] * s2;
            acc * (nr * nr + ni * ni) / (dr * dr + di * di)
        })
    }

    /// Causal pass with the delay lines primed to the steady state of `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        for q in &self.sections {
            let zi = q.steady_state();
            let (mut z1, mut z2) = (zi[0] * x0, zi[1] * x0);
            for v in x.iter_mut() {
                let input = *v;
                let y = q.b[0] * input + z1;
                z1 = q.b[1] * input - q.a[0] * y + z2;
                z2 = q.b[2] * input - q.a[1] * y;
                *v = y;
            }
        }
    }

    /// Forward-backward application with point-reflection padding of
    /// `3 * order` samples at each end.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = 3 * self.order;
        if x.len() <= pad {
            return Err(Error::invalid(format!(
                "series of {} samples too short for zero-phase filtering (needs > {pad})",
                x.len()
            )));
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
        self.run(&mut ext);
        ext.reverse();
        self.run(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Zero-phase Butterworth low-pass (forward and backward passes).
pub fn zero_phase_lowpass(series: &SampledSeries, order: usize, cutoff_hz: f64) -> Result<SampledSeries> {
    let filt = Butterworth::lowpass(order, cutoff_hz, series.rate_hz)?;
    Ok(SampledSeries {
        values: filt.filtfilt(&series.values)?,
        rate_hz: series.rate_hz,
        t0_s: series.t0_s,
    })
}
