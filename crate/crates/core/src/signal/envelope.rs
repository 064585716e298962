use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::SampledSeries;
use crate::error::{Error, Result};

/// Magnitude of the analytic signal.
pub fn envelope(series: &SampledSeries) -> Result<SampledSeries> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(SampledSeries {
        values: envelope_of(&series.values),
        rate_hz: series.rate_hz,
        t0_s: series.t0_s,
    })
}

/// Slice form of [`envelope`]. Returns an empty vector for empty input.
///
/// The magnitude is formed from the original samples and the quadrature
/// component, so `out[i] >= |x[i]|` holds without rounding slack.
pub fn envelope_of(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    // One-sided spectrum: keep DC (and Nyquist for even n), double positives.
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let w = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= w;
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    x.iter()
        .zip(&buf)
        .map(|(&re, c)| {
            let im = c.im * scale;
            (re * re + im * im).sqrt()
        })
        .collect()
}
