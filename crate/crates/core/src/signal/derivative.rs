use std::ops::Range;

use super::SampledSeries;
use crate::error::{Error, Result};

/// Relative band within which two second-derivative values count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

/// Time of the largest central-difference second derivative inside `window`.
///
/// Indices on the series edges (where no central difference exists) are
/// skipped. Ties go to the earliest index. The winning index is refined by
/// a parabola through its neighbours' second derivatives when both lie in
/// the window.
pub fn second_derivative_max(series: &SampledSeries, window: Range<usize>) -> Result<f64> {
    let n = series.len();
    if window.start >= window.end || window.end > n {
        return Err(Error::OutOfBounds {
            lo: window.start as i64,
            hi: window.end as i64,
            len: n,
        });
    }
    if window.len() < 5 {
        return Err(Error::invalid(format!(
            "second-derivative window needs at least 5 samples, got {}",
            window.len()
        )));
    }
    let x = &series.values;
    let lo = window.start.max(1);
    let hi = window.end.min(n - 1);
    let d2: Vec<(usize, f64)> = (lo..hi)
        .map(|i| (i, x[i + 1] - 2.0 * x[i] + x[i - 1]))
        .collect();
    let scale = d2.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let tol = TIE_TOLERANCE * scale;
    let mut best = 0;
    for k in 1..d2.len() {
        if d2[k].1 > d2[best].1 + tol {
            best = k;
        }
    }
    let mut frac = 0.0;
    if best > 0 && best + 1 < d2.len() {
        let (a, b, c) = (d2[best - 1].1, d2[best].1, d2[best + 1].1);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            frac = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok(series.time_of(d2[best].0) + frac / series.rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_trough() {
        let f = 2.0;
        let rate = 1000.0;
        let n = (rate / f) as usize;
        let s = SampledSeries::new(
            (0..n).map(|i| (2.0 * PI * f * i as f64 / rate).sin()).collect(),
            rate,
            0.0,
        )
        .unwrap();
        let t = second_derivative_max(&s, 0..n).unwrap();
        assert!((t - 0.75 / f).abs() <= 1.0 / rate, "{t}");
    }

    #[test]
    fn parabola_ties_to_earliest() {
        let s = SampledSeries::new((0..40).map(|i| (i * i) as f64).collect(), 10.0, 0.0).unwrap();
        let t = second_derivative_max(&s, 10..30).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        let s = SampledSeries::new((0..40).map(|i| 0.37 * (i as f64 / 7.0).powi(2)).collect(), 10.0, 0.0).unwrap();
        assert!((second_derivative_max(&s, 3..30).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn logistic_foot() {
        // d(t) = 1 / (1 + exp(-k (t - t1))) has d'' maximal at
        // t1 - ln(2 + sqrt 3) / k, on the foot side of t1.
        let (k, t1, rate) = (60.0, 0.05, 10_000.0);
        let n = 1000;
        let s = SampledSeries::new(
            (0..n)
                .map(|i| 1.0 / (1.0 + (-k * (i as f64 / rate - t1)).exp()))
                .collect(),
            rate,
            0.0,
        )
        .unwrap();
        let t = second_derivative_max(&s, 0..n).unwrap();
        let analytic = t1 - (2.0 + 3f64.sqrt()).ln() / k;
        assert!(t < t1);
        assert!((t - analytic).abs() <= 1.0 / rate, "{t} vs {analytic}");
    }

    #[test]
    fn window_bounds() {
        let s = SampledSeries::new(vec![0.0; 10], 1.0, 0.0).unwrap();
        assert!(matches!(second_derivative_max(&s, 5..12), Err(Error::OutOfBounds { .. })));
        assert!(second_derivative_max(&s, 2..5).is_err());
    }
}
