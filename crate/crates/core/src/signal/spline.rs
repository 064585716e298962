use super::SampledSeries;
use crate::error::{Error, Result};

/// Upsamples `values` by an integer `factor` with a natural cubic spline.
///
/// The output has `(n - 1) * factor + 1` samples and passes through every
/// input sample exactly (output index `i * factor` equals `values[i]`).
pub fn interp_spline(series: &SampledSeries, factor: usize) -> Result<SampledSeries> {
    if factor == 0 {
        return Err(Error::invalid("interpolation factor must be at least 1"));
    }
    if series.len() < 4 {
        return Err(Error::invalid(format!(
            "spline interpolation needs at least 4 samples, got {}",
            series.len()
        )));
    }
    if factor == 1 {
        return Ok(series.clone());
    }
    Ok(SampledSeries {
        values: spline_upsample(&series.values, factor),
        rate_hz: series.rate_hz * factor as f64,
        t0_s: series.t0_s,
    })
}

/// Second derivatives of the natural cubic spline through uniformly spaced
/// samples (unit knot spacing).
fn natural_moments(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on M[i-1] + 4 M[i] + M[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]),
    // interior unknowns only; M[0] = M[n-1] = 0.
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        if i == 0 {
            c[i] = 0.25;
            d[i] = rhs / 4.0;
        } else {
            let denom = 4.0 - c[i - 1];
            c[i] = 1.0 / denom;
            d[i] = (rhs - d[i - 1]) / denom;
        }
    }
    m[k] = d[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = d[i] - c[i] * m[i + 2];
    }
    m
}

/// Raw-slice natural cubic spline upsampling. See [`interp_spline`].
pub fn spline_upsample(y: &[f64], factor: usize) -> Vec<f64> {
    let n = y.len();
    if n == 0 || factor <= 1 {
        return y.to_vec();
    }
    if n == 1 {
        return y.to_vec();
    }
    let m = natural_moments(y);
    // Per-phase weights shared by all intervals.
    let weights: Vec<[f64; 4]> = (0..factor)
        .map(|j| {
            let b = j as f64 / factor as f64;
            let a = 1.0 - b;
            [a, b, (a * a * a - a) / 6.0, (b * b * b - b) / 6.0]
        })
        .collect();
    let mut out = Vec::with_capacity((n - 1) * factor + 1);
    for i in 0..n - 1 {
        let (y0, y1, m0, m1) = (y[i], y[i + 1], m[i], m[i + 1]);
        out.push(y0);
        for w in &weights[1..] {
            out.push(w[0] * y0 + w[1] * y1 + w[2] * m0 + w[3] * m1);
        }
    }
    out.push(y[n - 1]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ramp_is_reproduced() {
        let s = SampledSeries::new(vec![0.0, 1.0, 2.0, 3.0], 80e6, 0.0).unwrap();
        let up = interp_spline(&s, 15).unwrap();
        assert_eq!(up.len(), 46);
        assert_eq!(up.rate_hz, 1.2e9);
        for (i, v) in up.values.iter().enumerate() {
            assert!((v - i as f64 / 15.0).abs() < 1e-12, "{i}: {v}");
        }
    }

    #[test]
    fn factor_one_is_identity() {
        let s = SampledSeries::new(vec![3.0, -1.0, 4.0, 1.0, 5.0], 10.0, 0.5).unwrap();
        assert_eq!(interp_spline(&s, 1).unwrap(), s);
    }

    #[test]
    fn knots_are_exact() {
        let y: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let up = spline_upsample(&y, 7);
        for (i, v) in y.iter().enumerate() {
            assert_eq!(up[i * 7], *v);
        }
    }

    #[test]
    fn sinusoid_at_15x() {
        let (fs, f) = (80e6, 5e6);
        let n = 400;
        let y: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
        let s = SampledSeries::new(y, fs, 0.0).unwrap();
        let up = interp_spline(&s, 15).unwrap();
        let lo = up.len() / 20;
        let hi = up.len() - lo;
        let max_err = (lo..hi)
            .map(|j| (up.values[j] - (2.0 * PI * f * j as f64 / 1.2e9).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.01, "max err {max_err}");
    }

    #[test]
    fn errors() {
        let s = SampledSeries::new(vec![1.0, 2.0, 3.0], 1.0, 0.0).unwrap();
        assert!(interp_spline(&s, 2).is_err());
        let s = SampledSeries::new(vec![1.0, 2.0, 3.0, 4.0], 1.0, 0.0).unwrap();
        assert!(interp_spline(&s, 0).is_err());
    }
}
