use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::SampledSeries;
use crate::error::{Error, Result};

/// Band-limited resampling to `target_rate_hz`.
///
/// The chord through the end points is removed, the residual is extended
/// by point reflection into a smooth periodic sequence, and the trigonometric
/// interpolant of that sequence is evaluated on the new grid before the
/// chord is added back. Affine inputs are therefore reproduced exactly, and
/// the output spans the same time interval as the input (last output sample
/// at or before the last input sample).
pub fn resample_to(series: &SampledSeries, target_rate_hz: f64) -> Result<SampledSeries> {
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(Error::invalid(format!("target rate must be positive, got {target_rate_hz}")));
    }
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if target_rate_hz == series.rate_hz {
        return Ok(series.clone());
    }
    let n = series.len();
    let ratio = target_rate_hz / series.rate_hz;
    let n_out = ((n - 1) as f64 * ratio + 1e-9).floor() as usize + 1;
    if n < 2 {
        return Ok(SampledSeries {
            values: vec![series.values[0]; n_out],
            rate_hz: target_rate_hz,
            t0_s: series.t0_s,
        });
    }

    let x = &series.values;
    let (first, last) = (x[0], x[n - 1]);
    let span = (n - 1) as f64;
    let chord = |pos: f64| first + (last - first) * pos / span;

    // Odd periodic extension of the chord residual, period 2(n-1).
    let period = 2 * (n - 1);
    let mut ext: Vec<Complex<f64>> = Vec::with_capacity(period);
    ext.extend(x[..n - 1].iter().enumerate().map(|(i, v)| Complex::new(v - chord(i as f64), 0.0)));
    for i in 0..n - 1 {
        let j = n - 1 - i;
        ext.push(Complex::new(-(x[j] - chord(j as f64)), 0.0));
    }

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(period).process(&mut ext);

    let out_period_f = period as f64 * ratio;
    let out_period = out_period_f.round() as usize;
    let residual: Vec<f64> = if (out_period_f - out_period as f64).abs() < 1e-9 && out_period >= period {
        // Zero-pad the spectrum; the Nyquist bin of the even-length input is split.
        let half = period / 2;
        let mut spec = vec![Complex::new(0.0, 0.0); out_period];
        spec[..half].copy_from_slice(&ext[..half]);
        for k in 1..half {
            spec[out_period - k] = ext[period - k];
        }
        spec[half] += ext[half] * 0.5;
        spec[out_period - half] += ext[half] * 0.5;
        planner.plan_fft_inverse(out_period).process(&mut spec);
        let scale = 1.0 / period as f64;
        spec[..n_out].iter().map(|c| c.re * scale).collect()
    } else {
        // Direct evaluation of the trigonometric interpolant.
        let half = period / 2;
        let scale = 1.0 / period as f64;
        (0..n_out)
            .map(|m| {
                let pos = m as f64 / ratio;
                let mut acc = ext[0].re;
                for (k, c) in ext.iter().enumerate().take(half).skip(1) {
                    let w = 2.0 * PI * k as f64 * pos / period as f64;
                    acc += 2.0 * (c.re * w.cos() - c.im * w.sin());
                }
                let w = PI * pos;
                acc += ext[half].re * w.cos();
                acc * scale
            })
            .collect()
    };

    let values = residual
        .into_iter()
        .enumerate()
        .map(|(m, r)| r + chord(m as f64 / ratio))
        .collect();
    Ok(SampledSeries {
        values,
        rate_hz: target_rate_hz,
        t0_s: series.t0_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_rate_is_identity() {
        let s = SampledSeries::new((0..50).map(|i| (i as f64).sqrt()).collect(), 2000.0, 0.3).unwrap();
        assert_eq!(resample_to(&s, 2000.0).unwrap(), s);
    }

    #[test]
    fn ramp_survives_upsampling() {
        let s = SampledSeries::new((0..160).map(|i| 3.0 + 0.5 * i as f64).collect(), 2000.0, 0.0).unwrap();
        let r = resample_to(&s, 10_000.0).unwrap();
        assert_eq!(r.len(), 159 * 5 + 1);
        let range = 0.5 * 159.0;
        for (m, v) in r.values.iter().enumerate() {
            let expect = 3.0 + 0.5 * m as f64 / 5.0;
            assert!((v - expect).abs() < 1e-6 * range);
        }
        assert!((r.duration_s() - s.duration_s()).abs() <= 1.0 / 10_000.0);
    }

    #[test]
    fn sinusoid_matches_analytic() {
        let f = 10.0;
        let s = SampledSeries::new(
            (0..2000).map(|i| (2.0 * PI * f * i as f64 / 2000.0).sin()).collect(),
            2000.0,
            0.0,
        )
        .unwrap();
        let r = resample_to(&s, 10_000.0).unwrap();
        let err = r
            .values
            .iter()
            .enumerate()
            .map(|(m, v)| (v - (2.0 * PI * f * m as f64 / 10_000.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.005, "max err {err}");
    }

    #[test]
    fn non_integer_ratio_uses_direct_path() {
        let f = 3.0;
        let s = SampledSeries::new(
            (0..300).map(|i| (2.0 * PI * f * i as f64 / 300.0).cos() + 0.1 * i as f64).collect(),
            300.0,
            0.0,
        )
        .unwrap();
        let r = resample_to(&s, 470.0).unwrap();
        for (m, v) in r.values.iter().enumerate() {
            let t = m as f64 / 470.0;
            let expect = (2.0 * PI * f * t).cos() + 0.1 * 300.0 * t;
            assert!((v - expect).abs() < 5e-3, "{m}: {v} vs {expect}");
        }
    }

    #[test]
    fn rejects_non_positive_rate() {
        let s = SampledSeries::new(vec![1.0, 2.0], 10.0, 0.0).unwrap();
        assert!(resample_to(&s, 0.0).is_err());
    }
}
