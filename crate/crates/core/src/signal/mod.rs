//! DSP primitives shared by every stage of the pipeline.
//!
//! All routines are pure functions of their inputs. None of them keep
//! state between calls, so they can be used freely from worker threads.

mod derivative;
mod envelope;
mod filter;
mod resample;
mod spline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use derivative::second_derivative_max;
pub use envelope::{envelope, envelope_of};
pub use filter::{zero_phase_lowpass, Butterworth};
pub use resample::resample_to;
pub use spline::{interp_spline, spline_upsample};

/// Uniformly sampled series with a time origin.
///
/// Sample `i` is taken at `t0_s + i / rate_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSeries {
    pub values: Vec<f64>,
    pub rate_hz: f64,
    pub t0_s: f64,
}

impl SampledSeries {
    pub fn new(values: Vec<f64>, rate_hz: f64, t0_s: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::invalid(format!("sampling rate must be positive, got {rate_hz}")));
        }
        Ok(Self { values, rate_hz, t0_s })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.t0_s + index as f64 / self.rate_hz
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.time_of(i))
    }

    pub fn duration_s(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 / self.rate_hz
    }

    /// Index of the sample nearest to `t`, clamped to the series.
    pub fn index_at(&self, t: f64) -> usize {
        let idx = ((t - self.t0_s) * self.rate_hz).round();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.values.len() - 1)
        }
    }

    /// Linear interpolation at time `t`; `None` outside the support.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let x = (t - self.t0_s) * self.rate_hz;
        let last = (self.values.len() - 1) as f64;
        if !(x >= -1e-9 && x <= last + 1e-9) {
            return None;
        }
        let x = x.clamp(0.0, last);
        let i = (x.floor() as usize).min(self.values.len() - 1);
        if i + 1 >= self.values.len() {
            return Some(self.values[i]);
        }
        let f = x - i as f64;
        Some(self.values[i] * (1.0 - f) + self.values[i + 1] * f)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Every `step`-th sample, starting at sample 0.
    pub fn decimate(&self, step: usize) -> SampledSeries {
        let step = step.max(1);
        SampledSeries {
            values: self.values.iter().step_by(step).copied().collect(),
            rate_hz: self.rate_hz / step as f64,
            t0_s: self.t0_s,
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> SampledSeries {
        SampledSeries {
            values: self.values[range.clone()].to_vec(),
            rate_hz: self.rate_hz,
            t0_s: self.time_of(range.start),
        }
    }
}
