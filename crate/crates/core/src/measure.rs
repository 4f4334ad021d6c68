//! Waveform statistics over one sampled period.
//!
//! Means and RMS values are trapezoidal integrals over the uniform grid,
//! both period endpoints included. Extremes come straight from the samples,
//! so peak-to-peak is exact only to within `max slope * dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    pub mean: f64,
    pub rms: f64,
    pub peak_to_peak: f64,
    pub min: f64,
    pub max: f64,
}

/// Trapezoidal time average of `f(k)` over `samples` points spanning one period.
fn trapezoid_mean(samples: usize, f: impl Fn(usize) -> f64) -> f64 {
    if samples == 1 {
        return f(0);
    }
    let last = samples - 1;
    let interior: f64 = (1..last).map(&f).sum();
    (0.5 * (f(0) + f(last)) + interior) / last as f64
}

pub fn stats(signal: &[f64]) -> Result<SignalStats> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let mean = trapezoid_mean(signal.len(), |k| signal[k]);
    let mean_square = trapezoid_mean(signal.len(), |k| signal[k] * signal[k]);
    let (min, max) = signal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(SignalStats {
        // rounding can push a flat signal's mean a hair outside its range
        mean: mean.clamp(min, max),
        rms: mean_square.sqrt().max(mean.abs()),
        peak_to_peak: max - min,
        min,
        max,
    })
}

fn check_aligned(v: &[f64], i: &[f64]) -> Result<()> {
    if v.len() != i.len() {
        return Err(Error::LengthMismatch(v.len(), i.len()));
    }
    if v.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(())
}

/// Time average of `v(t) i(t)` over the period.
pub fn average_power(v: &[f64], i: &[f64]) -> Result<f64> {
    check_aligned(v, i)?;
    Ok(trapezoid_mean(v.len(), |k| v[k] * i[k]))
}

/// Real power over apparent power, `|P| / (V_rms I_rms)`.
pub fn power_factor(v: &[f64], i: &[f64]) -> Result<f64> {
    check_aligned(v, i)?;
    let p = average_power(v, i)?;
    let v_rms = stats(v)?.rms;
    let i_rms = stats(i)?.rms;
    if v_rms == 0.0 {
        return Err(Error::ZeroRms("voltage"));
    }
    if i_rms == 0.0 {
        return Err(Error::ZeroRms("current"));
    }
    Ok((p.abs() / (v_rms * i_rms)).min(1.0))
}
