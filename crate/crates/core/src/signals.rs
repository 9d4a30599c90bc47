//! Harmonic disturbance generation and delayed access to sampled signals.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("non-monotone sample time {t} (last stored {last})")]
    NonMonotone { t: f64, last: f64 },
    #[error("insufficient history: query {query} precedes oldest sample {oldest}")]
    InsufficientHistory { query: f64, oldest: f64 },
    #[error("query {query} is ahead of the newest sample {newest}")]
    Future { query: f64, newest: f64 },
    #[error("buffer is empty")]
    Empty,
    #[error("invalid buffer geometry: {0}")]
    Geometry(&'static str),
}

/// Closed frequency interval `[min, max]` known a priori for the disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBounds {
    pub min: f64,
    pub max: f64,
}

impl FrequencyBounds {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min > 0.0 && self.max > self.min && self.max.is_finite()
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.min && omega <= self.max
    }

    pub fn clamp(&self, omega: f64) -> f64 {
        omega.clamp(self.min, self.max)
    }
}

/// `δ(t) = δ₀ + Ā·sin(ωt + φ̄)`, entering at the plant input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicDisturbance {
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    /// rad
    pub phase: f64,
    #[serde(default)]
    pub offset: f64,
}

impl HarmonicDisturbance {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self { amplitude, frequency, phase, offset: 0.0 }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        disturbance_eval(self, t)
    }

    /// Checks `Ā ≥ 0`, and `ω_min < ω < ω_max` when bounds are given.
    pub fn validate(&self, bounds: Option<FrequencyBounds>) -> Vec<&'static str> {
        let mut bad = Vec::new();
        if !(self.amplitude >= 0.0) {
            bad.push("amplitude must be non-negative");
        }
        if !(self.frequency > 0.0) || !self.frequency.is_finite() {
            bad.push("disturbance frequency must be positive");
        }
        if let Some(b) = bounds {
            if !(self.frequency > b.min && self.frequency < b.max) {
                bad.push("disturbance frequency must lie strictly inside (omega_min, omega_max)");
            }
        }
        bad
    }
}

pub fn disturbance_eval(d: &HarmonicDisturbance, t: f64) -> f64 {
    d.offset + d.amplitude * (d.frequency * t + d.phase).sin()
}

/// Ring buffer of `(time, value)` samples with interpolated delayed reads.
///
/// Single writer; timestamps must be strictly increasing.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    capacity: usize,
    step: f64,
    samples: VecDeque<(f64, f64)>,
}

impl DelayBuffer {
    pub fn new(capacity: usize, step: f64) -> Result<Self, SignalError> {
        if capacity < 2 {
            return Err(SignalError::Geometry("capacity must be at least 2"));
        }
        if !(step > 0.0) {
            return Err(SignalError::Geometry("step must be positive"));
        }
        Ok(Self { capacity, step, samples: VecDeque::with_capacity(capacity) })
    }

    /// Sized for reads back to `2·tau_max` plus a margin of ten steps.
    pub fn for_delay(tau_max: f64, step: f64) -> Result<Self, SignalError> {
        if !(tau_max >= 0.0) {
            return Err(SignalError::Geometry("delay must be non-negative"));
        }
        let capacity = ((2.0 * tau_max + 10.0 * step) / step).ceil() as usize + 2;
        Self::new(capacity, step)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn oldest(&self) -> Option<(f64, f64)> {
        self.samples.front().copied()
    }

    pub fn newest(&self) -> Option<(f64, f64)> {
        self.samples.back().copied()
    }

    pub fn push(&mut self, t: f64, v: f64) -> Result<(), SignalError> {
        if let Some((last, _)) = self.samples.back() {
            if !(t > *last) {
                return Err(SignalError::NonMonotone { t, last: *last });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t, v));
        Ok(())
    }

    /// Value at `t_query`: the stored sample when the query lands on a stored
    /// timestamp (within `1e-9·step`), linear interpolation otherwise.
    pub fn sample(&self, t_query: f64) -> Result<f64, SignalError> {
        let (t0, _) = self.oldest().ok_or(SignalError::Empty)?;
        let (tn, vn) = self.newest().unwrap();
        let snap = 1e-9 * self.step;
        if t_query < t0 - snap {
            return Err(SignalError::InsufficientHistory { query: t_query, oldest: t0 });
        }
        if t_query > tn + snap {
            return Err(SignalError::Future { query: t_query, newest: tn });
        }
        if (t_query - tn).abs() <= snap {
            return Ok(vn);
        }
        // first index with time > t_query
        let idx = self.samples.partition_point(|(t, _)| *t <= t_query);
        if idx == 0 {
            return Ok(self.samples[0].1);
        }
        let (ta, va) = self.samples[idx - 1];
        if (t_query - ta).abs() <= snap {
            return Ok(va);
        }
        let (tb, vb) = self.samples[idx];
        if (tb - t_query).abs() <= snap {
            return Ok(vb);
        }
        let frac = (t_query - ta) / (tb - ta);
        Ok(va + frac * (vb - va))
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn first_paper_disturbance_at_zero() {
        let d = HarmonicDisturbance::new(3.0, 1.2, FRAC_PI_2);
        assert_eq!(d.eval(0.0), 3.0);
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let d = HarmonicDisturbance::new(0.0, 1.2, 0.3);
        for i in 0..100 {
            assert_eq!(d.eval(i as f64 * 0.37), 0.0);
        }
    }

    #[test]
    fn second_paper_disturbance_quarter_period() {
        let d = HarmonicDisturbance::new(3.0, 4.0, FRAC_PI_2);
        assert!((d.eval(FRAC_PI_4) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn offset_adds() {
        let d = HarmonicDisturbance::new(1.0, 1.0, 0.0).with_offset(0.5);
        assert_eq!(d.eval(0.0), 0.5);
    }

    #[test]
    fn validate_reports_bounds() {
        let d = HarmonicDisturbance::new(-1.0, 12.0, 0.0);
        let bad = d.validate(Some(FrequencyBounds::new(0.5, 10.0)));
        assert_eq!(bad.len(), 2);
    }

    #[test]
    fn push_and_read_back() {
        let mut b = DelayBuffer::new(8, 1e-3).unwrap();
        b.push(0.0, 1.0).unwrap();
        b.push(0.001, 2.0).unwrap();
        assert_eq!(b.sample(0.0).unwrap(), 1.0);
        assert_eq!(b.sample(0.001).unwrap(), 2.0);
    }

    #[test]
    fn repeated_time_is_rejected() {
        let mut b = DelayBuffer::new(8, 1e-3).unwrap();
        b.push(0.0, 1.0).unwrap();
        assert!(matches!(b.push(0.0, 3.0), Err(SignalError::NonMonotone { .. })));
        assert!(b.push(-1.0, 3.0).is_err());
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = DelayBuffer::new(3, 1.0).unwrap();
        for i in 0..5 {
            b.push(i as f64, i as f64 * 10.0).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert!(matches!(b.sample(0.0), Err(SignalError::InsufficientHistory { .. })));
        assert_eq!(b.sample(4.0).unwrap(), 40.0);
        assert_eq!(b.oldest(), Some((2.0, 20.0)));
    }

    #[test]
    fn interpolates_between_samples() {
        let mut b = DelayBuffer::new(4, 1.0).unwrap();
        b.push(0.0, 0.0).unwrap();
        b.push(1.0, 2.0).unwrap();
        assert_eq!(b.sample(0.5).unwrap(), 1.0);
    }

    #[test]
    fn stored_timestamp_is_bit_exact() {
        let mut b = DelayBuffer::new(16, 0.1).unwrap();
        let vals: Vec<f64> = (0..10).map(|i| (i as f64 * 0.731).sin()).collect();
        for (i, v) in vals.iter().enumerate() {
            b.push(i as f64 * 0.1, *v).unwrap();
        }
        // 0.7 - 0.3 is not bitwise 0.4 but must still snap to the stored sample
        assert_eq!(b.sample(0.7 - 0.3).unwrap().to_bits(), vals[4].to_bits());
    }

    #[test]
    fn delayed_sine_read() {
        let h = 1e-3;
        let omega = 4.0;
        let mut b = DelayBuffer::for_delay(0.1, h).unwrap();
        let n = 2000;
        for i in 0..=n {
            let t = i as f64 * h;
            b.push(t, (omega * t).sin()).unwrap();
        }
        let t = n as f64 * h;
        let got = b.sample(t - 0.1).unwrap();
        assert!((got - (omega * (t - 0.1)).sin()).abs() < 1e-6);
        // off-grid read
        let got = b.sample(t - 0.1005).unwrap();
        assert!((got - (omega * (t - 0.1005)).sin()).abs() < 1e-5);
    }

    #[test]
    fn capacity_covers_two_delays() {
        let b = DelayBuffer::for_delay(0.1, 1e-3).unwrap();
        assert!(b.capacity() >= (2.0 * 0.1 / 1e-3_f64).ceil() as usize + 2);
    }

    #[test]
    fn empty_buffer_errors() {
        let b = DelayBuffer::new(4, 1.0).unwrap();
        assert_eq!(b.sample(0.0), Err(SignalError::Empty));
    }

    #[test]
    fn bounds_clamp() {
        let b = FrequencyBounds::new(0.5, 10.0);
        assert_eq!(b.clamp(0.1), 0.5);
        assert_eq!(b.clamp(20.0), 10.0);
        assert!(b.contains(1.2));
    }
}
