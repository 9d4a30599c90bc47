//! Finite-time estimation of the frequency of a measured sinusoid.
//!
//! For `y(t) = A·sin(ωt + φ₀)` and any delay `τ`,
//! `(y(t) + y(t−2τ))/2 = cos(ωτ)·y(t−τ)`, a scalar linear regression
//! `z = φ·θ` with `θ = cos(ωτ)`. A gradient estimator runs on that
//! regression next to a normalization state `w`; the combination
//! `θ̂_F = (θ̂ − w·θ̂₀)/(1 − w)` equals `θ` as soon as `w < 1`.

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signals::{DelayBuffer, FrequencyBounds, SignalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("estimator gain must be positive")]
    NonPositiveGain,
    #[error("delay tau must be positive")]
    NonPositiveDelay,
    #[error("tau * omega_max must be below pi")]
    AmbiguousBranch,
    #[error("w_threshold must lie in (0, 1)")]
    BadThreshold,
    #[error("warmup must be non-negative")]
    NegativeWarmup,
    #[error("frequency bounds must satisfy 0 < omega_min < omega_max")]
    BadBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub gain: f64,
    pub tau: f64,
    pub theta0: f64,
    pub warmup: f64,
    pub w_threshold: f64,
    pub bounds: FrequencyBounds,
}

impl EstimatorConfig {
    /// Defaults: `θ̂₀ = cos(ω_min·τ)`, 2 s warmup, threshold 0.9.
    pub fn new(gain: f64, tau: f64, bounds: FrequencyBounds) -> Self {
        Self {
            gain,
            tau,
            theta0: (bounds.min * tau).cos(),
            warmup: 2.0,
            w_threshold: 0.9,
            bounds,
        }
    }

    pub fn violations(&self) -> Vec<EstimatorError> {
        let mut bad = Vec::new();
        if !(self.gain > 0.0) {
            bad.push(EstimatorError::NonPositiveGain);
        }
        if !(self.tau > 0.0) {
            bad.push(EstimatorError::NonPositiveDelay);
        }
        if !self.bounds.is_valid() {
            bad.push(EstimatorError::BadBounds);
        }
        if !(self.tau * self.bounds.max < std::f64::consts::PI) {
            bad.push(EstimatorError::AmbiguousBranch);
        }
        if !(self.w_threshold > 0.0 && self.w_threshold < 1.0) {
            bad.push(EstimatorError::BadThreshold);
        }
        if !(self.warmup >= 0.0) {
            bad.push(EstimatorError::NegativeWarmup);
        }
        bad
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub theta_hat: f64,
    pub w: f64,
    pub active: bool,
}

/// `(z, φ) = ((y(t) + y(t−2τ))/2, y(t−τ))`.
pub fn regression_pair(buf: &DelayBuffer, t: f64, tau: f64) -> Result<(f64, f64), SignalError> {
    let old = buf.sample(t - 2.0 * tau)?;
    let mid = buf.sample(t - tau)?;
    let now = buf.sample(t)?;
    Ok((0.5 * (now + old), mid))
}

/// Right-hand side `(θ̂̇, ẇ) = (Kφ(z − φθ̂), −Kφ²w)`.
pub fn estimator_rhs(theta_hat: f64, w: f64, z: f64, phi: f64, gain: f64) -> (f64, f64) {
    (gain * phi * (z - phi * theta_hat), -gain * phi * phi * w)
}

/// Recovered frequency, with whether the estimate had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyEstimate {
    pub omega: f64,
    pub clamped: bool,
}

/// `ω̂ = arccos(θ)/τ`, with `θ` clamped to `[cos(ω_max·τ), cos(ω_min·τ)]`.
pub fn recover_frequency(theta: f64, tau: f64, bounds: FrequencyBounds) -> FrequencyEstimate {
    let lo = (bounds.max * tau).cos();
    let hi = (bounds.min * tau).cos();
    let clamped_theta = if theta.is_nan() { hi } else { theta.clamp(lo, hi) };
    let clamped = clamped_theta != theta;
    if clamped {
        debug!("frequency estimate clamped: theta {theta} outside [{lo}, {hi}]");
    }
    // the endpoints map back to the bounds exactly
    let omega = if clamped_theta == hi {
        bounds.min
    } else if clamped_theta == lo {
        bounds.max
    } else {
        clamped_theta.acos() / tau
    };
    FrequencyEstimate { omega, clamped }
}

#[derive(Debug, Clone)]
pub struct Estimator {
    config: EstimatorConfig,
    state: EstimatorState,
}

impl Estimator {
    pub fn new(config: EstimatorConfig) -> Result<Self, EstimatorError> {
        config.validate()?;
        let state = EstimatorState { theta_hat: config.theta0, w: 1.0, active: false };
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn set_active(&mut self, active: bool) {
        self.state.active = active;
    }

    /// Overwrites `(θ̂, w)`; used when the estimator is integrated as part of
    /// a larger state vector.
    pub fn set(&mut self, theta_hat: f64, w: f64) {
        self.state.theta_hat = theta_hat;
        self.state.w = w;
    }

    pub fn rhs(&self, theta_hat: f64, w: f64, z: f64, phi: f64) -> (f64, f64) {
        if self.state.active {
            estimator_rhs(theta_hat, w, z, phi, self.config.gain)
        } else {
            (0.0, 0.0)
        }
    }

    /// One RK4 step with `z` and `φ` held over the step. No-op while inactive.
    pub fn step(&mut self, z: f64, phi: f64, dt: f64) {
        if !self.state.active {
            return;
        }
        let k = self.config.gain;
        let (th, w) = (self.state.theta_hat, self.state.w);
        let f = |th: f64, w: f64| estimator_rhs(th, w, z, phi, k);
        let (a1, b1) = f(th, w);
        let (a2, b2) = f(th + 0.5 * dt * a1, w + 0.5 * dt * b1);
        let (a3, b3) = f(th + 0.5 * dt * a2, w + 0.5 * dt * b2);
        let (a4, b4) = f(th + dt * a3, w + dt * b3);
        self.state.theta_hat = th + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        self.state.w = w + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }

    /// `θ̂_F`, or `None` while `w ≥ w_threshold`.
    pub fn finite_time_estimate(&self) -> Option<f64> {
        let EstimatorState { theta_hat, w, .. } = self.state;
        (w < self.config.w_threshold).then(|| (theta_hat - w * self.config.theta0) / (1.0 - w))
    }

    pub fn recover_frequency(&self, theta: f64) -> FrequencyEstimate {
        recover_frequency(theta, self.config.tau, self.config.bounds)
    }

    /// Frequency recovered from the finite-time estimate, when available.
    pub fn frequency_estimate(&self) -> Option<FrequencyEstimate> {
        self.finite_time_estimate().map(|th| self.recover_frequency(th))
    }
}
