//! Single switch of the internal-model frequency from `ω_min` to the
//! estimated frequency once the finite-time estimate has settled.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Compensator, ControllerError};
use crate::estimator::Estimator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitchError {
    #[error("single-switch violated: already switched at t = {0}")]
    AlreadySwitched(f64),
    #[error("finite-time estimate not ready")]
    NotReady,
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingConfig {
    pub dwell_window: f64,
    pub stability_tol: f64,
    pub t_min_switch: f64,
}

impl SwitchingConfig {
    /// 0.5 s window, 1e-4 spread, earliest switch after warmup plus `2τ`.
    pub fn with_defaults(warmup: f64, tau: f64) -> Self {
        Self { dwell_window: 0.5, stability_tol: 1e-4, t_min_switch: warmup + 2.0 * tau }
    }

    pub fn violations(&self) -> Vec<&'static str> {
        let mut bad = Vec::new();
        if !(self.dwell_window > 0.0) {
            bad.push("dwell_window must be positive");
        }
        if !(self.stability_tol > 0.0) {
            bad.push("stability_tol must be positive");
        }
        if !(self.t_min_switch >= 0.0) {
            bad.push("t_min_switch must be non-negative");
        }
        bad
    }
}

/// Time, recovered frequency and finite-time estimate at the switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub omega_hat: f64,
    pub theta_f: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SwitchState {
    switched: Option<f64>,
    history: VecDeque<(f64, f64)>,
    /// Start of the current unbroken run of available estimates.
    run_start: Option<f64>,
}

impl SwitchState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn switched(&self) -> bool {
        self.switched.is_some()
    }

    pub fn switch_time(&self) -> Option<f64> {
        self.switched
    }

    /// Records the current estimate and reports whether the switch should fire now.
    pub fn should_switch(&mut self, estimator: &Estimator, t: f64, config: &SwitchingConfig) -> bool {
        if self.switched() {
            return false;
        }
        let Some(theta_f) = estimator.finite_time_estimate() else {
            self.history.clear();
            self.run_start = None;
            return false;
        };
        let eps = 1e-9 * config.dwell_window.max(1.0);
        self.history.push_back((t, theta_f));
        let start = *self.run_start.get_or_insert(t);
        while self.history.front().is_some_and(|(s, _)| *s < t - config.dwell_window - eps) {
            self.history.pop_front();
        }
        if t < config.t_min_switch || start > t - config.dwell_window + eps {
            return false;
        }
        let (lo, hi) = self
            .history
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
        hi - lo <= config.stability_tol
    }

    /// Retunes the compensator to the recovered frequency and marks the switch.
    pub fn apply_switch(
        &mut self,
        compensator: &mut Compensator,
        estimator: &Estimator,
        t: f64,
    ) -> Result<SwitchEvent, SwitchError> {
        if let Some(t0) = self.switched {
            return Err(SwitchError::AlreadySwitched(t0));
        }
        let theta_f = estimator.finite_time_estimate().ok_or(SwitchError::NotReady)?;
        let est = estimator.recover_frequency(theta_f);
        let out = compensator.retune_internal_model(est.omega)?;
        self.switched = Some(t);
        self.history.clear();
        Ok(SwitchEvent { time: t, omega_hat: out.omega, theta_f, clamped: est.clamped || out.clamped })
    }
}
