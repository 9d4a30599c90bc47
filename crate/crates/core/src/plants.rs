//! Ball-and-plate model: nonlinear ball dynamics driven through first-order
//! servos, and the linearized per-axis transfer function.

use std::sync::Once;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{LtiError, Polynomial, TransferFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("unknown plant profile `{0}`")]
    UnknownProfile(String),
    #[error("ball left plate at x = {x}, y = {y}")]
    LeftPlate { x: f64, y: f64 },
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Physical parameters (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallPlateParams {
    pub m_b: f64,
    pub r_b: f64,
    pub i_b: f64,
    pub g: f64,
    /// Plate side length.
    pub l: f64,
    /// Servo arm length.
    pub d: f64,
    pub k_m: f64,
    pub t_m: f64,
}

impl Default for BallPlateParams {
    fn default() -> Self {
        Self::paper()
    }
}

impl BallPlateParams {
    /// The built-in laboratory set.
    pub fn paper() -> Self {
        Self {
            m_b: 0.05,
            r_b: 0.0125,
            i_b: 3.13e-5,
            g: 9.81,
            l: 0.11,
            d: 0.02,
            k_m: 0.25,
            t_m: 0.018,
        }
    }

    pub fn profile(name: &str) -> Result<Self, PlantError> {
        match name {
            "paper" => Ok(Self::paper()),
            other => Err(PlantError::UnknownProfile(other.to_string())),
        }
    }

    pub fn violations(&self) -> Vec<&'static str> {
        let all = [self.m_b, self.r_b, self.i_b, self.g, self.l, self.d, self.k_m, self.t_m];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Vec::new()
        } else {
            vec!["plant parameters must be strictly positive"]
        }
    }

    /// Warning text when the ball inertia exceeds the solid-sphere value by more than 10%.
    pub fn inertia_warning(&self) -> Option<String> {
        let sphere = 0.4 * self.m_b * self.r_b * self.r_b;
        (self.i_b > 1.1 * sphere).then(|| {
            format!("ball inertia {} exceeds 1.1 x solid-sphere value {}", self.i_b, sphere)
        })
    }

    /// `m_b + I_b/r_b²`.
    pub fn effective_mass(&self) -> f64 {
        self.m_b + self.i_b / (self.r_b * self.r_b)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.l
    }
}

/// Ball position and velocity, plate inclinations and servo arm angles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BallPlateState {
    pub x_b: f64,
    pub y_b: f64,
    pub vx: f64,
    pub vy: f64,
    pub alpha: f64,
    pub beta: f64,
    pub qx: f64,
    pub qy: f64,
}

impl BallPlateState {
    pub fn on_plate(&self, params: &BallPlateParams) -> bool {
        let h = params.half_width();
        self.x_b.abs() <= h && self.y_b.abs() <= h
    }

    /// Same state with the x and y axes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x_b: self.y_b,
            y_b: self.x_b,
            vx: self.vy,
            vy: self.vx,
            alpha: self.beta,
            beta: self.alpha,
            qx: self.qy,
            qy: self.qx,
        }
    }
}

/// Plate angular rates `(α̇, β̇)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlateRates {
    pub alpha: f64,
    pub beta: f64,
}

/// Ball accelerations from the Euler-Lagrange equations.
pub fn nonlinear_accel(state: &BallPlateState, rates: PlateRates, params: &BallPlateParams) -> (f64, f64) {
    let m = params.m_b;
    let mass = params.effective_mass();
    let (da, db) = (rates.alpha, rates.beta);
    let cross = da * db;
    let ax = (m * (state.x_b * da * da + state.y_b * cross) - m * params.g * state.alpha.sin()) / mass;
    let ay = (m * (state.y_b * db * db + state.x_b * cross) - m * params.g * state.beta.sin()) / mass;
    (ax, ay)
}

/// `α = (d/L)·Q`.
pub fn servo_to_plate_angle(q: f64, params: &BallPlateParams) -> f64 {
    params.d / params.l * q
}

/// `Q̇ = (K_m·u − Q)/T_m`.
pub fn servo_rate(q: f64, u: f64, params: &BallPlateParams) -> f64 {
    (params.k_m * u - q) / params.t_m
}

/// Plate rates produced by servo commands `(ux, uy)` through the arm linkage.
pub fn plate_rates(state: &BallPlateState, command: (f64, f64), params: &BallPlateParams) -> PlateRates {
    let ratio = params.d / params.l;
    PlateRates {
        alpha: ratio * servo_rate(state.qx, command.0, params),
        beta: ratio * servo_rate(state.qy, command.1, params),
    }
}

/// One RK4 step of the servo with `u` held.
pub fn servo_step(q: f64, u: f64, dt: f64, params: &BallPlateParams) -> f64 {
    let f = |q: f64| servo_rate(q, u, params);
    let k1 = f(q);
    let k2 = f(q + 0.5 * dt * k1);
    let k3 = f(q + 0.5 * dt * k2);
    let k4 = f(q + dt * k3);
    q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Linearized ball acceleration for servo angles `(Qx, Qy)`.
pub fn linearized_accel(q: (f64, f64), params: &BallPlateParams) -> (f64, f64) {
    let gain = 2.0 * params.m_b * params.g * params.d / params.l / params.effective_mass();
    (gain * q.0, gain * q.1)
}

/// Numerator constant `2·m_b·g·d·r_b²·K_m`.
pub fn linearized_numerator(params: &BallPlateParams) -> Polynomial {
    let p = params;
    Polynomial::constant(2.0 * p.m_b * p.g * p.d * p.r_b * p.r_b * p.k_m)
}

/// Denominator `L(m_b·r_b²·T_m·p³ + I_b·p²)`.
pub fn linearized_denominator(params: &BallPlateParams) -> Polynomial {
    let p = params;
    Polynomial::new(vec![0.0, 0.0, p.l * p.i_b, p.l * p.m_b * p.r_b * p.r_b * p.t_m])
}

/// Per-axis model from servo command to ball position.
pub fn linearized_tf(params: &BallPlateParams) -> Result<TransferFunction, PlantError> {
    Ok(TransferFunction::new(linearized_numerator(params), linearized_denominator(params))?)
}

/// Servo lag in series with the linearized double integrator,
/// `K_m/(T_m p + 1) · (2·m_b·g·d/(L·(m_b + I_b/r_b²)))/p²`.
pub fn servo_chain_tf(params: &BallPlateParams) -> Result<TransferFunction, PlantError> {
    let servo = TransferFunction::new(
        Polynomial::constant(params.k_m),
        Polynomial::new(vec![1.0, params.t_m]),
    )?;
    let gain = linearized_accel((1.0, 0.0), params).0;
    let ball = TransferFunction::new(Polynomial::constant(gain), Polynomial::new(vec![0.0, 0.0, 1.0]))?;
    Ok(servo.series(&ball)?)
}

/// Logs the inertia sanity warning, if any, once per process.
pub fn check_params(params: &BallPlateParams) {
    static WARNED: Once = Once::new();
    if let Some(msg) = params.inertia_warning() {
        WARNED.call_once(|| warn!("{msg}"));
    }
}
