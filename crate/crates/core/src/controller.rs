//! Consecutive-compensator output feedback with an internal-model filter.
//!
//! The observer chain
//!
//! ```text
//! ξ̇ = σ(Γξ + d·y),   ξ₁ ≈ y
//! ```
//!
//! supplies `ξ₁` and, through its own states, the derivatives of `ξ₁` up to
//! order `ρ−1`. The control is `u = −k·F(p)ξ₁`, where `F` carries the internal
//! model of the disturbance generator. Whenever `F` is improper its polynomial
//! part is applied to those observer derivatives, so no numerical
//! differentiation is needed.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{
    closed_loop_char_poly, is_hurwitz, nominal_char_poly, poly_add, poly_mul, tf_to_statespace,
    LtiError, Polynomial, StateSpaceModel, TransferFunction,
};
use crate::signals::FrequencyBounds;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("sigma must exceed k")]
    SigmaNotAboveK,
    #[error("k must be positive")]
    NonPositiveGain,
    #[error("alpha must have degree rho-1 = {expected}, got {got}")]
    AlphaDegree { expected: usize, got: usize },
    #[error("alpha must be Hurwitz")]
    AlphaNotHurwitz,
    #[error("bad observer gains: the observer matrix is not Hurwitz")]
    BadObserverGains,
    #[error("internal-model frequency must be positive")]
    NonPositiveFrequency,
    #[error("filter needs derivative of order {needed} but the observer provides up to {available}")]
    TooImproper { needed: usize, available: usize },
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Which internal-model filter `F(p)` the compensator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InternalModelForm {
    /// `α(p)(p+1)³ / (p(p²+ω̄²))`; its ideal closed loop has characteristic
    /// polynomial `γ(p) = a·p·(p²+ω²) + k·b·α·(p+1)³`.
    #[default]
    Integral,
    /// `α(p)(p+1)² / (p(p²+ω̄²))`.
    CaseStudy,
    /// `α(p)(p+1)² / (p²+ω̄²)`, no integrator.
    Nominal,
}

impl InternalModelForm {
    fn lead_power(self) -> u32 {
        match self {
            InternalModelForm::Integral => 3,
            InternalModelForm::CaseStudy | InternalModelForm::Nominal => 2,
        }
    }

    fn has_integrator(self) -> bool {
        !matches!(self, InternalModelForm::Nominal)
    }

    /// Numerator `α(p)(p+1)^m` of `F`.
    pub fn numerator(self, alpha: &Polynomial) -> Polynomial {
        poly_mul(alpha, &Polynomial::linear_power(1.0, self.lead_power()))
    }

    /// Denominator of `F`: `p(p²+ω̄²)` or `p²+ω̄²`.
    pub fn denominator(self, omega: f64) -> Polynomial {
        let w2 = omega * omega;
        if self.has_integrator() {
            Polynomial::new(vec![0.0, w2, 0.0, 1.0])
        } else {
            Polynomial::new(vec![w2, 0.0, 1.0])
        }
    }

    /// Characteristic polynomial `a·den_F + k·b·num_F` of the loop closed with `ξ₁ = y`.
    pub fn char_poly(self, a: &Polynomial, b: &Polynomial, k: f64, alpha: &Polynomial, omega: f64) -> Polynomial {
        match self {
            InternalModelForm::Integral => closed_loop_char_poly(a, b, k, alpha, omega),
            InternalModelForm::Nominal => nominal_char_poly(a, b, k, alpha, omega),
            InternalModelForm::CaseStudy => poly_add(
                &poly_mul(a, &self.denominator(omega)),
                &poly_mul(b, &self.numerator(alpha)).scale(k),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensatorConfig {
    pub k: f64,
    pub sigma: f64,
    /// `k₁ … k_{ρ−1}`; `ρ = observer_gains.len() + 1`.
    pub observer_gains: Vec<f64>,
    pub alpha: Polynomial,
    /// Current internal-model frequency ω̄ (rad/s).
    pub internal_model_freq: f64,
    pub form: InternalModelForm,
    pub bounds: FrequencyBounds,
    /// Cross-fade length, in steps, applied when the internal model is retuned.
    pub fade_steps: usize,
}

impl CompensatorConfig {
    /// Tuned ball-and-plate controller: κ = 1.2, σ = 35, k₁ = 2, k₂ = 5, α = p² + 3p + 1.
    pub fn ball_and_plate(internal_model_freq: f64, bounds: FrequencyBounds) -> Self {
        Self {
            k: 1.2,
            sigma: 35.0,
            observer_gains: vec![2.0, 5.0],
            alpha: Polynomial::new(vec![1.0, 3.0, 1.0]),
            internal_model_freq,
            form: InternalModelForm::default(),
            bounds,
            fade_steps: 10,
        }
    }

    pub fn rho(&self) -> usize {
        self.observer_gains.len() + 1
    }

    /// Characteristic polynomial of Γ: `p^{ρ−1} + k_{ρ−1}p^{ρ−2} + … + k₁`.
    pub fn observer_char_poly(&self) -> Polynomial {
        let mut c = self.observer_gains.clone();
        c.push(1.0);
        Polynomial::new(c)
    }

    /// Every violated invariant, in a fixed order.
    pub fn violations(&self) -> Vec<ControllerError> {
        let mut bad = Vec::new();
        if !(self.k > 0.0) {
            bad.push(ControllerError::NonPositiveGain);
        }
        if !(self.sigma > self.k) {
            bad.push(ControllerError::SigmaNotAboveK);
        }
        let expected = self.rho() - 1;
        if self.alpha.degree() != expected {
            bad.push(ControllerError::AlphaDegree { expected, got: self.alpha.degree() });
        } else if (expected >= 1 && !is_hurwitz(&self.alpha).unwrap_or(false))
            || (expected == 0 && self.alpha.is_zero())
        {
            bad.push(ControllerError::AlphaNotHurwitz);
        }
        if self.rho() >= 2 && !is_hurwitz(&self.observer_char_poly()).unwrap_or(false) {
            bad.push(ControllerError::BadObserverGains);
        }
        if !(self.internal_model_freq > 0.0) {
            bad.push(ControllerError::NonPositiveFrequency);
        }
        bad
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// `Γ`, `d` and `h` of the observer chain `ξ̇ = σ(Γξ + d·y)`, `ŷ = hᵀξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverMatrices {
    pub gamma: DMatrix<f64>,
    pub d: DVector<f64>,
    pub h: DVector<f64>,
}

pub fn build_observer_matrices(config: &CompensatorConfig) -> Result<ObserverMatrices, ControllerError> {
    let gains = &config.observer_gains;
    let n = gains.len();
    if n == 0 {
        return Ok(ObserverMatrices {
            gamma: DMatrix::zeros(0, 0),
            d: DVector::zeros(0),
            h: DVector::zeros(0),
        });
    }
    if !is_hurwitz(&config.observer_char_poly())? {
        return Err(ControllerError::BadObserverGains);
    }
    let gamma = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == n {
            -gains[j]
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    });
    let d = DVector::from_fn(n, |i, _| if i + 1 == n { gains[0] } else { 0.0 });
    let h = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    debug_assert_eq!(&d, &(-(&gamma * &h)));
    Ok(ObserverMatrices { gamma, d, h })
}

/// Realization of `F(p)` split as `quotient(p) + remainder(p)/den(p)`.
///
/// The quotient acts on derivatives of the filter input; the strictly proper
/// remainder is a companion-form state-space model.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalModelFilter {
    omega: f64,
    numerator: Polynomial,
    denominator: Polynomial,
    quotient: Vec<f64>,
    remainder: StateSpaceModel,
}

impl InternalModelFilter {
    pub fn new(form: InternalModelForm, alpha: &Polynomial, omega: f64) -> Result<Self, ControllerError> {
        if !(omega > 0.0) {
            return Err(ControllerError::NonPositiveFrequency);
        }
        let numerator = form.numerator(alpha);
        let denominator = form.denominator(omega);
        let (q, r) = numerator.div_rem(&denominator)?;
        let quotient = if q.is_zero() { Vec::new() } else { q.coeffs().to_vec() };
        let remainder = tf_to_statespace(&TransferFunction::new(r, denominator.clone())?)?;
        Ok(Self { omega, numerator, denominator, quotient, remainder })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn order(&self) -> usize {
        self.remainder.order()
    }

    /// Coefficients applied to `ξ₁, ξ̇₁, ξ̈₁, …`.
    pub fn quotient(&self) -> &[f64] {
        &self.quotient
    }

    pub fn remainder(&self) -> &StateSpaceModel {
        &self.remainder
    }

    pub fn numerator(&self) -> &Polynomial {
        &self.numerator
    }

    pub fn denominator(&self) -> &Polynomial {
        &self.denominator
    }

    /// Highest derivative of the input the filter needs.
    pub fn derivative_order(&self) -> usize {
        self.quotient.len().saturating_sub(1)
    }

    pub fn freq_response(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        self.numerator.eval_complex(s) / self.denominator.eval_complex(s)
    }

    /// Filter output given the input derivatives `ders[i] = dⁱξ₁/dtⁱ`.
    pub fn output(&self, state: &[f64], ders: &[f64]) -> f64 {
        let poly: f64 = self.quotient.iter().zip(ders).map(|(q, d)| q * d).sum();
        poly + self.remainder.output(state, 0.0)
    }

    pub fn derivative(&self, state: &[f64], input: f64, dx: &mut [f64]) {
        self.remainder.derivative(state, input, dx)
    }
}

pub fn build_internal_model_filter(config: &CompensatorConfig) -> Result<InternalModelFilter, ControllerError> {
    InternalModelFilter::new(config.form, &config.alpha, config.internal_model_freq)
}

/// Observer and filter states. Zero at `t = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompensatorState {
    pub xi: Vec<f64>,
    pub filter_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Fade {
    filter: InternalModelFilter,
    state: Vec<f64>,
    total: usize,
    done: usize,
}

impl Fade {
    fn weight_new(&self) -> f64 {
        self.done as f64 / self.total as f64
    }
}

/// Result of a retune request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetuneOutcome {
    pub omega: f64,
    pub clamped: bool,
    pub changed: bool,
}

/// Controller instance: configuration, derived matrices and state.
#[derive(Debug, Clone)]
pub struct Compensator {
    config: CompensatorConfig,
    filter: InternalModelFilter,
    state: CompensatorState,
    fade: Option<Fade>,
}

impl Compensator {
    pub fn new(config: CompensatorConfig) -> Result<Self, ControllerError> {
        config.validate()?;
        build_observer_matrices(&config)?;
        let filter = build_internal_model_filter(&config)?;
        let rho = config.rho();
        if filter.derivative_order() > rho - 1 {
            return Err(ControllerError::TooImproper {
                needed: filter.derivative_order(),
                available: rho - 1,
            });
        }
        let state = CompensatorState {
            xi: vec![0.0; rho - 1],
            filter_state: vec![0.0; filter.order()],
        };
        Ok(Self { config, filter, state, fade: None })
    }

    pub fn config(&self) -> &CompensatorConfig {
        &self.config
    }

    pub fn state(&self) -> &CompensatorState {
        &self.state
    }

    pub fn filter(&self) -> &InternalModelFilter {
        &self.filter
    }

    pub fn internal_model_freq(&self) -> f64 {
        self.filter.omega()
    }

    pub fn is_fading(&self) -> bool {
        self.fade.is_some()
    }

    /// ξ₁, or `y` itself when ρ = 1.
    pub fn xi1(&self, y: f64) -> f64 {
        self.state.xi.first().copied().unwrap_or(y)
    }

    /// `ders[i] = dⁱξ₁/dtⁱ` for `i = 0..=ρ−1`, read off the observer states.
    fn xi1_derivatives(&self, xi: &[f64], y: f64, ders: &mut [f64]) {
        let rho = self.config.rho();
        if rho == 1 {
            ders[0] = y;
            return;
        }
        let sigma = self.config.sigma;
        let gains = &self.config.observer_gains;
        let mut s_pow = 1.0;
        for i in 0..rho - 1 {
            ders[i] = s_pow * xi[i];
            s_pow *= sigma;
        }
        let last: f64 = gains[0] * y - gains.iter().zip(xi).map(|(k, x)| k * x).sum::<f64>();
        ders[rho - 1] = s_pow * last;
    }

    fn observer_rhs(&self, xi: &[f64], y: f64, dxi: &mut [f64]) {
        let n = xi.len();
        if n == 0 {
            return;
        }
        let sigma = self.config.sigma;
        for i in 0..n - 1 {
            dxi[i] = sigma * xi[i + 1];
        }
        let gains = &self.config.observer_gains;
        let acc: f64 = gains[0] * y - gains.iter().zip(xi).map(|(k, x)| k * x).sum::<f64>();
        dxi[n - 1] = sigma * acc;
    }

    /// Number of scalars in the packed state (observer, filter, fading filter).
    pub fn state_len(&self) -> usize {
        self.state.xi.len()
            + self.state.filter_state.len()
            + self.fade.as_ref().map_or(0, |f| f.state.len())
    }

    pub fn pack(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.state.xi);
        out.extend_from_slice(&self.state.filter_state);
        if let Some(f) = &self.fade {
            out.extend_from_slice(&f.state);
        }
    }

    pub fn unpack(&mut self, s: &[f64]) {
        let nx = self.state.xi.len();
        let nf = self.state.filter_state.len();
        self.state.xi.copy_from_slice(&s[..nx]);
        self.state.filter_state.copy_from_slice(&s[nx..nx + nf]);
        if let Some(f) = &mut self.fade {
            let m = f.state.len();
            f.state.copy_from_slice(&s[nx + nf..nx + nf + m]);
        }
    }

    /// Derivative of the packed state for measured output `y`; returns the
    /// control `u` at that state.
    pub fn rhs(&self, s: &[f64], y: f64, ds: &mut [f64]) -> f64 {
        let nx = self.state.xi.len();
        let nf = self.state.filter_state.len();
        let (xi, rest) = s.split_at(nx);
        let (xf, xfade) = rest.split_at(nf);
        let mut ders = [0.0; 8];
        let mut ders_vec;
        let ders: &mut [f64] = if self.config.rho() <= ders.len() {
            &mut ders[..self.config.rho()]
        } else {
            ders_vec = vec![0.0; self.config.rho()];
            &mut ders_vec
        };
        self.xi1_derivatives(xi, y, ders);
        let (dxi, drest) = ds.split_at_mut(nx);
        let (dxf, dfade) = drest.split_at_mut(nf);
        self.observer_rhs(xi, y, dxi);
        self.filter.derivative(xf, ders[0], dxf);
        let mut f_out = self.filter.output(xf, ders);
        if let Some(fade) = &self.fade {
            fade.filter.derivative(xfade, ders[0], dfade);
            let old = fade.filter.output(xfade, ders);
            let lambda = fade.weight_new();
            f_out = lambda * f_out + (1.0 - lambda) * old;
        }
        -self.config.k * f_out
    }

    /// Control at the current state for measured output `y`.
    pub fn output(&self, y: f64) -> f64 {
        let mut s = Vec::with_capacity(self.state_len());
        self.pack(&mut s);
        let mut ds = vec![0.0; s.len()];
        self.rhs(&s, y, &mut ds)
    }

    /// Advances the fade counter; call once per completed integration step.
    pub fn end_step(&mut self) {
        if let Some(f) = &mut self.fade {
            f.done += 1;
            if f.done >= f.total {
                self.fade = None;
            }
        }
    }

    /// One RK4 step of the observer alone, `y` held over the step.
    pub fn observer_step(&mut self, y: f64, dt: f64) {
        let xi = self.state.xi.clone();
        let f = |x: &[f64], out: &mut [f64]| self.observer_rhs(x, y, out);
        let next = rk4_autonomous(f, &xi, dt);
        self.state.xi = next;
    }

    /// Returns `u = −k·F(p)ξ₁` at the current state, then advances the filter
    /// (and any fading filter) one RK4 step with `ξ₁` held.
    ///
    /// `y` is needed because the highest observer derivative of `ξ₁` depends on it.
    pub fn control_output(&mut self, y: f64, dt: f64) -> f64 {
        let u = self.output(y);
        let xi1 = self.xi1(y);
        let filter = self.filter.clone();
        self.state.filter_state =
            rk4_autonomous(|x, o| filter.derivative(x, xi1, o), &self.state.filter_state, dt);
        if let Some(fade) = &mut self.fade {
            let old = fade.filter.clone();
            fade.state = rk4_autonomous(|x, o| old.derivative(x, xi1, o), &fade.state, dt);
        }
        self.end_step();
        u
    }

    /// Rebuilds the internal model at `new_omega`, clamped to the configured
    /// bounds. The new filter starts from zero and the output cross-fades
    /// from the old filter over `fade_steps` steps.
    pub fn retune_internal_model(&mut self, new_omega: f64) -> Result<RetuneOutcome, ControllerError> {
        let bounds = self.config.bounds;
        let omega = bounds.clamp(new_omega);
        let clamped = omega != new_omega;
        if clamped {
            warn!(
                "internal-model frequency {new_omega} outside [{}, {}], clamped to {omega}",
                bounds.min, bounds.max
            );
        }
        if omega == self.filter.omega() {
            return Ok(RetuneOutcome { omega, clamped, changed: false });
        }
        let new_filter = InternalModelFilter::new(self.config.form, &self.config.alpha, omega)?;
        let old_filter = std::mem::replace(&mut self.filter, new_filter);
        let old_state = std::mem::replace(&mut self.state.filter_state, vec![0.0; self.filter.order()]);
        self.fade = (self.config.fade_steps > 0).then_some(Fade {
            filter: old_filter,
            state: old_state,
            total: self.config.fade_steps,
            done: 0,
        });
        self.config.internal_model_freq = omega;
        Ok(RetuneOutcome { omega, clamped, changed: true })
    }
}

fn rk4_autonomous<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(&tmp, &mut k4);
    (0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bounds() -> FrequencyBounds {
        FrequencyBounds::new(0.5, 10.0)
    }

    fn paper(omega: f64) -> CompensatorConfig {
        CompensatorConfig::ball_and_plate(omega, bounds())
    }

    #[test]
    fn ball_and_plate_observer_matrices() {
        let m = build_observer_matrices(&paper(1.2)).unwrap();
        assert_eq!(m.gamma, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -5.0]));
        assert_eq!(m.d.as_slice(), &[0.0, 2.0]);
        assert_eq!(m.h.as_slice(), &[1.0, 0.0]);
        assert_eq!(-(&m.gamma * &m.h), m.d);
    }

    #[test]
    fn scalar_observer() {
        let mut cfg = paper(1.2);
        cfg.observer_gains = vec![1.0];
        cfg.alpha = Polynomial::new(vec![1.0, 1.0]);
        let m = build_observer_matrices(&cfg).unwrap();
        assert_eq!(m.gamma[(0, 0)], -1.0);
        assert_eq!(m.d[0], 1.0);
        assert_eq!(m.h[0], 1.0);
    }

    #[test]
    fn unstable_observer_gains_rejected() {
        let mut cfg = paper(1.2);
        cfg.observer_gains = vec![2.0, -5.0];
        assert_eq!(build_observer_matrices(&cfg), Err(ControllerError::BadObserverGains));
    }

    proptest! {
        #[test]
        fn observer_identity_holds(roots in proptest::collection::vec(0.1f64..10.0, 1..=5)) {
            // gains from a product of stable real factors are Hurwitz by construction
            let poly = roots.iter().fold(Polynomial::one(), |acc, r| poly_mul(&acc, &Polynomial::new(vec![*r, 1.0])));
            let gains = poly.coeffs()[..poly.degree()].to_vec();
            let mut cfg = paper(1.0);
            cfg.observer_gains = gains;
            let m = build_observer_matrices(&cfg).unwrap();
            prop_assert_eq!(-(&m.gamma * &m.h), m.d);
        }
    }

    #[test]
    fn config_violations_listed() {
        let mut cfg = paper(1.2);
        cfg.sigma = 0.5 * cfg.k;
        cfg.alpha = Polynomial::new(vec![1.0, 1.0]);
        let v = cfg.violations();
        assert!(v.contains(&ControllerError::SigmaNotAboveK));
        assert!(v.contains(&ControllerError::AlphaDegree { expected: 2, got: 1 }));
        assert_eq!(ControllerError::SigmaNotAboveK.to_string(), "sigma must exceed k");
    }

    #[test]
    fn zero_output_keeps_observer_at_rest() {
        let mut c = Compensator::new(paper(1.2)).unwrap();
        for _ in 0..1000 {
            c.observer_step(0.0, 1e-3);
        }
        assert!(c.state().xi.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn constant_output_is_tracked() {
        // steady state solves Γξ = −d·c, whose first component is c
        let c_val = 0.7;
        let cfg = paper(1.2);
        let m = build_observer_matrices(&cfg).unwrap();
        let steady = m.gamma.clone().lu().solve(&(-&m.d * c_val)).unwrap();
        assert!((steady[0] - c_val).abs() < 1e-12);
        let mut c = Compensator::new(cfg).unwrap();
        for _ in 0..5000 {
            c.observer_step(c_val, 1e-3);
        }
        assert!((c.state().xi[0] - steady[0]).abs() < 1e-9);
        assert!((c.state().xi[1] - steady[1]).abs() < 1e-9);
    }

    fn time_to_track(sigma: f64) -> f64 {
        let mut cfg = paper(1.2);
        cfg.sigma = sigma;
        let mut c = Compensator::new(cfg).unwrap();
        let h = 1e-4;
        let mut t = 0.0;
        while (c.state().xi[0] - 1.0).abs() > 1e-3 {
            c.observer_step(1.0, h);
            t += h;
        }
        t
    }

    #[test]
    fn doubling_sigma_halves_convergence_time() {
        // eigenvalues of σΓ scale linearly in σ
        let ratio = time_to_track(35.0) / time_to_track(70.0);
        assert!((ratio - 2.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn filter_resonates_at_internal_model() {
        let mut cfg = paper(1.0);
        cfg.observer_gains.clear();
        cfg.alpha = Polynomial::one();
        cfg.form = InternalModelForm::CaseStudy;
        let f = build_internal_model_filter(&cfg).unwrap();
        assert_eq!(f.numerator().coeffs(), &[1.0, 2.0, 1.0]);
        assert!(f.denominator().eval_complex(Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(f.freq_response(1.0 + 1e-8).norm() > 1e7);
    }

    #[test]
    fn ball_and_plate_filter_peak() {
        for form in [InternalModelForm::Integral, InternalModelForm::CaseStudy, InternalModelForm::Nominal] {
            let mut cfg = paper(1.2);
            cfg.form = form;
            let f = build_internal_model_filter(&cfg).unwrap();
            let far = f.freq_response(2.4).norm();
            for s in [1.0 - 1e-4, 1.0 + 1e-4] {
                assert!(f.freq_response(1.2 * s).norm() > 1e3 * far, "{form:?}");
            }
        }
    }

    #[test]
    fn case_study_filter_split() {
        // (p^4 + 5p^3 + 8p^2 + 5p + 1)/(p^3 + w^2 p) = (p + 5) + ((8 - w^2)p^2 + (5 - 5w^2)p + 1)/(...)
        let mut cfg = paper(1.2);
        cfg.form = InternalModelForm::CaseStudy;
        let f = build_internal_model_filter(&cfg).unwrap();
        let w2 = 1.44;
        assert_eq!(f.quotient(), &[5.0, 1.0]);
        let c = f.remainder().c.as_slice();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!((c[1] - (5.0 - 5.0 * w2)).abs() < 1e-12);
        assert!((c[2] - (8.0 - w2)).abs() < 1e-12);
    }

    #[test]
    fn integrator_pole_ramps_on_step() {
        let mut cfg = paper(1.2);
        cfg.observer_gains.clear();
        cfg.alpha = Polynomial::one();
        cfg.form = InternalModelForm::CaseStudy;
        let f = build_internal_model_filter(&cfg).unwrap();
        let mut x = vec![0.0; f.order()];
        let h = 1e-3;
        let mut outs = Vec::new();
        for i in 0..20000 {
            x = rk4_autonomous(|s, o| f.derivative(s, 1.0, o), &x, h);
            if i % 5000 == 4999 {
                outs.push(f.output(&x, &[1.0]));
            }
        }
        // ramp slope 1/w^2 plus a bounded oscillation
        let slope = (outs[3] - outs[1]) / 10.0;
        assert!((slope - 1.0 / 1.44).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn too_improper_is_rejected() {
        let mut cfg = paper(1.2);
        cfg.observer_gains = vec![1.0];
        cfg.alpha = Polynomial::new(vec![1.0, 1.0]);
        // integral form: degree 4 over 3 needs first derivative only, fine
        assert!(Compensator::new(cfg.clone()).is_ok());
        cfg.observer_gains.clear();
        cfg.alpha = Polynomial::one();
        cfg.form = InternalModelForm::Nominal;
        // (p+1)^2/(p^2+w^2) needs no derivative
        assert!(Compensator::new(cfg.clone()).is_ok());
        cfg.form = InternalModelForm::Integral;
        // (p+1)^3/(p^3+..) biproper: fine with rho = 1
        assert!(Compensator::new(cfg).is_ok());
    }

    #[test]
    fn zero_input_zero_control() {
        let mut c = Compensator::new(paper(1.2)).unwrap();
        for _ in 0..500 {
            c.observer_step(0.0, 1e-3);
            assert_eq!(c.control_output(0.0, 1e-3), 0.0);
        }
    }

    fn replay(cfg: CompensatorConfig, ys: &[f64]) -> Vec<f64> {
        let mut c = Compensator::new(cfg).unwrap();
        let h = 1e-3;
        ys.iter()
            .map(|&y| {
                let u = c.control_output(y, h);
                c.observer_step(y, h);
                u
            })
            .collect()
    }

    fn test_signal(scale: f64, freq: f64) -> Vec<f64> {
        (0..3000).map(|i| scale * (freq * i as f64 * 1e-3).sin() + 0.1 * scale).collect()
    }

    #[test]
    fn doubling_k_doubles_u() {
        let ys = test_signal(1.0, 2.0);
        let cfg = paper(1.2);
        let mut cfg2 = cfg.clone();
        cfg2.k *= 2.0;
        let u1 = replay(cfg, &ys);
        let u2 = replay(cfg2, &ys);
        for (a, b) in u1.iter().zip(&u2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn controller_is_linear_in_output_trajectory() {
        let a = test_signal(0.3, 1.7);
        let b = test_signal(-1.1, 5.0);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x + y).collect();
        let ua = replay(paper(1.2), &a);
        let ub = replay(paper(1.2), &b);
        let us = replay(paper(1.2), &sum);
        let scale = us.iter().fold(1.0_f64, |m, u| m.max(u.abs()));
        for i in 0..us.len() {
            assert!((us[i] - (2.0 * ua[i] + ub[i])).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn retune_to_same_frequency_is_noop() {
        let mut c = Compensator::new(paper(1.2)).unwrap();
        for i in 0..200 {
            let y = (i as f64 * 0.01).sin();
            c.observer_step(y, 1e-3);
            c.control_output(y, 1e-3);
        }
        let before = c.state().clone();
        let filt = c.filter().clone();
        let out = c.retune_internal_model(1.2).unwrap();
        assert!(!out.changed);
        assert_eq!(c.state(), &before);
        assert_eq!(c.filter(), &filt);
        assert!(!c.is_fading());
    }

    #[test]
    fn retune_clamps_out_of_range() {
        let mut c = Compensator::new(paper(1.2)).unwrap();
        let out = c.retune_internal_model(0.1).unwrap();
        assert!(out.clamped);
        assert_eq!(out.omega, 0.5);
        assert_eq!(c.internal_model_freq(), 0.5);
    }

    #[test]
    fn retune_fades_continuously() {
        let mut c = Compensator::new(paper(1.2)).unwrap();
        let h = 1e-3;
        let y = |i: usize| 0.2 * (1.3 * i as f64 * h).sin();
        let mut us = Vec::new();
        for i in 0..3000 {
            c.observer_step(y(i), h);
            us.push(c.control_output(y(i), h));
        }
        let max_step_before = us.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        // jump the zero-state new filter would cause without fading
        let mut probe = c.clone();
        probe.config.fade_steps = 0;
        probe.retune_internal_model(4.0).unwrap();
        let jump = (probe.output(y(3000)) - c.output(y(3000))).abs();
        c.retune_internal_model(4.0).unwrap();
        assert!(c.is_fading());
        let mut after = vec![*us.last().unwrap()];
        for i in 3000..3020 {
            c.observer_step(y(i), h);
            after.push(c.control_output(y(i), h));
        }
        assert!(!c.is_fading());
        let bound = jump / 10.0 + 2.0 * max_step_before;
        for w in after.windows(2) {
            assert!((w[1] - w[0]).abs() <= bound, "{} > {bound}", (w[1] - w[0]).abs());
        }
    }

    #[test]
    fn rho_one_uses_output_directly() {
        let mut cfg = paper(1.0);
        cfg.observer_gains.clear();
        cfg.alpha = Polynomial::one();
        let c = Compensator::new(cfg).unwrap();
        assert_eq!(c.xi1(0.3), 0.3);
        assert!(c.state().xi.is_empty());
    }
}
