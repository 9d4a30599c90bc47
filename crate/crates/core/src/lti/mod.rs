//! Polynomial and SISO LTI algebra: transfer functions, companion-form
//! realizations, Hurwitz tests and the sampled SPR check.
//!
//! Polynomials are in the differentiation operator `p` and store coefficients
//! in ascending degree everywhere.

mod polynomial;
mod system;

pub use polynomial::{is_hurwitz, poly_add, poly_mul, routh_hurwitz, Polynomial, TRIM_REL_TOL};
pub use system::{
    default_spr_grid, log_grid, spr_check, tf_to_statespace, SprVerdict, StateSpaceModel,
    TransferFunction,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("stability is undefined for a constant polynomial")]
    ConstantPolynomial,
    #[error("zero polynomial where a nonzero one is required")]
    ZeroPolynomial,
    #[error("improper transfer function: numerator degree {num_degree} exceeds denominator degree {den_degree}")]
    Improper { num_degree: usize, den_degree: usize },
    #[error("inconsistent state-space dimensions")]
    Dimension,
    #[error("frequency grid must be nonempty, positive and sorted")]
    BadGrid,
}

/// Characteristic polynomial that gates the controller design:
///
/// `γ(p) = a(p)·p·(p² + ω²) + k·b(p)·α(p)·(p + 1)³`.
pub fn closed_loop_char_poly(
    a: &Polynomial,
    b: &Polynomial,
    k: f64,
    alpha: &Polynomial,
    omega: f64,
) -> Polynomial {
    let generator = Polynomial::new(vec![0.0, omega * omega, 0.0, 1.0]);
    let plant_part = poly_mul(a, &generator);
    let feedback = poly_mul(&poly_mul(b, alpha), &Polynomial::linear_power(1.0, 3)).scale(k);
    poly_add(&plant_part, &feedback)
}

/// Denominator of the SPR transfer function `H(p)` written without the integrator:
///
/// `a(p)·(p² + ω²) + k·α(p)·b(p)·(p + 1)²`.
pub fn nominal_char_poly(
    a: &Polynomial,
    b: &Polynomial,
    k: f64,
    alpha: &Polynomial,
    omega: f64,
) -> Polynomial {
    let generator = Polynomial::new(vec![omega * omega, 0.0, 1.0]);
    let feedback = poly_mul(&poly_mul(b, alpha), &Polynomial::linear_power(1.0, 2)).scale(k);
    poly_add(&poly_mul(a, &generator), &feedback)
}

/// `H(p) = α(p)b(p)(p+1)² / [a(p)(p²+ω²) + kα(p)b(p)(p+1)²]`, the transfer
/// function required to be SPR.
pub fn spr_candidate(
    a: &Polynomial,
    b: &Polynomial,
    k: f64,
    alpha: &Polynomial,
    omega: f64,
) -> Result<TransferFunction, LtiError> {
    let num = poly_mul(&poly_mul(alpha, b), &Polynomial::linear_power(1.0, 2));
    TransferFunction::new(num, nominal_char_poly(a, b, k, alpha, omega))
}
