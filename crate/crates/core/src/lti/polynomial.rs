use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::LtiError;

/// Relative threshold below which trailing coefficients are treated as zero.
pub const TRIM_REL_TOL: f64 = 1e-12;

/// Real polynomial in the differentiation operator `p`.
///
/// Coefficients are stored in ascending degree: `coeffs[i]` multiplies `p^i`.
/// Construction trims trailing coefficients whose magnitude is below
/// `TRIM_REL_TOL * max|c|`, so the leading coefficient is always nonzero
/// unless the polynomial is identically zero (stored as `[0.0]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Self {
        let mut coeffs = coeffs.into();
        let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        while coeffs.len() > 1 {
            let last = *coeffs.last().unwrap();
            if last == 0.0 || last.abs() < TRIM_REL_TOL * scale {
                coeffs.pop();
            } else {
                break;
            }
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() == 1 && coeffs[0].abs() < f64::MIN_POSITIVE {
            coeffs[0] = 0.0;
        }
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// The monomial `p`.
    pub fn p() -> Self {
        Self::new(vec![0.0, 1.0])
    }

    /// `(p + root_neg)^power`, e.g. `linear_power(1.0, 3)` is `(p+1)^3`.
    pub fn linear_power(root_neg: f64, power: u32) -> Self {
        (0..power).fold(Self::one(), |acc, _| {
            poly_mul(&acc, &Self::new(vec![root_neg, 1.0]))
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    /// Returns the polynomial scaled so the leading coefficient is one.
    pub fn monic(&self) -> Self {
        let lead = self.leading();
        Self::new(self.coeffs.iter().map(|c| c / lead).collect::<Vec<_>>())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect::<Vec<_>>())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    /// Polynomial long division: returns `(quotient, remainder)` with
    /// `self = quotient * divisor + remainder` and `deg(remainder) < deg(divisor)`.
    pub fn div_rem(&self, divisor: &Polynomial) -> Result<(Polynomial, Polynomial), LtiError> {
        if divisor.is_zero() {
            return Err(LtiError::ZeroPolynomial);
        }
        let n = self.degree();
        let m = divisor.degree();
        if n < m || self.is_zero() {
            return Ok((Self::zero(), self.clone()));
        }
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; n - m + 1];
        let lead = divisor.leading();
        for i in (0..=n - m).rev() {
            let q = rem[i + m] / lead;
            quot[i] = q;
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[i + j] -= q * d;
            }
            rem[i + m] = 0.0;
        }
        rem.truncate(m.max(1));
        Ok((Self::new(quot), Self::new(rem)))
    }

    /// Frobenius companion matrix of the monic version of `self`.
    pub fn companion(&self) -> Result<DMatrix<f64>, LtiError> {
        let n = self.degree();
        if n == 0 {
            return Err(LtiError::ConstantPolynomial);
        }
        let monic = self.monic();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -monic.coeffs[j];
        }
        Ok(a)
    }

    /// All roots, computed as eigenvalues of the companion matrix.
    pub fn roots(&self) -> Result<Vec<Complex64>, LtiError> {
        let a = self.companion()?;
        Ok(a.complex_eigenvalues().iter().copied().collect())
    }
}

impl From<Vec<f64>> for Polynomial {
    fn from(c: Vec<f64>) -> Self {
        Self::new(c)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl From<&[f64]> for Polynomial {
    fn from(c: &[f64]) -> Self {
        Self::new(c.to_vec())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if *c == 0.0 && !(self.is_zero() && i == 0) {
                continue;
            }
            if !first {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            let mag = c.abs();
            match i {
                0 => write!(f, "{mag}")?,
                1 => write!(f, "{mag}p")?,
                _ => write!(f, "{mag}p^{i}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// Coefficient convolution.
pub fn poly_mul(p: &Polynomial, q: &Polynomial) -> Polynomial {
    if p.is_zero() || q.is_zero() {
        return Polynomial::zero();
    }
    let mut out = vec![0.0; p.coeffs.len() + q.coeffs.len() - 1];
    for (i, a) in p.coeffs.iter().enumerate() {
        for (j, b) in q.coeffs.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    Polynomial::new(out)
}

pub fn poly_add(p: &Polynomial, q: &Polynomial) -> Polynomial {
    let n = p.coeffs.len().max(q.coeffs.len());
    let out: Vec<f64> = (0..n)
        .map(|i| p.coeffs.get(i).copied().unwrap_or(0.0) + q.coeffs.get(i).copied().unwrap_or(0.0))
        .collect();
    Polynomial::new(out)
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        poly_mul(self, rhs)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        poly_add(self, rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        poly_add(self, &-rhs)
    }
}

/// True iff every root of `p` has strictly negative real part.
///
/// Uses the eigenvalues of the companion matrix.
pub fn is_hurwitz(p: &Polynomial) -> Result<bool, LtiError> {
    let roots = p.roots()?;
    Ok(roots.iter().all(|r| r.re < 0.0))
}

/// Routh–Hurwitz test. Independent of [`is_hurwitz`]; a zero pivot in the
/// first column is reported as not Hurwitz.
pub fn routh_hurwitz(p: &Polynomial) -> Result<bool, LtiError> {
    let n = p.degree();
    if n == 0 {
        return Err(LtiError::ConstantPolynomial);
    }
    // descending coefficients, leading made positive
    let sign = p.leading().signum();
    let desc: Vec<f64> = p.coeffs().iter().rev().map(|c| c * sign).collect();
    if desc.iter().any(|c| *c <= 0.0) {
        return Ok(false);
    }
    let width = n / 2 + 1;
    let mut prev: Vec<f64> = (0..width).map(|i| desc.get(2 * i).copied().unwrap_or(0.0)).collect();
    let mut cur: Vec<f64> = (0..width)
        .map(|i| desc.get(2 * i + 1).copied().unwrap_or(0.0))
        .collect();
    for _ in 0..n - 1 {
        let pivot = cur[0];
        if pivot <= 0.0 {
            return Ok(false);
        }
        let next: Vec<f64> = (0..width)
            .map(|i| {
                let a = prev.get(i + 1).copied().unwrap_or(0.0);
                let b = cur.get(i + 1).copied().unwrap_or(0.0);
                (pivot * a - prev[0] * b) / pivot
            })
            .collect();
        prev = cur;
        cur = next;
    }
    Ok(cur[0] > 0.0)
}
