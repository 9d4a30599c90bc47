use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::polynomial::Polynomial;
use super::LtiError;

/// Rational transfer function `num(p) / den(p)`, required to be proper.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Polynomial,
    den: Polynomial,
}

impl TransferFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, LtiError> {
        if den.is_zero() {
            return Err(LtiError::ZeroPolynomial);
        }
        if !num.is_zero() && num.degree() > den.degree() {
            return Err(LtiError::Improper {
                num_degree: num.degree(),
                den_degree: den.degree(),
            });
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// `deg(den) - deg(num)`; a zero numerator reports the denominator degree.
    pub fn relative_degree(&self) -> usize {
        if self.num.is_zero() {
            self.den.degree()
        } else {
            self.den.degree() - self.num.degree()
        }
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.relative_degree() > 0
    }

    /// Same transfer function with a monic denominator.
    pub fn normalized(&self) -> Self {
        let lead = self.den.leading();
        Self {
            num: self.num.scale(1.0 / lead),
            den: self.den.scale(1.0 / lead),
        }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.num.eval_complex(s) / self.den.eval_complex(s)
    }

    /// Frequency response at `p = jω`.
    pub fn freq_response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    /// Series connection `self * other`.
    pub fn series(&self, other: &TransferFunction) -> Result<Self, LtiError> {
        Self::new(&self.num * &other.num, &self.den * &other.den)
    }
}

/// Single-input single-output state-space model `ẋ = Ax + b·u`, `y = cᵀx + d·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, d: f64) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.len() != n {
            return Err(LtiError::Dimension);
        }
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `ẋ = A x + b u`, written into `dx`.
    pub fn derivative(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let n = self.order();
        for (i, d) in dx.iter_mut().enumerate().take(n) {
            *d = (0..n).fold(self.b[i] * u, |acc, j| acc + self.a[(i, j)] * x[j]);
        }
    }

    pub fn output(&self, x: &[f64], u: f64) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.d * u
    }

    /// `cᵀ(sI − A)⁻¹b + d`.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let n = self.order();
        if n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let rhs = DVector::<Complex64>::from_fn(n, |i, _| Complex64::new(self.b[i], 0.0));
        let x = m.lu().solve(&rhs).unwrap_or_else(|| DVector::from_element(n, Complex64::new(f64::INFINITY, 0.0)));
        let y: Complex64 = self
            .c
            .iter()
            .zip(x.iter())
            .map(|(c, x)| Complex64::new(*c, 0.0) * x)
            .sum();
        y + self.d
    }

    pub fn freq_response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }
}

/// Controllable canonical (companion-form) realization of a proper transfer function.
pub fn tf_to_statespace(tf: &TransferFunction) -> Result<StateSpaceModel, LtiError> {
    let tf = tf.normalized();
    let n = tf.den().degree();
    let (d, rem) = if !tf.num().is_zero() && tf.num().degree() == n {
        let d = tf.num().leading();
        let rem = tf.num() - &tf.den().scale(d);
        (d, rem)
    } else {
        (0.0, tf.num().clone())
    };
    let den = tf.den().coeffs();
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == n {
            -den[j]
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    });
    let b = DVector::from_fn(n, |i, _| if i + 1 == n { 1.0 } else { 0.0 });
    let c = DVector::from_fn(n, |i, _| rem.coeffs().get(i).copied().unwrap_or(0.0));
    StateSpaceModel::new(a, b, c, d)
}

/// Default SPR grid: 400 log-spaced frequencies in [1e-3, 1e4] rad/s.
pub fn default_spr_grid() -> Vec<f64> {
    log_grid(1e-3, 1e4, 400)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (l0, l1) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Outcome of a sampled strict-positive-realness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SprVerdict {
    Passed,
    /// Denominator is not Hurwitz.
    Unstable,
    /// `Re[h(jω)] <= 0` at this grid frequency.
    NotPositive { omega: f64 },
}

impl SprVerdict {
    pub fn is_spr(&self) -> bool {
        matches!(self, SprVerdict::Passed)
    }

    pub fn reason(&self) -> Option<&'static str> {
        match self {
            SprVerdict::Passed => None,
            SprVerdict::Unstable => Some("unstable"),
            SprVerdict::NotPositive { .. } => Some("not positive"),
        }
    }
}

/// Samples `Re[h(jω)] > 0` over `grid` after checking the denominator is Hurwitz.
///
/// This is a necessary condition checked on a finite grid, not a proof of SPR.
pub fn spr_check(h: &TransferFunction, grid: &[f64]) -> Result<SprVerdict, LtiError> {
    if grid.is_empty() || grid.iter().any(|w| !(*w > 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(LtiError::BadGrid);
    }
    if h.den().degree() >= 1 && !super::is_hurwitz(h.den())? {
        return Ok(SprVerdict::Unstable);
    }
    for &omega in grid {
        if h.freq_response(omega).re <= 0.0 {
            return Ok(SprVerdict::NotPositive { omega });
        }
    }
    Ok(SprVerdict::Passed)
}
