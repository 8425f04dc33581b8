//! Convex links `f` and their dominating bound functions `s`.
//!
//! Every preference loss in this crate has the shape `f(η·(r_w − r_l − γ))`
//! for one of the links below. The matching [`BoundFn`] is the function `s`
//! with `f(x + γ) + f(−x + γ) ≤ s(|x|)`, which is what licenses replacing the
//! cross terms of the long-context bound by a short-to-long alignment penalty.

use serde::{Deserialize, Serialize};

use super::GpoError;

/// Convex link function of a generalized preference loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvexLink {
    /// `log(1 + e^{−x})`, i.e. `−log σ(x)`.
    Logistic,
    /// `x²`.
    Square,
    /// `max(0, −x)`.
    Hinge,
    /// `max(0, −x)²`.
    SquaredHinge,
    /// `e^{−x}`.
    Exponential,
}

impl ConvexLink {
    pub const ALL: [ConvexLink; 5] = [
        ConvexLink::Logistic,
        ConvexLink::Square,
        ConvexLink::Hinge,
        ConvexLink::SquaredHinge,
        ConvexLink::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConvexLink::Logistic => "logistic",
            ConvexLink::Square => "square",
            ConvexLink::Hinge => "hinge",
            ConvexLink::SquaredHinge => "squared_hinge",
            ConvexLink::Exponential => "exponential",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }

    /// Evaluates `f(x)` without checking the input.
    ///
    /// The logistic branch uses `max(−x, 0) + log1p(e^{−|x|})`, which is exact
    /// to rounding on both tails.
    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            ConvexLink::Logistic => softplus(-x),
            ConvexLink::Square => x * x,
            ConvexLink::Hinge => (-x).max(0.0),
            ConvexLink::SquaredHinge => {
                let h = (-x).max(0.0);
                h * h
            }
            ConvexLink::Exponential => libm::exp(-x),
        }
    }

    /// `f'(x)`; the hinge kink at 0 takes subgradient 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ConvexLink::Logistic => -sigmoid(-x),
            ConvexLink::Square => 2.0 * x,
            ConvexLink::Hinge => {
                if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ConvexLink::SquaredHinge => -2.0 * (-x).max(0.0),
            ConvexLink::Exponential => -libm::exp(-x),
        }
    }

    /// Whether the short-to-long gap enters the alignment penalty squared
    /// (quadratic `s`) rather than as an absolute value.
    pub fn squares_gap(self) -> bool {
        matches!(self, ConvexLink::Square | ConvexLink::SquaredHinge)
    }
}

/// `f(x)` with input validation.
pub fn eval_link(link: ConvexLink, x: f64) -> Result<f64, GpoError> {
    if !x.is_finite() {
        return Err(GpoError::NonFinite("link argument"));
    }
    Ok(link.value(x))
}

/// Bound function `s` paired with a link at margin constant `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundFn {
    pub link: ConvexLink,
    pub gamma: f64,
}

impl BoundFn {
    pub fn new(link: ConvexLink, gamma: f64) -> Self {
        Self { link, gamma }
    }

    /// `s(|x|)`.
    ///
    /// Hinge-type bounds are clamped at zero: the sum they dominate is
    /// non-negative, and the unclamped forms `|x| − γ`, `x² − γ²` go negative
    /// for `|x| < γ`.
    pub fn value(&self, x: f64) -> f64 {
        let a = x.abs();
        let g = self.gamma;
        match self.link {
            ConvexLink::Logistic => a + 2.0 * softplus(3.0 * g),
            ConvexLink::Square => 2.0 * a * a + 2.0 * g * g,
            ConvexLink::Hinge => (a - g).max(0.0),
            ConvexLink::Exponential => 2.0 * libm::exp(-g) * libm::cosh(a),
            ConvexLink::SquaredHinge => (a * a - g * g).max(0.0),
        }
    }

    /// The left-hand side `f(x + γ) + f(−x + γ)` this bound must dominate.
    pub fn dominated_sum(&self, x: f64) -> f64 {
        self.link.value(x + self.gamma) + self.link.value(-x + self.gamma)
    }
}

/// `s(|x|)` with input validation.
pub fn eval_bound(bound: BoundFn, x: f64) -> Result<f64, GpoError> {
    if !x.is_finite() {
        return Err(GpoError::NonFinite("bound argument"));
    }
    if !bound.gamma.is_finite() {
        return Err(GpoError::NonFinite("bound gamma"));
    }
    Ok(bound.value(x))
}

/// `log(1 + e^x)`, stable for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
