use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Which closed-form bound a certificate evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Formula {
    /// `2 (4h(1-h))^{n/2}` on `[0,h] ∪ [1-h,1]`.
    HBound,
    /// `2 (1 - sigma^2/D^2)^{n/2}` for two segments.
    TwoSeg,
    /// `2(s-1) (A delta)^n` from the confluent partition of unity.
    SmallDelta,
    /// `2 (3/4)^{m/2}` after amplifying a base approximant.
    Pipeline,
    EpsTwo,
    EpsGeneral,
    EpsSmallDelta,
    /// `(2 delta)^n (2D+1)^{n(s-1)}` for one partition polynomial.
    BndLimit,
    /// `2 (4 eps/(1+eps)^2)^{m/2}` composed over an inner approximant.
    SelfAmplify,
    /// Exact representation (constant targets).
    Exact,
    /// `max |y_i|` for the zero polynomial (or half the value range for its midpoint).
    Trivial,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

/// An analytic upper bound on the sup error of a construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub formula: Formula,
    pub params: BTreeMap<String, f64>,
    pub value: f64,
}

impl BoundCertificate {
    pub fn new(formula: Formula, value: f64) -> Self {
        Self {
            formula,
            params: BTreeMap::new(),
            value,
        }
    }

    pub fn with(mut self, name: &str, v: f64) -> Self {
        self.params.insert(name.to_owned(), v);
        self
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    /// Multiplies the bound by `factor` (recorded as `scale`).
    pub fn scaled(mut self, factor: f64, formula: Formula) -> Self {
        self.value *= factor;
        self.formula = formula;
        self.with("scale", factor)
    }

    pub fn exact() -> Self {
        Self::new(Formula::Exact, 0.0)
    }

    pub fn trivial(value: f64) -> Self {
        Self::new(Formula::Trivial, value)
    }
}

/// `base^{exponent}` with `0^x = 0` for positive exponents.
pub(crate) fn pow_half(base: f64, n: usize) -> f64 {
    if base <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (0.5 * n as f64 * base.ln()).exp()
}
