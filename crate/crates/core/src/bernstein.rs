//! Bernstein-operator constructions and their Chernoff-type certificates.
//!
//! `B_n(f, x) = sum_k C(n,k) f(k/n) x^k (1-x)^(n-k)` is positive and preserves
//! constants, so for a step function the error at `x` is controlled by binomial
//! tail probabilities, which in turn are bounded by `exp(-n H(a || x))`.

use crate::certificate::{pow_half, BoundCertificate, Formula};
use crate::error::{precondition, Error, Result};
use crate::intervals::{AffineMap, Interval, IntervalSystem, ValueSet};
use crate::poly::Polynomial;

/// Binary relative entropy `H(p || q) = p ln(p/q) + (1-p) ln((1-p)/(1-q))`.
///
/// Uses `0 ln 0 = 0`; returns `+inf` when `q ∈ {0, 1}` and `p != q`.
pub fn divergence(p: f64, q: f64) -> Result<f64> {
    if p.is_nan() || q.is_nan() {
        return Err(Error::NonFinite("divergence argument is NaN".into()));
    }
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(precondition(format!("divergence needs p, q in [0,1], got ({p}, {q})")));
    }
    if p == q {
        return Ok(0.0);
    }
    let term = |a: f64, b: f64| -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    Ok((term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0))
}

/// `exp(-n H(a || x))`, the bound on `P(Bin(n, x) <= a n)`; requires `0 < a < x < 1`.
pub fn chernoff_lower_tail(n: usize, x: f64, a: f64) -> Result<f64> {
    if !(0.0 < a && a < x && x < 1.0) {
        return Err(precondition(format!("lower tail needs 0 < a < x < 1, got a={a}, x={x}")));
    }
    Ok((-(n as f64) * divergence(a, x)?).exp())
}

/// `exp(-n H(b || x))`, the bound on `P(Bin(n, x) >= b n)`; requires `0 < x < b < 1`.
pub fn chernoff_upper_tail(n: usize, x: f64, b: f64) -> Result<f64> {
    if !(0.0 < x && x < b && b < 1.0) {
        return Err(precondition(format!("upper tail needs 0 < x < b < 1, got x={x}, b={b}")));
    }
    Ok((-(n as f64) * divergence(b, x)?).exp())
}

/// Pointwise bound `2M (e^{-nH(a||x)} + e^{-nH(b||x)})` on `|B_n f(x) - f(x)|` for
/// `f` constant on `(a, b)` with `|f| <= m`, at `x ∈ (a, b)`.
pub fn local_constant_bound(n: usize, a: f64, b: f64, x: f64, m: f64) -> Result<f64> {
    if !(0.0 < a && a < x && x < b && b < 1.0) {
        return Err(precondition(format!("need 0 < a < x < b < 1, got a={a}, x={x}, b={b}")));
    }
    Ok(2.0 * m * (chernoff_lower_tail(n, x, a)? + chernoff_upper_tail(n, x, b)?))
}

/// `B_n f` as a degree-`n` polynomial in Bernstein form on `[0, 1]`.
pub fn bernstein_apply(f: impl Fn(f64) -> f64, n: usize) -> Result<Polynomial> {
    if n == 0 {
        return Err(precondition("Bernstein degree must be at least 1"));
    }
    let coeffs = (0..=n).map(|k| f(k as f64 / n as f64)).collect();
    Polynomial::bernstein(coeffs, unit())
}

fn unit() -> Interval {
    Interval::new(0.0, 1.0).expect("static interval")
}

/// `B_n` of `y0 1_{[0,1/2)} + y1 1_{(1/2,1]}` (value `(y0+y1)/2` at `1/2`),
/// certified on `[0, h] ∪ [1-h, 1]` by `(|y1 - y0|/2) 2 (4h(1-h))^{n/2}`.
pub fn two_segment_approx(h: f64, y0: f64, y1: f64, n: usize) -> Result<(Polynomial, BoundCertificate)> {
    if !(h > 0.0 && h < 0.5) {
        return Err(precondition(format!("h = {h} must lie in (0, 1/2)")));
    }
    two_segment_unchecked(h, y0, y1, n)
}

fn two_segment_unchecked(h: f64, y0: f64, y1: f64, n: usize) -> Result<(Polynomial, BoundCertificate)> {
    if n == 0 {
        return Err(precondition("Bernstein degree must be at least 1"));
    }
    let coeffs = (0..=n)
        .map(|k| match (2 * k).cmp(&n) {
            std::cmp::Ordering::Less => y0,
            std::cmp::Ordering::Greater => y1,
            std::cmp::Ordering::Equal => 0.5 * (y0 + y1),
        })
        .collect();
    let p = Polynomial::bernstein(coeffs, unit())?;
    let amplitude = 0.5 * (y1 - y0).abs();
    let value = amplitude * 2.0 * pow_half(4.0 * h * (1.0 - h), n);
    let cert = BoundCertificate::new(Formula::HBound, value)
        .with("h", h)
        .with("n", n as f64)
        .with("amplitude", amplitude);
    Ok((p, cert))
}

/// Two-segment construction for an arbitrary pair of segments.
///
/// Unequal lengths are first reduced to equal half-length `delta` by
/// extending the shorter segment away from the gap, giving diameter
/// `D' = sigma + 4 delta`; the certificate is `(|y1-y0|/2) 2 (1 - sigma^2/D'^2)^{n/2}`.
pub fn equal_two_segment(system: &IntervalSystem, y: (f64, f64), n: usize) -> Result<(Polynomial, BoundCertificate)> {
    if system.len() != 2 {
        return Err(precondition(format!("two-segment construction needs s = 2, got {}", system.len())));
    }
    let st = system.stats();
    let (first, second) = (system.intervals()[0], system.intervals()[1]);
    let (delta, sigma) = (st.delta, st.sigma);
    let d_prime = sigma + 4.0 * delta;
    let span = Interval::new(first.hi() - 2.0 * delta, second.lo() + 2.0 * delta)?;
    let to_unit = AffineMap::between(span, unit())?;
    let h = 2.0 * delta / d_prime;
    let (p, _) = two_segment_unchecked(h, y.0, y.1, n)?;
    let amplitude = 0.5 * (y.1 - y.0).abs();
    let ratio = sigma / d_prime;
    let value = amplitude * 2.0 * pow_half((1.0 - ratio) * (1.0 + ratio), n);
    let cert = BoundCertificate::new(Formula::TwoSeg, value)
        .with("sigma", sigma)
        .with("delta", delta)
        .with("d_prime", d_prime)
        .with("n", n as f64)
        .with("amplitude", amplitude);
    Ok((p.affine_pullback(&to_unit), cert))
}

/// Amplifier for a two-point value set: maps `[y_i - delta, y_i + delta]` into
/// `[y_i - eps, y_i + eps]` with `eps = D̂ (8 delta D̂ / (D̂ + 2 delta)^2)^{n/2}`.
///
/// For `Y = {-1, 1}` this is `2 (4 delta/(1+delta)^2)^{n/2}`, for `{0, 1}` it is
/// `(8 delta/(1+2 delta)^2)^{n/2}`.
pub fn eps_two(values: &ValueSet, delta: f64, n: usize) -> Result<(Polynomial, BoundCertificate)> {
    if values.len() != 2 {
        return Err(precondition(format!("eps_two needs exactly two values, got {}", values.len())));
    }
    let system = values.inflate(delta)?;
    let y = (values.points()[0], values.points()[1]);
    let (p, _) = equal_two_segment(&system, y, n)?;
    let d_hat = values.diameter();
    let base = 8.0 * delta * d_hat / (d_hat + 2.0 * delta).powi(2);
    let cert = BoundCertificate::new(Formula::EpsTwo, d_hat * pow_half(base, n))
        .with("delta", delta)
        .with("d_hat", d_hat)
        .with("n", n as f64);
    Ok((p, cert))
}
