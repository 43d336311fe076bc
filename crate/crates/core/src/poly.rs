//! Polynomials in numerically stable bases, plus sup-norm measurement.
//!
//! A [`Polynomial`] is anchored to a reference interval `[a, b]` and stores
//! coefficients either in the Chebyshev basis `T_k(t)`, `t = (2x - a - b)/(b - a)`
//! (evaluated by Clenshaw's recurrence), or in the Bernstein basis
//! `C(n,k) u^k (1-u)^(n-k)`, `u = (x - a)/(b - a)`. The Bernstein form is kept
//! for Bernstein-operator constructions because evaluating the residual
//! `p - y` there is a positive combination, which preserves relative accuracy
//! for errors far below the double-precision unit roundoff of `p` itself.
//!
//! Every other construction is converted to the Chebyshev form by
//! interpolation at Chebyshev-Lobatto nodes, which is exact for inputs that
//! are polynomials of the target degree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::intervals::{AffineMap, Interval, StepFunction};
use crate::numerics::{golden_max, ln_binomial_row, CompensatedSum};

/// Degree cap enforced by [`compose`].
pub const DEFAULT_DEGREE_CAP: usize = 4096;

/// Bernstein polynomials up to this degree are evaluated by de Casteljau.
const DE_CASTELJAU_MAX_DEGREE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    #[default]
    Chebyshev,
    Bernstein,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolynomial", into = "RawPolynomial")]
pub struct Polynomial {
    basis: Basis,
    coeffs: Vec<f64>,
    domain: Interval,
}

#[derive(Serialize, Deserialize)]
struct RawPolynomial {
    #[serde(rename = "ref")]
    domain: Interval,
    coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_chebyshev")]
    basis: Basis,
}

fn is_chebyshev(b: &Basis) -> bool {
    *b == Basis::Chebyshev
}

impl TryFrom<RawPolynomial> for Polynomial {
    type Error = Error;

    fn try_from(raw: RawPolynomial) -> Result<Self> {
        Polynomial::with_basis(raw.basis, raw.coeffs, raw.domain)
    }
}

impl From<Polynomial> for RawPolynomial {
    fn from(p: Polynomial) -> Self {
        RawPolynomial {
            domain: p.domain,
            coeffs: p.coeffs,
            basis: p.basis,
        }
    }
}

impl Polynomial {
    pub fn with_basis(basis: Basis, coeffs: Vec<f64>, domain: Interval) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(precondition("polynomial needs at least one coefficient"));
        }
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {c}")));
        }
        if domain.len() <= 0.0 {
            return Err(precondition("reference interval must have positive length"));
        }
        Ok(Self { basis, coeffs, domain })
    }

    pub fn chebyshev(coeffs: Vec<f64>, domain: Interval) -> Result<Self> {
        Self::with_basis(Basis::Chebyshev, coeffs, domain)
    }

    /// Bernstein form on `domain`; `coeffs[k]` multiplies `C(n,k) u^k (1-u)^(n-k)`.
    pub fn bernstein(coeffs: Vec<f64>, domain: Interval) -> Result<Self> {
        Self::with_basis(Basis::Bernstein, coeffs, domain)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            basis: Basis::Chebyshev,
            coeffs: vec![c],
            domain: Interval::new(-1.0, 1.0).expect("static interval"),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `x` on `[-1, 1]`.
    pub fn identity() -> Self {
        Self::chebyshev(vec![0.0, 1.0], Interval::new(-1.0, 1.0).expect("static interval")).expect("valid")
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.basis {
            Basis::Chebyshev => {
                let t = (2.0 * x - self.domain.lo() - self.domain.hi()) / self.domain.len();
                clenshaw(&self.coeffs, t)
            }
            Basis::Bernstein => {
                let u = (x - self.domain.lo()) / self.domain.len();
                bernstein_eval(&self.coeffs, u)
            }
        }
    }

    /// Interpolates `f` at `degree + 1` Chebyshev-Lobatto nodes of `domain`.
    ///
    /// Exact (up to rounding) whenever `f` is a polynomial of degree at most `degree`.
    pub fn from_samples(f: impl Fn(f64) -> f64 + Sync, degree: usize, domain: Interval) -> Result<Self> {
        if domain.len() <= 0.0 {
            return Err(precondition("reference interval must have positive length"));
        }
        if degree == 0 {
            return Self::chebyshev(vec![f(domain.mid())], domain);
        }
        let n = degree;
        let mid = domain.mid();
        let half = domain.radius();
        let values: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|j| {
                let x = if j == 0 {
                    domain.hi()
                } else if j == n {
                    domain.lo()
                } else {
                    mid + half * (std::f64::consts::PI * j as f64 / n as f64).cos()
                };
                f(x)
            })
            .collect();
        let table: Vec<f64> = (0..2 * n)
            .map(|r| (std::f64::consts::PI * r as f64 / n as f64).cos())
            .collect();
        let mut coeffs: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|k| {
                let mut acc = CompensatedSum::new();
                for (j, v) in values.iter().enumerate() {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    acc.add(w * v * table[(j * k) % (2 * n)]);
                }
                2.0 * acc.value() / n as f64
            })
            .collect();
        coeffs[0] *= 0.5;
        coeffs[n] *= 0.5;
        Self::chebyshev(coeffs, domain)
    }

    /// The same polynomial in the Chebyshev basis on the same reference interval.
    pub fn to_chebyshev(&self) -> Polynomial {
        match self.basis {
            Basis::Chebyshev => self.clone(),
            Basis::Bernstein => {
                Self::from_samples(|x| self.eval(x), self.degree(), self.domain).expect("domain already validated")
            }
        }
    }

    /// `a * p + b`.
    pub fn affine_values(&self, a: f64, b: f64) -> Polynomial {
        let mut coeffs: Vec<f64> = self.coeffs.iter().map(|c| a * c).collect();
        match self.basis {
            Basis::Chebyshev => coeffs[0] += b,
            // Bernstein basis functions sum to one
            Basis::Bernstein => coeffs.iter_mut().for_each(|c| *c += b),
        }
        Polynomial {
            basis: self.basis,
            coeffs,
            domain: self.domain,
        }
    }

    /// `p - y`, formed in coefficient space.
    pub fn residual(&self, y: f64) -> Polynomial {
        self.affine_values(1.0, -y)
    }

    /// `x -> p(map(x))`; exact, only the reference interval moves.
    pub fn affine_pullback(&self, map: &AffineMap) -> Polynomial {
        let inv = map.inverse();
        let domain = self.domain.map(&inv);
        let mut coeffs = self.coeffs.clone();
        if map.scale() < 0.0 {
            match self.basis {
                Basis::Chebyshev => coeffs.iter_mut().skip(1).step_by(2).for_each(|c| *c = -*c),
                Basis::Bernstein => coeffs.reverse(),
            }
        }
        Polynomial {
            basis: self.basis,
            coeffs,
            domain,
        }
    }

    /// Drops trailing Chebyshev coefficients below `1e-300` in magnitude.
    pub fn trimmed(&self) -> Polynomial {
        if self.basis == Basis::Bernstein {
            return self.clone();
        }
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.abs() < 1e-300) {
            coeffs.pop();
        }
        Polynomial {
            basis: self.basis,
            coeffs,
            domain: self.domain,
        }
    }
}

/// `sum_k w_k p_k` in the Chebyshev basis; all terms must share a reference interval.
pub fn weighted_sum(terms: &[(f64, &Polynomial)]) -> Result<Polynomial> {
    let Some((_, first)) = terms.first() else {
        return Ok(Polynomial::zero());
    };
    let domain = first.domain;
    let degree = terms.iter().map(|(_, p)| p.degree()).max().unwrap_or(0);
    let mut acc = vec![CompensatedSum::new(); degree + 1];
    for (w, p) in terms {
        if p.domain != domain && p.degree() > 0 {
            return Err(precondition("weighted_sum terms use different reference intervals"));
        }
        let c = p.to_chebyshev();
        for (a, ck) in acc.iter_mut().zip(&c.coeffs) {
            a.add(w * ck);
        }
    }
    Polynomial::chebyshev(acc.iter().map(CompensatedSum::value).collect(), domain)
}

/// `outer ∘ inner` with the default degree cap.
pub fn compose(outer: &Polynomial, inner: &Polynomial) -> Result<Polynomial> {
    compose_with_cap(outer, inner, DEFAULT_DEGREE_CAP)
}

/// `outer ∘ inner`, re-fitted at `deg(outer) * deg(inner) + 1` nodes of the
/// inner reference interval.
pub fn compose_with_cap(outer: &Polynomial, inner: &Polynomial, cap: usize) -> Result<Polynomial> {
    let degree = outer.degree() * inner.degree();
    if degree > cap {
        return Err(Error::DegreeOverflow { degree, cap });
    }
    if outer.degree() == 0 {
        return Polynomial::chebyshev(vec![outer.coeffs[0]], inner.domain);
    }
    Polynomial::from_samples(|x| outer.eval(inner.eval(x)), degree, inner.domain)
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = ck + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + t * b1 - b2
}

fn bernstein_eval(b: &[f64], u: f64) -> f64 {
    let n = b.len() - 1;
    if n == 0 {
        return b[0];
    }
    if u == 0.0 {
        return b[0];
    }
    if u == 1.0 {
        return b[n];
    }
    if !(0.0..=1.0).contains(&u) || n <= DE_CASTELJAU_MAX_DEGREE {
        return de_casteljau(b, u);
    }
    // sum_k b_k pmf_k / sum_k pmf_k with pmf_k the binomial(n, u) masses in log space
    let lu = u.ln();
    let lv = (-u).ln_1p();
    let lc = ln_binomial_row(n);
    let logs: Vec<f64> = (0..=n)
        .map(|k| lc[k] + k as f64 * lu + (n - k) as f64 * lv)
        .collect();
    let (mode, lmax) = logs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, l)| if l > acc.1 { (k, l) } else { acc });
    // offsets from the coefficient at the mode keep constants exact
    let anchor = b[mode];
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (k, l) in logs.iter().enumerate() {
        let w = (l - lmax).exp();
        den.add(w);
        let d = b[k] - anchor;
        if d != 0.0 {
            num.add(d * w);
        }
    }
    anchor + num.value() / den.value()
}

fn de_casteljau(b: &[f64], u: f64) -> f64 {
    let mut work = b.to_vec();
    let v = 1.0 - u;
    let n = work.len() - 1;
    for r in 1..=n {
        for k in 0..=(n - r) {
            work[k] = v * work[k] + u * work[k + 1];
        }
    }
    work[0]
}

/// Node placement inside each segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    EndpointClustered,
    Uniform,
}

/// Verification grid for sup-norm measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_interval: usize,
    pub distribution: Distribution,
    pub refine: bool,
}

/// Golden-section iterations used by refinement.
pub const REFINE_ITERATIONS: usize = 40;

impl GridSpec {
    pub fn new(points_per_interval: usize, distribution: Distribution, refine: bool) -> Result<Self> {
        if points_per_interval < 2 {
            return Err(precondition("grid needs at least 2 points per interval"));
        }
        Ok(Self {
            points_per_interval,
            distribution,
            refine,
        })
    }

    /// `max(32 (degree + 1), 257)` clustered points, refined.
    pub fn for_degree(degree: usize) -> Self {
        Self {
            points_per_interval: (32 * (degree + 1)).max(257),
            distribution: Distribution::EndpointClustered,
            refine: true,
        }
    }

    pub fn with_refine(self, refine: bool) -> Self {
        Self { refine, ..self }
    }

    /// Multiplies the point count (at least 2 points remain).
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            points_per_interval: ((self.points_per_interval as f64 * factor).round() as usize).max(2),
            ..self
        }
    }

    pub fn points(&self, on: Interval) -> Vec<f64> {
        if on.is_point() {
            return vec![on.lo()];
        }
        let n = self.points_per_interval;
        let mut pts: Vec<f64> = (0..n)
            .map(|j| {
                let s = j as f64 / (n - 1) as f64;
                match self.distribution {
                    Distribution::Uniform => on.lo() + s * on.len(),
                    Distribution::EndpointClustered => on.mid() - on.radius() * (std::f64::consts::PI * s).cos(),
                }
            })
            .collect();
        pts[0] = on.lo();
        pts[n - 1] = on.hi();
        pts
    }
}

/// Largest `|g|` over the grid on `on`, with optional golden-section refinement
/// around the grid argmax. Returns `(value, argmax)`.
pub fn max_abs_on(g: impl Fn(f64) -> f64 + Sync, on: Interval, grid: &GridSpec) -> (f64, f64) {
    let pts = grid.points(on);
    let (idx, val) = pts
        .par_iter()
        .enumerate()
        .map(|(i, &x)| (i, g(x).abs()))
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                // NaN propagates as the maximum so that broken inputs are visible
                let (va, vb) = (nan_high(a.1), nan_high(b.1));
                if vb > va || (vb == va && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let mut best = (val, pts[idx]);
    if grid.refine && pts.len() > 1 {
        let lo = pts[idx.saturating_sub(1)];
        let hi = pts[(idx + 1).min(pts.len() - 1)];
        let (x, v) = golden_max(|x| g(x).abs(), lo, hi, REFINE_ITERATIONS);
        if v > best.0 {
            best = (v, x);
        }
    }
    best
}

fn nan_high(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Max of `|p|` over the grid on `on`.
pub fn sup_norm(p: &Polynomial, on: Interval, grid: &GridSpec) -> f64 {
    max_abs_on(|x| p.eval(x), on, grid).0
}

/// Measured errors of an approximant; entries are lower bounds on the true sup-norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_interval_error: Vec<f64>,
    pub global_error: f64,
    pub hull_norm: f64,
    pub grid_size: usize,
}

impl ErrorReport {
    /// `degree,global_error,hull_norm,certificate` with 17 significant digits.
    pub fn csv_row(&self, degree: usize, certificate: f64) -> String {
        format!(
            "{},{},{},{}",
            degree,
            fmt_f64(self.global_error),
            fmt_f64(self.hull_norm),
            fmt_f64(certificate)
        )
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Per-segment `max |p - y_i|` and `max |p|` on the convex hull.
pub fn sup_error(p: &Polynomial, f: &StepFunction, grid: &GridSpec) -> ErrorReport {
    let mut grid_size = 0;
    let per_interval_error: Vec<f64> = f
        .system()
        .intervals()
        .iter()
        .zip(f.values())
        .map(|(iv, &y)| {
            grid_size += grid.points(*iv).len();
            let r = p.residual(y);
            max_abs_on(|x| r.eval(x), *iv, grid).0
        })
        .collect();
    let hull = f.system().hull();
    let hull_grid = hull_grid(grid, f.system().len());
    let hull_norm = if hull.is_point() {
        p.eval(hull.lo()).abs()
    } else {
        grid_size += hull_grid.points(hull).len();
        sup_norm(p, hull, &hull_grid)
    };
    ErrorReport {
        global_error: per_interval_error.iter().copied().fold(0.0, f64::max),
        per_interval_error,
        hull_norm,
        grid_size,
    }
}

/// Grid used on the convex hull: the per-segment density times the segment count.
pub fn hull_grid(grid: &GridSpec, segments: usize) -> GridSpec {
    GridSpec {
        points_per_interval: grid.points_per_interval * segments.max(1),
        ..*grid
    }
}
