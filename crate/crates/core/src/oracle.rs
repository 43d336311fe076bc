//! Numerical ground truth: exact binomial tails and best uniform polynomial
//! fits on a union of segments.
//!
//! The fit runs Lawson's reweighted least squares (weights multiplied by
//! `|r|^damping`) to get close to the discrete minimax, then finishes with a
//! single-point exchange on the grid: polynomials of degree `d` are a Haar
//! system on any finite set of reals, so a levelled reference of `d + 2`
//! points certifies the discrete optimum. When the optimum falls below what
//! binary64 can resolve, the exchange is repeated in double-double and then
//! in 256-bit MPFR arithmetic, started from approximate Fekete points when the
//! previous stage only saw rounding noise.
//! The bounded variant keeps `|P| <= max|y_i|` on the hull by penalty rows
//! whose weights double while violated.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::certificate::BoundCertificate;
use crate::error::{precondition, Error, Result};
use crate::intervals::{Interval, StepFunction};
use crate::numerics::{ln_binomial_row, CompensatedSum};
use crate::poly::{hull_grid, max_abs_on, sup_error, Distribution, ErrorReport, GridSpec, Polynomial};

/// Largest degree the oracle accepts.
pub const ORACLE_DEGREE_CAP: usize = 64;
/// Minimum grid points per segment, per unit of `degree + 1`.
pub const MIN_GRID_MULT: usize = 8;

/// Which tail of `Binomial(n, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailSide {
    /// `P(X <= k)`
    Lower,
    /// `P(X >= k)`
    Upper,
}

/// `P(X <= k)` or `P(X >= k)` for `X ~ Binomial(n, x)`, summed in log space.
pub fn exact_binomial_tail(n: usize, x: f64, k: usize, side: TailSide) -> Result<f64> {
    if n > 10_000 {
        return Err(precondition(format!("n = {n} exceeds 10^4")));
    }
    if k > n {
        return Err(precondition(format!("k = {k} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(precondition(format!("x = {x} is not a probability")));
    }
    let range = match side {
        TailSide::Lower => 0..=k,
        TailSide::Upper => k..=n,
    };
    // all mass sits on X = 0 or X = n
    if x == 0.0 || x == 1.0 {
        let atom = if x == 0.0 { 0 } else { n };
        return Ok(if range.contains(&atom) { 1.0 } else { 0.0 });
    }
    let lc = ln_binomial_row(n);
    let (lx, ly) = (x.ln(), (-x).ln_1p());
    let logs: Vec<f64> = range.map(|j| lc[j] + j as f64 * lx + (n - j) as f64 * ly).collect();
    let lmax = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: CompensatedSum = logs.iter().map(|l| (l - lmax).exp()).collect();
    Ok((lmax + s.value().ln()).exp().min(1.0))
}

/// Tuning of the minimax fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// Exponent of the multiplicative weight update.
    pub damping: f64,
    pub max_iterations: usize,
    /// Lawson stops once `(max|r| - lower)/max|r|` drops below this.
    pub lawson_gap: f64,
    /// Finish with the exchange step (unbounded fits only).
    pub exchange: bool,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iterations: 500,
            lawson_gap: 0.05,
            exchange: true,
        }
    }
}

/// Estimated best approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub degree: usize,
    pub bounded: bool,
    /// Max error of the fit on a 4x finer grid.
    pub best_error: f64,
    /// The fit, with coefficients rounded to binary64. When `best_error` is
    /// below about `1e-15`, `best_error` refers to the unrounded fit.
    pub polynomial: Polynomial,
    pub iterations: usize,
    pub converged: bool,
    /// `(fine-grid error - grid objective) / grid objective`.
    pub duality_gap_estimate: f64,
    /// Lower bound on the minimax error over the grid points.
    pub lower_bound: f64,
    pub hull_norm: f64,
    pub grid_points: usize,
}

impl OracleResult {
    /// `degree,best_error,converged`.
    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.degree, crate::poly::fmt_f64(self.best_error), self.converged)
    }
}

/// Endpoint-clustered grid with `mult (degree + 1)` points per segment.
pub fn oracle_grid(degree: usize, mult: usize) -> GridSpec {
    GridSpec::new((mult * (degree + 1)).max(2), Distribution::EndpointClustered, false).expect("at least two points")
}

trait Real:
    Clone
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    /// Refinement steps after elimination.
    const REFINE: usize = 2;

    fn of(x: f64) -> Self;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;
    fn quot(&self, d: &Self) -> Self;

    fn clenshaw(c: &[Self], t: f64) -> Self {
        clenshaw_generic(c, t)
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn quot(&self, d: &Self) -> Self {
        self / d
    }
}

impl Real for TwoFloat {
    fn of(x: f64) -> Self {
        TwoFloat::from(x)
    }
    fn abs(&self) -> Self {
        TwoFloat::abs(self)
    }
    fn to_f64(&self) -> f64 {
        (*self).into()
    }
    // the crate's quotient is only binary64-accurate; one correction step restores it
    fn quot(&self, d: &Self) -> Self {
        let q = *self / *d;
        q + (*self - q * *d) / *d
    }
}

/// Bits of the multiprecision stage.
const MP_BITS: u32 = 256;

#[derive(Debug, Clone, PartialEq, PartialOrd)]
struct Mp(rug::Float);

impl Add for Mp {
    type Output = Mp;
    fn add(self, o: Mp) -> Mp {
        Mp(self.0 + o.0)
    }
}

impl Sub for Mp {
    type Output = Mp;
    fn sub(self, o: Mp) -> Mp {
        Mp(self.0 - o.0)
    }
}

impl Mul for Mp {
    type Output = Mp;
    fn mul(self, o: Mp) -> Mp {
        Mp(self.0 * o.0)
    }
}

impl Neg for Mp {
    type Output = Mp;
    fn neg(self) -> Mp {
        Mp(-self.0)
    }
}

impl Real for Mp {
    const REFINE: usize = 0;

    fn of(x: f64) -> Self {
        Mp(rug::Float::with_val(MP_BITS, x))
    }
    fn abs(&self) -> Self {
        Mp(self.0.clone().abs())
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }
    fn quot(&self, d: &Self) -> Self {
        Mp(rug::Float::with_val(MP_BITS, &self.0 / &d.0))
    }

    fn clenshaw(c: &[Self], t: f64) -> Self {
        let two_t = rug::Float::with_val(MP_BITS, 2.0 * t);
        let mut b1 = rug::Float::new(MP_BITS);
        let mut b2 = rug::Float::new(MP_BITS);
        for ck in c.iter().skip(1).rev() {
            // b2 <- 2t b1 - b2 + c_k, then rotate
            b2 = -b2;
            b2 += &two_t * &b1;
            b2 += &ck.0;
            std::mem::swap(&mut b1, &mut b2);
        }
        let t = rug::Float::with_val(MP_BITS, t);
        let mut out = -b2;
        out += &b1 * &t;
        out += &c[0].0;
        Mp(out)
    }
}

fn clenshaw<R: Real>(c: &[R], t: f64) -> R {
    R::clenshaw(c, t)
}

fn clenshaw_generic<R: Real>(c: &[R], t: f64) -> R {
    let t = R::of(t);
    let two_t = t.clone() + t.clone();
    let mut b1 = R::of(0.0);
    let mut b2 = R::of(0.0);
    for ck in c.iter().skip(1).rev() {
        let b0 = ck.clone() + two_t.clone() * b1.clone() - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0].clone() + t * b1 - b2
}

fn chebyshev_row<R: Real>(t: f64, degree: usize) -> Vec<R> {
    let t = R::of(t);
    let two_t = t.clone() + t.clone();
    let mut row = Vec::with_capacity(degree + 1);
    row.push(R::of(1.0));
    if degree >= 1 {
        row.push(t);
    }
    for k in 2..=degree {
        let next = two_t.clone() * row[k - 1].clone() - row[k - 2].clone();
        row.push(next);
    }
    row
}

/// Gaussian elimination with two steps of iterative refinement.
fn solve_dense<R: Real>(a: Vec<Vec<R>>, b: Vec<R>) -> Option<Vec<R>> {
    if R::REFINE == 0 {
        return eliminate(a, b);
    }
    let mut x = eliminate(a.clone(), b.clone())?;
    for _ in 0..R::REFINE {
        let r: Vec<R> = a
            .iter()
            .zip(&b)
            .map(|(row, bi)| {
                row.iter()
                    .zip(&x)
                    .fold(bi.clone(), |acc, (aij, xj)| acc - aij.clone() * xj.clone())
            })
            .collect();
        let dx = eliminate(a.clone(), r)?;
        x.iter_mut().zip(dx).for_each(|(xi, d)| *xi = xi.clone() + d);
    }
    Some(x)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn eliminate<R: Real>(mut a: Vec<Vec<R>>, mut b: Vec<R>) -> Option<Vec<R>> {
    let n = b.len();
    let zero = R::of(0.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))?;
        if !(a[piv][col].abs() > zero) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (head, tail) = a.split_at_mut(col + 1);
        let pivot_row = &head[col];
        for (off, row) in tail.iter_mut().enumerate() {
            let factor = row[col].quot(&pivot_row[col]);
            if factor.abs() > zero {
                for k in col..n {
                    row[k] = row[k].clone() - factor.clone() * pivot_row[k].clone();
                }
                let i = col + 1 + off;
                b[i] = b[i].clone() - factor * b[col].clone();
            }
        }
    }
    let mut x = vec![zero; n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = acc - a[row][k].clone() * x[k].clone();
        }
        x[row] = acc.quot(&a[row][row]);
    }
    Some(x)
}

/// Grid points of all segments, sorted and deduplicated, with targets.
struct Discrete {
    ts: Vec<f64>,
    ys: Vec<f64>,
}

impl Discrete {
    fn new(f: &StepFunction, grid: &GridSpec, scale: f64) -> Self {
        let hull = f.system().hull();
        let mut pts: Vec<(f64, f64)> = f
            .system()
            .intervals()
            .iter()
            .zip(f.values())
            .flat_map(|(iv, y)| grid.points(*iv).into_iter().map(move |x| (x, y / scale)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        Self {
            ts: pts.iter().map(|p| to_t(hull, p.0)).collect(),
            ys: pts.iter().map(|p| p.1).collect(),
        }
    }

    fn len(&self) -> usize {
        self.ts.len()
    }

    fn residuals<R: Real>(&self, c: &[R]) -> Vec<R> {
        self.ts
            .par_iter()
            .zip(&self.ys)
            .map(|(&t, &y)| clenshaw(c, t) - R::of(y))
            .collect()
    }
}

fn to_t(hull: Interval, x: f64) -> f64 {
    if hull.len() == 0.0 {
        0.0
    } else {
        ((2.0 * x - hull.lo() - hull.hi()) / hull.len()).clamp(-1.0, 1.0)
    }
}

fn max_abs<R: Real>(r: &[R]) -> (f64, usize) {
    r.iter()
        .enumerate()
        .map(|(j, v)| (v.abs().to_f64(), j))
        .fold((0.0, 0), |acc, (v, j)| if v > acc.0 { (v, j) } else { acc })
}

struct LawsonOutcome {
    coeffs: Vec<f64>,
    error: f64,
    lower: f64,
    residuals: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Weighted least squares through column-scaled Householder QR.
fn weighted_ls(a: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> Option<Vec<f64>> {
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut aw = a.clone();
    for (mut row, s) in aw.row_iter_mut().zip(&sw) {
        row *= *s;
    }
    let norms: Vec<f64> = aw.column_iter().map(|c| c.norm()).collect();
    for (mut col, nrm) in aw.column_iter_mut().zip(&norms) {
        if *nrm > 0.0 {
            col /= *nrm;
        }
    }
    let mut rhs = DVector::from_iterator(y.len(), y.iter().zip(&sw).map(|(v, s)| v * s));
    let cols = aw.ncols();
    let qr = aw.qr();
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let top = rhs.rows(0, cols).into_owned();
    let sol = r.solve_upper_triangular(&top)?;
    Some(
        sol.iter()
            .zip(&norms)
            .map(|(v, n)| if *n > 0.0 { v / n } else { 0.0 })
            .collect(),
    )
}

fn basis_matrix(ts: &[f64], degree: usize) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = ts.iter().map(|&t| chebyshev_row(t, degree)).collect();
    DMatrix::from_fn(ts.len(), degree + 1, |i, k| rows[i][k])
}

/// Lawson iteration for the unconstrained discrete minimax.
fn lawson(d: &Discrete, degree: usize, params: &OracleParams) -> LawsonOutcome {
    let a = basis_matrix(&d.ts, degree);
    let y = DVector::from_column_slice(&d.ys);
    let m = d.len();
    let mut w = vec![1.0 / m as f64; m];
    let mut best: Option<LawsonOutcome> = None;
    let mut lower: f64 = 0.0;
    let mut prev_err = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..params.max_iterations {
        iterations = it + 1;
        let Some(c) = weighted_ls(&a, &y, &w) else { break };
        let r: Vec<f64> = d.residuals(&c);
        let (err, _) = max_abs(&r);
        let ls: CompensatedSum = w.iter().zip(&r).map(|(wi, ri)| wi * ri * ri).collect();
        lower = lower.max(ls.value().max(0.0).sqrt());
        if best.as_ref().is_none_or(|b| err < b.error) {
            best = Some(LawsonOutcome {
                coeffs: c,
                error: err,
                lower,
                residuals: r.clone(),
                iterations,
                converged: false,
            });
        }
        let best_err = best.as_ref().map_or(err, |b| b.error);
        if best_err == 0.0 || best_err - lower <= params.lawson_gap * best_err {
            converged = true;
            break;
        }
        if (prev_err - err).abs() <= 1e-9 * err {
            converged = true;
            break;
        }
        prev_err = err;
        let mut total = CompensatedSum::new();
        for (wi, ri) in w.iter_mut().zip(&r) {
            *wi *= ri.abs().powf(params.damping);
            total.add(*wi);
        }
        let total = total.value();
        if !(total > 0.0) {
            break;
        }
        w.iter_mut().for_each(|v| *v /= total);
    }
    let mut out = best.unwrap_or(LawsonOutcome {
        coeffs: vec![0.0; degree + 1],
        error: d.ys.iter().fold(0.0, |a, y| a.max(y.abs())),
        lower: 0.0,
        residuals: d.ys.iter().map(|y| -y).collect(),
        iterations,
        converged: false,
    });
    out.lower = lower;
    out.iterations = iterations;
    out.converged = converged;
    out
}

/// `count` indices of alternating residual sign, taken from the extremes of
/// each same-sign run; topped up with evenly spread indices.
fn initial_reference(r: &[f64], count: usize) -> Vec<usize> {
    let mut refs: Vec<usize> = Vec::new();
    for (j, v) in r.iter().enumerate() {
        match refs.last() {
            Some(&last) if (r[last] >= 0.0) == (*v >= 0.0) => {
                if v.abs() > r[last].abs() {
                    *refs.last_mut().expect("nonempty") = j;
                }
            }
            _ => refs.push(j),
        }
    }
    while refs.len() > count {
        let ends = (r[refs[0]].abs(), r[refs[refs.len() - 1]].abs());
        if refs.len() == count + 1 {
            if ends.0 <= ends.1 {
                refs.remove(0);
            } else {
                refs.pop();
            }
            continue;
        }
        let (pos, _) = refs
            .iter()
            .enumerate()
            .min_by(|a, b| r[*a.1].abs().total_cmp(&r[*b.1].abs()))
            .expect("nonempty");
        if pos == 0 || pos == refs.len() - 1 {
            refs.remove(pos);
        } else {
            // dropping an interior point and its weaker neighbour keeps alternation
            let weaker = if r[refs[pos - 1]].abs() <= r[refs[pos + 1]].abs() { pos - 1 } else { pos + 1 };
            refs.remove(pos.max(weaker));
            refs.remove(pos.min(weaker));
        }
    }
    let m = r.len();
    let mut k = 0;
    while refs.len() < count {
        let j = (k * (m - 1)) / (count.max(2) - 1);
        if !refs.contains(&j) {
            refs.push(j);
        } else if let Some(free) = (0..m).find(|i| !refs.contains(i)) {
            refs.push(free);
        }
        k += 1;
        refs.sort_unstable();
    }
    refs.sort_unstable();
    refs
}

/// `count` approximate Fekete points of the grid: the pivots of a
/// column-pivoted QR of the transposed Chebyshev-Vandermonde matrix.
fn fekete_reference(d: &Discrete, count: usize) -> Vec<usize> {
    let m = d.len();
    let rows: Vec<Vec<f64>> = d.ts.iter().map(|&t| chebyshev_row(t, count - 1)).collect();
    let vt = DMatrix::from_fn(count, m, |k, j| rows[j][k]);
    let qr = vt.col_piv_qr();
    let mut order = DMatrix::from_fn(1, m, |_, j| j as f64);
    qr.p().permute_columns(&mut order);
    let mut refs: Vec<usize> = order.iter().take(count).map(|v| *v as usize).collect();
    refs.sort_unstable();
    refs
}

/// `min |r|` over the reference when the residual signs alternate there
/// (a lower bound on the discrete minimax), else 0.
fn alternation_bound<R: Real>(r: &[R], reference: &[usize]) -> f64 {
    let vals: Vec<f64> = reference.iter().map(|&j| r[j].to_f64()).collect();
    if vals.windows(2).all(|w| (w[0] > 0.0 && w[1] < 0.0) || (w[0] < 0.0 && w[1] > 0.0)) {
        vals.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))
    } else {
        0.0
    }
}

struct ExchangeOutcome<R> {
    coeffs: Vec<R>,
    error: f64,
    level: f64,
    reference: Vec<usize>,
    iterations: usize,
    converged: bool,
}

/// Single-point exchange on the discrete set.
fn exchange<R: Real>(d: &Discrete, degree: usize, mut reference: Vec<usize>, max_iterations: usize) -> Option<ExchangeOutcome<R>> {
    let n = degree + 2;
    let stall = 3 * n + 20;
    let mut best: Option<ExchangeOutcome<R>> = None;
    let mut since_best = 0;
    let mut iterations = 0;
    for it in 0..max_iterations {
        iterations = it + 1;
        let rows: Vec<Vec<R>> = reference
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let mut row: Vec<R> = chebyshev_row(d.ts[j], degree);
                row.push(R::of(if i % 2 == 0 { 1.0 } else { -1.0 }));
                row
            })
            .collect();
        let rhs: Vec<R> = reference.iter().map(|&j| R::of(d.ys[j])).collect();
        let sol = solve_dense(rows, rhs)?;
        let coeffs = sol[..n - 1].to_vec();
        let r = d.residuals(&coeffs);
        let level = alternation_bound(&r, &reference);
        let (err, jstar) = max_abs(&r);
        let improved = best.as_ref().is_none_or(|b| err < b.error);
        if improved {
            best = Some(ExchangeOutcome {
                coeffs,
                error: err,
                level,
                reference: reference.clone(),
                iterations,
                converged: false,
            });
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > stall {
                break;
            }
        }
        let b = best.as_mut().expect("set above");
        b.level = b.level.max(level);
        if err <= b.level * (1.0 + 1e-10) || reference.contains(&jstar) {
            b.converged = true;
            break;
        }
        let rf: Vec<f64> = r.iter().map(|v| v.to_f64()).collect();
        let h = sol[n - 1].abs().to_f64();
        let cand = initial_reference(&rf, n);
        let alternates = cand
            .windows(2)
            .all(|w| (rf[w[0]] > 0.0 && rf[w[1]] < 0.0) || (rf[w[0]] < 0.0 && rf[w[1]] > 0.0));
        if cand.len() == n && alternates && cand.contains(&jstar) && cand.iter().all(|&j| rf[j].abs() >= h) {
            reference = cand;
            continue;
        }
        let sign = |v: &R| v.to_f64() >= 0.0;
        let s_new = sign(&r[jstar]);
        let pos = reference.partition_point(|&j| j < jstar);
        if pos == 0 {
            if sign(&r[reference[0]]) == s_new {
                reference[0] = jstar;
            } else {
                reference.pop();
                reference.insert(0, jstar);
            }
        } else if pos == reference.len() {
            if sign(&r[reference[pos - 1]]) == s_new {
                reference[pos - 1] = jstar;
            } else {
                reference.remove(0);
                reference.push(jstar);
            }
        } else if sign(&r[reference[pos - 1]]) == s_new {
            reference[pos - 1] = jstar;
        } else {
            reference[pos] = jstar;
        }
    }
    best.map(|mut b| {
        b.iterations = iterations;
        b
    })
}

/// Below this grid error the exchange is repeated in double-double.
const EXTENDED_THRESHOLD: f64 = 1e-11;
/// Below this grid error (or without convergence) it is repeated in `MP_BITS` precision.
const MULTI_THRESHOLD: f64 = 1e-26;
/// Levels below these are rounding noise in binary64 and double-double.
const DOUBLE_FLOOR: f64 = 1e-13;
const EXTENDED_FLOOR: f64 = 1e-28;

fn floored(level: f64, floor: f64) -> f64 {
    if level > floor {
        level
    } else {
        0.0
    }
}

enum Coeffs {
    Double(Vec<f64>),
    Extended(Vec<TwoFloat>),
    Multi(Vec<Mp>),
}

impl Coeffs {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Coeffs::Double(c) => clenshaw(c, t),
            Coeffs::Extended(c) => clenshaw(c, t).to_f64(),
            Coeffs::Multi(c) => clenshaw(c, t).to_f64(),
        }
    }

    fn residual(&self, t: f64, y: f64) -> f64 {
        match self {
            Coeffs::Double(c) => clenshaw(c, t) - y,
            Coeffs::Extended(c) => (clenshaw(c, t) - TwoFloat::from(y)).to_f64(),
            Coeffs::Multi(c) => (clenshaw(c, t) - Mp::of(y)).to_f64(),
        }
    }

    fn rounded(&self) -> Vec<f64> {
        match self {
            Coeffs::Double(c) => c.clone(),
            Coeffs::Extended(c) => c.iter().map(|v| v.to_f64()).collect(),
            Coeffs::Multi(c) => c.iter().map(|v| v.to_f64()).collect(),
        }
    }
}

struct Fit {
    coeffs: Coeffs,
    grid_error: f64,
    lower: f64,
    iterations: usize,
    converged: bool,
    scale_down: f64,
}

/// Max error and hull norm of `alpha * fit` on the finer grid, in the
/// normalized value units.
fn verify(f: &StepFunction, fit: &Fit, fine: &GridSpec, scale: f64, alpha: f64) -> (f64, f64) {
    let hull = f.system().hull();
    let err = f
        .system()
        .intervals()
        .iter()
        .zip(f.values())
        .map(|(iv, y)| {
            let y = y / scale;
            max_abs_on(
                |x| {
                    let t = to_t(hull, x);
                    if alpha == 1.0 {
                        fit.coeffs.residual(t, y)
                    } else {
                        alpha * fit.coeffs.eval(t) - y
                    }
                },
                *iv,
                fine,
            )
            .0
        })
        .fold(0.0, f64::max);
    let hgrid = hull_grid(fine, f.system().len());
    let norm = if hull.is_point() {
        alpha * fit.coeffs.eval(0.0).abs()
    } else {
        alpha * max_abs_on(|x| fit.coeffs.eval(to_t(hull, x)), hull, &hgrid).0
    };
    (err, norm)
}

fn unbounded_fit(d: &Discrete, degree: usize, params: &OracleParams) -> Fit {
    let law = lawson(d, degree, params);
    let mut fit = Fit {
        coeffs: Coeffs::Double(law.coeffs.clone()),
        grid_error: law.error,
        lower: floored(law.lower, DOUBLE_FLOOR),
        iterations: law.iterations,
        converged: law.converged && !params.exchange,
        scale_down: 1.0,
    };
    if !params.exchange || law.error == 0.0 {
        return fit;
    }
    let cap = 50 * (degree + 2) + 200;
    let count = degree + 2;
    // at the rounding floor the residuals carry no sign information and a
    // binary64 exchange cannot improve on Lawson
    let mut start = fekete_reference(d, count);
    if law.error > DOUBLE_FLOOR {
        start = initial_reference(&law.residuals, count);
        if let Some(ex) = exchange::<f64>(d, degree, start.clone(), cap) {
            fit.iterations += ex.iterations;
            if ex.error <= fit.grid_error {
                fit.coeffs = Coeffs::Double(ex.coeffs);
                fit.grid_error = ex.error;
                fit.converged = ex.converged;
            }
            fit.lower = fit.lower.max(floored(ex.level, DOUBLE_FLOOR));
            start = if ex.converged && ex.level > DOUBLE_FLOOR {
                ex.reference
            } else {
                fekete_reference(d, count)
            };
        }
    }
    if fit.grid_error >= EXTENDED_THRESHOLD {
        return fit;
    }
    if let Some(dd) = exchange::<TwoFloat>(d, degree, start.clone(), cap) {
        fit.iterations += dd.iterations;
        if dd.error <= fit.grid_error {
            fit.coeffs = Coeffs::Extended(dd.coeffs);
            fit.grid_error = dd.error;
            fit.converged = dd.converged;
        }
        fit.lower = fit.lower.max(floored(dd.level, EXTENDED_FLOOR));
        if dd.converged && dd.level > EXTENDED_FLOOR {
            start = dd.reference;
        }
    }
    if fit.grid_error >= MULTI_THRESHOLD && fit.converged {
        return fit;
    }
    if let Some(mp) = exchange::<Mp>(d, degree, start, cap) {
        fit.iterations += mp.iterations;
        if mp.error <= fit.grid_error {
            fit.coeffs = Coeffs::Multi(mp.coeffs);
            fit.grid_error = mp.error;
            fit.converged = mp.converged;
        }
        fit.lower = fit.lower.max(mp.level);
    }
    fit
}

/// Lawson iteration with hull penalty rows keeping `|P| <= 1` (values are normalized).
fn bounded_fit(d: &Discrete, hull_ts: &[f64], degree: usize, params: &OracleParams) -> Fit {
    let m = d.len();
    let all_ts: Vec<f64> = d.ts.iter().chain(hull_ts).copied().collect();
    let a = basis_matrix(&all_ts, degree);
    let a_hull = basis_matrix(hull_ts, degree);
    let mut targets: Vec<f64> = d.ys.iter().copied().chain(hull_ts.iter().map(|_| 0.0)).collect();
    let mut w: Vec<f64> = (0..all_ts.len()).map(|i| if i < m { 1.0 / m as f64 } else { 0.0 }).collect();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut prev_err = f64::INFINITY;
    for it in 0..params.max_iterations {
        iterations = it + 1;
        let Some(c) = weighted_ls(&a, &DVector::from_column_slice(&targets), &w) else {
            break;
        };
        let r = d.residuals(&c);
        let ph = &a_hull * DVector::from_column_slice(&c);
        let hull_max = ph.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let alpha = if hull_max > 1.0 { 1.0 / hull_max } else { 1.0 };
        let feas_err = if alpha == 1.0 {
            max_abs(&r).0
        } else {
            d.ts.iter()
                .zip(&d.ys)
                .map(|(&t, &y)| (alpha * clenshaw(&c, t) - y).abs())
                .fold(0.0, f64::max)
        };
        if best.as_ref().is_none_or(|b| feas_err < b.0) {
            best = Some((feas_err, c.clone(), alpha));
        }
        if hull_max <= 1.0 && (prev_err - feas_err).abs() <= 1e-9 * feas_err {
            converged = true;
            break;
        }
        prev_err = feas_err;
        let mean_w = 1.0 / m as f64;
        for (h, v) in ph.iter().enumerate() {
            if v.abs() > 1.0 {
                let i = m + h;
                w[i] = if w[i] == 0.0 { mean_w } else { 2.0 * w[i] };
                targets[i] = v.signum();
            }
        }
        let mut total = CompensatedSum::new();
        for (wi, ri) in w[..m].iter_mut().zip(&r) {
            *wi *= ri.abs().powf(params.damping);
            total.add(*wi);
        }
        let total = total.value();
        if !(total > 0.0) {
            break;
        }
        w[..m].iter_mut().for_each(|v| *v /= total);
    }
    let (err, c, alpha) = best.unwrap_or((1.0, vec![0.0; degree + 1], 1.0));
    Fit {
        coeffs: Coeffs::Double(c),
        grid_error: err,
        lower: 0.0,
        iterations,
        converged,
        scale_down: alpha,
    }
}

/// Estimates `E_n` (or `E_n^*` when `bounded`) of `f` on its segments.
pub fn minimax_fit(f: &StepFunction, degree: usize, bounded: bool, grid: &GridSpec) -> Result<OracleResult> {
    minimax_fit_with(f, degree, bounded, grid, &OracleParams::default())
}

pub fn minimax_fit_with(
    f: &StepFunction,
    degree: usize,
    bounded: bool,
    grid: &GridSpec,
    params: &OracleParams,
) -> Result<OracleResult> {
    if degree > ORACLE_DEGREE_CAP {
        return Err(Error::DegreeOverflow {
            degree,
            cap: ORACLE_DEGREE_CAP,
        });
    }
    if grid.points_per_interval < MIN_GRID_MULT * (degree + 1) {
        return Err(precondition(format!(
            "oracle grid needs at least {} points per segment at degree {degree}, got {}",
            MIN_GRID_MULT * (degree + 1),
            grid.points_per_interval
        )));
    }
    let hull = f.system().hull();
    let domain = if hull.is_point() {
        Interval::new(hull.lo() - 1.0, hull.hi() + 1.0)?
    } else {
        hull
    };
    let scale = f.sup_norm();
    let y0 = f.values()[0];
    if scale == 0.0 || f.values().iter().all(|v| *v == y0) {
        return Ok(OracleResult {
            degree,
            bounded,
            best_error: 0.0,
            polynomial: Polynomial::constant(y0),
            iterations: 0,
            converged: true,
            duality_gap_estimate: 0.0,
            lower_bound: 0.0,
            hull_norm: y0.abs(),
            grid_points: 0,
        });
    }
    let d = Discrete::new(f, grid, scale);
    let fine = GridSpec {
        points_per_interval: grid.points_per_interval * 4,
        refine: true,
        ..*grid
    };
    let fit_degree = degree.min(d.len().saturating_sub(1));
    let unbounded = if fit_degree + 1 >= d.len() {
        interpolate(&d, fit_degree)
    } else {
        unbounded_fit(&d, fit_degree, params)
    };
    let (mut err, mut norm) = verify(f, &unbounded, &fine, scale, 1.0);
    let mut fit = unbounded;
    if bounded && norm > 1.0 + 1e-12 {
        let hgrid = hull_grid(grid, f.system().len());
        let hull_ts: Vec<f64> = hgrid.points(hull).iter().map(|&x| to_t(hull, x)).collect();
        let lower = fit.lower;
        let mut b = bounded_fit(&d, &hull_ts, fit_degree, params);
        b.lower = lower;
        let (_, fine_norm) = verify(f, &b, &fine, scale, b.scale_down);
        if fine_norm > 1.0 {
            b.scale_down /= fine_norm;
        }
        (err, norm) = verify(f, &b, &fine, scale, b.scale_down);
        fit = b;
    }
    let coeffs: Vec<f64> = fit.coeffs.rounded().iter().map(|c| c * scale * fit.scale_down).collect();
    let objective = fit.grid_error;
    Ok(OracleResult {
        degree,
        bounded,
        best_error: err * scale,
        polynomial: Polynomial::chebyshev(coeffs, domain)?,
        iterations: fit.iterations,
        converged: fit.converged,
        duality_gap_estimate: if objective > 0.0 { (err - objective) / objective } else { 0.0 },
        lower_bound: fit.lower * scale,
        hull_norm: norm * scale,
        grid_points: d.len(),
    })
}

fn interpolate(d: &Discrete, degree: usize) -> Fit {
    let rows: Vec<Vec<TwoFloat>> = d.ts[..degree + 1]
        .iter()
        .map(|&t| chebyshev_row(t, degree))
        .collect();
    let rhs = d.ys[..degree + 1].iter().map(|&y| TwoFloat::from(y)).collect();
    let c = solve_dense(rows, rhs).unwrap_or_else(|| vec![TwoFloat::from(0.0); degree + 1]);
    Fit {
        coeffs: Coeffs::Extended(c),
        grid_error: 0.0,
        lower: 0.0,
        iterations: 1,
        converged: true,
        scale_down: 1.0,
    }
}

/// Fits for several degrees on one grid; a worse result at a higher degree is
/// replaced by the lower-degree fit, which is also admissible there.
pub fn minimax_sweep(f: &StepFunction, degrees: &[usize], bounded: bool, grid: &GridSpec) -> Result<Vec<OracleResult>> {
    let mut sorted: Vec<usize> = degrees.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let fits: Vec<OracleResult> = sorted
        .par_iter()
        .map(|&n| minimax_fit(f, n, bounded, grid))
        .collect::<Result<_>>()?;
    let mut out: Vec<OracleResult> = Vec::with_capacity(fits.len());
    for mut r in fits {
        if let Some(prev) = out.last() {
            if prev.best_error < r.best_error {
                let degree = r.degree;
                r = prev.clone();
                r.degree = degree;
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Oracle, measured and certified errors of one construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `None` when the degree exceeds the oracle cap.
    pub oracle: Option<f64>,
    pub measured: ErrorReport,
    pub certificate: f64,
    pub holds: bool,
}

impl SandwichReport {
    pub fn check(&self) -> Result<()> {
        if self.holds {
            Ok(())
        } else {
            Err(Error::SandwichViolation {
                oracle: self.oracle.unwrap_or(f64::NAN),
                measured: self.measured.global_error,
                certificate: self.certificate,
            })
        }
    }
}

/// Checks `oracle <= measured <= certificate + 1e-12` for a construction.
pub fn sandwich(f: &StepFunction, p: &Polynomial, cert: &BoundCertificate) -> Result<SandwichReport> {
    let degree = p.degree();
    let measured = sup_error(p, f, &GridSpec::for_degree(degree));
    let oracle = if degree <= ORACLE_DEGREE_CAP {
        Some(minimax_fit(f, degree, false, &oracle_grid(degree, MIN_GRID_MULT))?.best_error)
    } else {
        None
    };
    let m = measured.global_error;
    let holds = oracle.is_none_or(|o| o <= m) && m <= cert.value + 1e-12;
    Ok(SandwichReport {
        oracle,
        measured,
        certificate: cert.value,
        holds,
    })
}
