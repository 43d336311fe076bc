//! Confluent Newton interpolation and the polynomial partition of unity.
//!
//! For centers `z_1, ..., z_s` with pairwise distances at least 1 and a
//! multiplicity `n`, `P_i` is the Hermite interpolant of the function equal to
//! 1 near `z_i` and 0 near every other center, with all derivatives up to
//! order `n-1` vanishing. Then `sum_i P_i == 1`, and `P_i` is at most
//! `(2 delta)^n (2D + 1)^{n(s-1)}` on the `delta`-disks around the other centers.
//! Combining `P = sum_i w_i P_i` gives the small-`delta` approximants.
//!
//! To compute `P_i`, the centers are ordered with `z_i` last. The first
//! `n(s-1)` divided differences then vanish and the Newton form evaluates as a
//! pure product times a short Taylor polynomial. The real forms are sampled in
//! double-double before the Chebyshev conversion.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_complex::Complex64;
use twofloat::TwoFloat;

use crate::certificate::{BoundCertificate, Formula};
use crate::error::{precondition, Error, Result};
use crate::intervals::{AffineMap, Interval, StepFunction, ValueSet};
use crate::poly::Polynomial;

/// Field the Newton machinery runs over (real for the public API, complex internally).
pub trait Scalar:
    Copy + Debug + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + From<f64>
{
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Double-double reals, used to sample the partition polynomials before the
/// binary64 basis conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd(TwoFloat);

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd(TwoFloat::from(x))
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        Dd(self.0 + o.0)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        Dd(self.0 - o.0)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        Dd(self.0 * o.0)
    }
}

impl Div for Dd {
    type Output = Dd;
    // the crate's quotient is only binary64-accurate; one correction step restores it
    fn div(self, o: Dd) -> Dd {
        let q = self.0 / o.0;
        Dd(q + (self.0 - q * o.0) / o.0)
    }
}

impl Scalar for Dd {
    fn modulus(self) -> f64 {
        f64::from(self.0).abs()
    }
}

/// Real partition members in double-double, evaluated to binary64.
struct RealForms(Vec<NewtonForm<Dd>>);

impl RealForms {
    fn new(centers: &[f64], n: usize) -> Result<Self> {
        let centers: Vec<Dd> = centers.iter().map(|&c| Dd::from(c)).collect();
        Ok(Self(partition_forms(&centers, n)?))
    }

    fn eval(&self, i: usize, x: f64) -> f64 {
        self.0[i].eval(Dd::from(x)).0.into()
    }

    fn combine(&self, w: &[f64], x: f64) -> f64 {
        let x = Dd::from(x);
        let acc = self.0.iter().zip(w).fold(Dd::from(0.0), |acc, (f, &wi)| acc + Dd::from(wi) * f.eval(x));
        acc.0.into()
    }
}

/// How repeated nodes are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confluency {
    /// All nodes must be distinct.
    Distinct,
    /// The function is constant near every node: all derivatives vanish.
    LocallyConstant,
}

/// Full triangular table of divided differences; `entry(j, k) = f[ζ_j, ..., ζ_{j+k}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DividedDifferenceTable<T> {
    nodes: Vec<T>,
    table: Vec<Vec<T>>,
}

impl<T: Scalar> DividedDifferenceTable<T> {
    /// Builds the table. Equal nodes must be contiguous and carry equal values.
    pub fn new(nodes: Vec<T>, values: &[T], convention: Confluency) -> Result<Self> {
        if nodes.len() != values.len() || nodes.is_empty() {
            return Err(Error::ValueCount {
                expected: nodes.len(),
                got: values.len(),
            });
        }
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                if nodes[i] != nodes[j] {
                    continue;
                }
                if convention == Confluency::Distinct {
                    return Err(Error::UnsupportedConfluency {
                        node: format!("{:?}", nodes[i]),
                    });
                }
                if nodes[i + 1..j].iter().any(|z| *z != nodes[i]) {
                    return Err(precondition(format!("repeated node {:?} is not contiguous", nodes[i])));
                }
                if values[i] != values[j] {
                    return Err(precondition(format!(
                        "locally constant function takes two values at node {:?}",
                        nodes[i]
                    )));
                }
            }
        }
        let zero = T::from(0.0);
        let mut table = vec![values.to_vec()];
        for k in 1..nodes.len() {
            let prev = &table[k - 1];
            let row = (0..nodes.len() - k)
                .map(|j| {
                    let den = nodes[j + k] - nodes[j];
                    if den == zero {
                        // f^{(k)}/k! of a locally constant function
                        zero
                    } else {
                        (prev[j + 1] - prev[j]) / den
                    }
                })
                .collect();
            table.push(row);
        }
        Ok(Self { nodes, table })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// `f[ζ_j, ..., ζ_{j+k}]`.
    pub fn entry(&self, j: usize, k: usize) -> T {
        self.table[k][j]
    }

    /// All entries, row `k` holding differences of order `k`.
    pub fn rows(&self) -> &[Vec<T>] {
        &self.table
    }

    /// Newton form from the top edge `f[ζ_1], f[ζ_1, ζ_2], ...`.
    pub fn newton_form(&self) -> NewtonForm<T> {
        NewtonForm {
            nodes: self.nodes.clone(),
            coeffs: self.table.iter().map(|row| row[0]).collect(),
        }
    }
}

/// `P(z) = c_0 + c_1 (z - ζ_1) + ... + c_{N-1} (z - ζ_1)...(z - ζ_{N-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonForm<T> {
    nodes: Vec<T>,
    coeffs: Vec<T>,
}

impl<T: Scalar> NewtonForm<T> {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Nested multiplication from the highest term down.
    pub fn eval(&self, z: T) -> T {
        let n = self.coeffs.len();
        let mut acc = self.coeffs[n - 1];
        for k in (0..n - 1).rev() {
            acc = self.coeffs[k] + (z - self.nodes[k]) * acc;
        }
        acc
    }
}

/// Centers with pairwise distance at least 1 and a common multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSystem {
    centers: Vec<f64>,
    multiplicity: usize,
}

/// Slack on the unit-separation check, absorbing rescaling round-off.
const SEPARATION_SLACK: f64 = 1e-9;

impl NodeSystem {
    pub fn new(centers: Vec<f64>, multiplicity: usize) -> Result<Self> {
        check_nodes(&centers, multiplicity)?;
        Ok(Self { centers, multiplicity })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    pub fn s(&self) -> usize {
        self.centers.len()
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.centers)
    }

    /// `A = 2 (1 + 2 diam)^{s-1}`.
    pub fn a_const(&self) -> f64 {
        a_const(&self.centers)
    }

    /// Degree `n s - 1` of every partition polynomial.
    pub fn degree(&self) -> usize {
        self.multiplicity * self.s() - 1
    }

    /// Reference interval used for the Chebyshev conversion: the hull of the
    /// centers widened by `1/A`, the largest radius with a nontrivial certificate.
    pub fn reference(&self) -> Interval {
        let lo = self.centers.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let margin = 1.0 / self.a_const();
        Interval::new(lo - margin, hi + margin).expect("finite centers")
    }
}

fn check_nodes<T: Scalar>(centers: &[T], multiplicity: usize) -> Result<()> {
    if centers.is_empty() {
        return Err(precondition("node system needs at least one center"));
    }
    if multiplicity == 0 {
        return Err(precondition("multiplicity must be at least 1"));
    }
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            let d = (centers[i] - centers[j]).modulus();
            if !(d >= 1.0 - SEPARATION_SLACK) {
                return Err(precondition(format!(
                    "centers {:?} and {:?} are {d} apart; rescale to separation >= 1 first",
                    centers[i], centers[j]
                )));
            }
        }
    }
    Ok(())
}

fn diameter<T: Scalar>(centers: &[T]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            d = d.max((centers[i] - centers[j]).modulus());
        }
    }
    d
}

fn a_const<T: Scalar>(centers: &[T]) -> f64 {
    2.0 * (1.0 + 2.0 * diameter(centers)).powi(centers.len() as i32 - 1)
}

/// Newton form of `P_i`, built over the centers reordered so that `z_i` comes last.
pub(crate) fn partition_member<T: Scalar>(centers: &[T], n: usize, i: usize) -> Result<NewtonForm<T>> {
    let order: Vec<usize> = (0..centers.len()).filter(|&j| j != i).chain(std::iter::once(i)).collect();
    let mut nodes = Vec::with_capacity(n * centers.len());
    let mut values = Vec::with_capacity(n * centers.len());
    for &j in &order {
        let v = T::from(if j == i { 1.0 } else { 0.0 });
        for _ in 0..n {
            nodes.push(centers[j]);
            values.push(v);
        }
    }
    Ok(DividedDifferenceTable::new(nodes, &values, Confluency::LocallyConstant)?.newton_form())
}

/// Newton forms of `P_1, ..., P_s` over any field.
pub(crate) fn partition_forms<T: Scalar>(centers: &[T], n: usize) -> Result<Vec<NewtonForm<T>>> {
    check_nodes(centers, n)?;
    (0..centers.len()).map(|i| partition_member(centers, n, i)).collect()
}

/// `P_1, ..., P_s` (degree `n s - 1`) in the Chebyshev basis on [`NodeSystem::reference`].
pub fn partition_of_unity(z: &NodeSystem) -> Result<Vec<Polynomial>> {
    let forms = RealForms::new(&z.centers, z.multiplicity)?;
    (0..z.s())
        .map(|i| Polynomial::from_samples(|x| forms.eval(i, x), z.degree(), z.reference()))
        .collect()
}

/// Limiting per-polynomial bound `(2 delta)^n (2D + 1)^{n(s-1)}` on the
/// `delta`-disks around the other centers.
pub fn bnd_limit(z: &NodeSystem, delta: f64) -> BoundCertificate {
    let n = z.multiplicity as f64;
    let s = z.s() as f64;
    let d = z.diameter();
    let value = (n * (2.0 * delta).ln() + n * (s - 1.0) * (2.0 * d + 1.0).ln()).exp();
    BoundCertificate::new(Formula::BndLimit, value)
        .with("delta", delta)
        .with("n", n)
        .with("s", s)
        .with("diameter", d)
}

/// `delta -> 2(s-1)(A delta)^n`, valid for `delta < 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallDeltaBound {
    pub s: usize,
    pub n: usize,
    pub a: f64,
}

impl SmallDeltaBound {
    /// `None` when `delta >= 1/2`, where the estimate does not apply.
    pub fn certificate(&self, delta: f64) -> Option<BoundCertificate> {
        if !(delta < 0.5) {
            return None;
        }
        let value = if self.s == 1 {
            0.0
        } else {
            2.0 * (self.s - 1) as f64 * (self.a * delta).powi(self.n as i32)
        };
        Some(
            BoundCertificate::new(Formula::SmallDelta, value)
                .with("a", self.a)
                .with("delta", delta)
                .with("n", self.n as f64)
                .with("s", self.s as f64),
        )
    }
}

/// `P = sum_i w_i P_i`: within `2(s-1)(A delta)^n` of `w_i` on every `delta`-disk
/// around `z_i`, for every `delta < 1/2` at once.
pub fn small_delta_approx(z: &NodeSystem, w: &[f64]) -> Result<(Polynomial, SmallDeltaBound)> {
    if w.len() != z.s() {
        return Err(Error::ValueCount {
            expected: z.s(),
            got: w.len(),
        });
    }
    if let Some(v) = w.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(precondition(format!("target values need |w_i| <= 1, got {v}")));
    }
    let p = combine(z, w, z.reference())?;
    let bound = SmallDeltaBound {
        s: z.s(),
        n: z.multiplicity,
        a: z.a_const(),
    };
    Ok((p, bound))
}

fn combine(z: &NodeSystem, w: &[f64], reference: Interval) -> Result<Polynomial> {
    let forms = RealForms::new(&z.centers, z.multiplicity)?;
    Polynomial::from_samples(
        |x| forms.combine(w, x),
        z.degree(),
        reference,
    )
}

/// Small-`delta` approximant for a step function with `sigma / D >= u`.
///
/// Uses multiplicity `m = floor((n+1)/s)` at the segment centers after
/// scaling by `1/(u D)`, so the degree is `m s - 1 <= n`. The certificate is
/// `max|y| 2(s-1)(A delta~)^m`, `delta~ = delta/(u D)`; for `m = 0`, `delta~ >= 1/2`
/// or a certificate no better than `max|y|`, the zero polynomial with the trivial
/// bound `max|y|` is returned.
pub fn small_delta_for_system(f: &StepFunction, n: usize, u: f64) -> Result<(Polynomial, BoundCertificate)> {
    let sys = f.system();
    let st = sys.stats();
    if st.s == 1 {
        return Ok((Polynomial::constant(f.values()[0]), BoundCertificate::exact()));
    }
    if !(u > 0.0) {
        return Err(precondition(format!("u = {u} must be positive")));
    }
    let ratio = st.sigma / st.diameter;
    if ratio < u * (1.0 - SEPARATION_SLACK) {
        return Err(precondition(format!("sigma/D = {ratio} is below u = {u}")));
    }
    let scale_y = f.sup_norm();
    let m = (n + 1) / st.s;
    if m == 0 || scale_y == 0.0 {
        let cert = if scale_y == 0.0 {
            BoundCertificate::exact()
        } else {
            BoundCertificate::trivial(scale_y).with("m", 0.0)
        };
        return Ok((Polynomial::zero(), cert));
    }
    let unit = u * st.diameter;
    let to_scaled = AffineMap::new(1.0 / unit, -sys.hull().mid() / unit)?;
    let delta_scaled = st.delta / unit;
    let centers: Vec<f64> = sys.centers().iter().map(|&c| to_scaled.apply(c)).collect();
    let z = NodeSystem::new(centers, m)?;
    let bound = SmallDeltaBound {
        s: st.s,
        n: m,
        a: z.a_const(),
    };
    let cert = match bound.certificate(delta_scaled) {
        Some(cert) if cert.value < 1.0 => cert,
        _ => {
            return Ok((
                Polynomial::zero(),
                BoundCertificate::trivial(scale_y)
                    .with("m", m as f64)
                    .with("delta_scaled", delta_scaled),
            ))
        }
    };
    let w: Vec<f64> = f.values().iter().map(|y| y / scale_y).collect();
    let p = combine(&z, &w, sys.hull().map(&to_scaled))?;
    let p = p.affine_pullback(&to_scaled).affine_values(scale_y, 0.0);
    let cert = cert
        .scaled(scale_y, Formula::SmallDelta)
        .with("m", m as f64)
        .with("u", u)
        .with("delta_scaled", delta_scaled);
    Ok((p, cert))
}

/// Small-`delta` amplifier for a value set, certified by
/// `(D̂/2) 2(s-1)(A delta~)^m` with `m = floor((n+1)/s)`.
pub fn eps_small_delta(values: &ValueSet, delta: f64, n: usize) -> Result<(Polynomial, BoundCertificate)> {
    let system = values.inflate(delta)?;
    let st = system.stats();
    let u = st.sigma / st.diameter;
    let f = StepFunction::new(system, values.recentred())?;
    let (p, cert) = small_delta_for_system(&f, n, u)?;
    let half = 0.5 * values.diameter();
    let p = p.affine_values(half, values.midrange());
    let cert = cert.scaled(half, Formula::EpsSmallDelta).with("delta", delta);
    Ok((p, cert))
}
