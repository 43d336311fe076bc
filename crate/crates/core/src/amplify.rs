//! Amplification: a coarse bounded approximant composed with a two-segment
//! Bernstein amplifier.
//!
//! The base stage fits the piecewise-linear extension of a `{-1, 1}`-valued
//! step on `[-1, 1]` at degree about `4 pi / sigma`, verifies an error of at
//! most 1/4 and shrinks by 4/5, so it lands within 1/2 of the values on `K`
//! and stays in `[-1, 1]` on the hull. Composing with the degree-`m`
//! amplifier for `[-1, -1/2] ∪ [1/2, 1]` gives error `2 (3/4)^{m/2}`.
//! Values off the vertices are written as convex combinations of sign
//! patterns, each pattern amplified separately.

use serde::{Deserialize, Serialize};

use crate::bernstein::{eps_two, equal_two_segment, two_segment_approx};
use crate::certificate::{pow_half, BoundCertificate, Formula};
use crate::error::{precondition, Error, Result};
use crate::intervals::{normalize, AffineMap, Interval, IntervalSystem, NormalTarget, StepFunction, ValueSet};
use crate::newton::small_delta_for_system;
use crate::poly::{compose, hull_grid, max_abs_on, sup_error, weighted_sum, ErrorReport, GridSpec, Polynomial, DEFAULT_DEGREE_CAP};

/// Error the base fit must reach before the 4/5 shrink.
const BASE_FIT_TARGET: f64 = 0.25;
const BASE_SHRINK: f64 = 0.8;
const ESCALATION: f64 = 1.5;
const ESCALATION_CAP: usize = 16;

/// Base degree `floor(4 pi / sigma)` (at least 1) for a system normalized to `[-1, 1]`.
pub fn target_degree(sigma: f64) -> usize {
    ((4.0 * std::f64::consts::PI / sigma).floor() as usize).max(1)
}

/// Result of the base stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseApproximant {
    /// Already shrunk by 4/5.
    pub polynomial: Polynomial,
    pub target_degree: usize,
    pub degree: usize,
    /// Fit error against the extension on `[-1, 1]` before shrinking.
    pub extension_error: f64,
    /// Measured error on `K` after shrinking.
    pub base_error: f64,
    pub hull_norm: f64,
}

/// Continuous piecewise-linear extension: constant on each segment and
/// outside the hull, linear across the gaps.
pub fn linear_extension(f: &StepFunction) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |x| {
        let ivs = f.system().intervals();
        let y = f.values();
        let k = ivs.partition_point(|iv| iv.lo() <= x);
        if k == 0 {
            return y[0];
        }
        let i = k - 1;
        if x <= ivs[i].hi() || i + 1 == ivs.len() {
            return y[i];
        }
        let (a, b) = (ivs[i].hi(), ivs[i + 1].lo());
        y[i] + (y[i + 1] - y[i]) * (x - a) / (b - a)
    }
}

fn check_symmetric(system: &IntervalSystem) -> Result<()> {
    let hull = system.hull();
    if (hull.lo() + 1.0).abs() > 1e-12 || (hull.hi() - 1.0).abs() > 1e-12 {
        return Err(precondition(format!(
            "system must be normalized to [-1, 1], hull is [{}, {}]",
            hull.lo(),
            hull.hi()
        )));
    }
    Ok(())
}

/// Base stage on a system normalized to `[-1, 1]` with `|y_i| <= 1`.
pub fn jackson_base(f: &StepFunction) -> Result<BaseApproximant> {
    let sys = f.system();
    if let Some(y) = f.values().iter().find(|y| !(y.abs() <= 1.0)) {
        return Err(precondition(format!("base stage needs |y_i| <= 1, got {y}")));
    }
    if sys.len() == 1 || f.values().iter().all(|y| *y == f.values()[0]) {
        return Ok(BaseApproximant {
            polynomial: Polynomial::constant(f.values()[0]),
            target_degree: 0,
            degree: 0,
            extension_error: 0.0,
            base_error: 0.0,
            hull_norm: f.values()[0].abs(),
        });
    }
    check_symmetric(sys)?;
    let st = sys.stats();
    let n0 = target_degree(st.sigma);
    let cap = ESCALATION_CAP * n0;
    let ext = linear_extension(f);
    let hull = Interval::new(-1.0, 1.0)?;
    let mut n = n0;
    let (p, fit_error) = loop {
        let p = Polynomial::from_samples(&ext, n, hull)?;
        let grid = hull_grid(&GridSpec::for_degree(n), sys.len());
        let (err, _) = max_abs_on(|x| p.eval(x) - ext(x), hull, &grid);
        if err <= BASE_FIT_TARGET {
            break (p, err);
        }
        let next = ((n as f64) * ESCALATION).ceil() as usize;
        if next > cap {
            return Err(Error::BaseFailure {
                degree: n,
                measured: err,
            });
        }
        n = next;
    };
    let shrunk = p.affine_values(BASE_SHRINK, 0.0);
    let report = sup_error(&shrunk, f, &GridSpec::for_degree(n));
    if report.global_error > 0.5 || report.hull_norm > 1.0 + 1e-12 {
        return Err(Error::BaseFailure {
            degree: n,
            measured: report.global_error,
        });
    }
    Ok(BaseApproximant {
        polynomial: shrunk,
        target_degree: n0,
        degree: n,
        extension_error: fit_error,
        base_error: report.global_error,
        hull_norm: report.hull_norm,
    })
}

/// Degree-`m` Bernstein amplifier on `[-1, 1]` for `[-1, -1+eps] ∪ [1-eps, 1]`
/// with values `(-1, 1)`; certificate `2 (4h(1-h))^{m/2}`, `h = eps/2`.
pub fn amplifier(m: usize, eps: f64) -> Result<(Polynomial, BoundCertificate)> {
    if m == 0 {
        return Err(precondition("amplifier degree m must be at least 1"));
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(precondition(format!("amplifier eps = {eps} must lie in (0, 1/2]")));
    }
    let (p, cert) = two_segment_approx(eps / 2.0, -1.0, 1.0, m)?;
    let to_unit = AffineMap::between(Interval::new(-1.0, 1.0)?, Interval::new(0.0, 1.0)?)?;
    Ok((p.affine_pullback(&to_unit), cert.with("eps", eps)))
}

/// Writes `y` (entries in `[-1, 1]`) as `sum_k w_k v_k` with sign patterns
/// `v_k in {-1, 1}^s`, `w_k > 0` and `sum_k w_k = 1`; at most `s + 1` terms.
pub fn vertex_decomposition(y: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
    if let Some(v) = y.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(precondition(format!("vertex decomposition needs |y_i| <= 1, got {v}")));
    }
    let mut cuts: Vec<f64> = y.to_vec();
    cuts.push(-1.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    Ok(cuts
        .windows(2)
        .map(|w| {
            let t = 0.5 * (w[0] + w[1]);
            let pattern = y.iter().map(|&v| if v > t { 1.0 } else { -1.0 }).collect();
            (0.5 * (w[1] - w[0]), pattern)
        })
        .collect())
}

/// Stage-by-stage record of an amplified construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub base_degree: usize,
    pub base_error: f64,
    pub amplifier_degree: usize,
    pub total_degree: usize,
    pub certificate: BoundCertificate,
    pub measured: ErrorReport,
    pub polynomial: Polynomial,
    /// `c` in `certificate = 2 exp(-c n sigma / D)` (pipeline only).
    pub implied_c: Option<f64>,
    /// Sign patterns amplified separately.
    pub patterns: usize,
}

impl PipelineReport {
    /// Rows `stage,degree,measured_error,certificate`.
    pub fn csv_rows(&self) -> Vec<String> {
        use crate::poly::fmt_f64;
        vec![
            format!("base,{},{},", self.base_degree, fmt_f64(self.base_error)),
            format!(
                "composed,{},{},{}",
                self.total_degree,
                fmt_f64(self.measured.global_error),
                fmt_f64(self.certificate.value)
            ),
        ]
    }
}

enum Part {
    Constant(f64),
    Base(BaseApproximant),
}

/// Base stage for every sign pattern, shared between degree choices.
pub struct PreparedPipeline {
    f: StepFunction,
    scale: f64,
    map: AffineMap,
    parts: Vec<(f64, Part)>,
}

impl PreparedPipeline {
    pub fn new(f: &StepFunction) -> Result<Self> {
        let sys = f.system();
        if sys.len() < 2 {
            return Err(precondition("pipeline needs at least two segments"));
        }
        let scale = f.sup_norm();
        let (normal, map) = normalize(sys, NormalTarget::Symmetric)?;
        let mut parts = Vec::new();
        if scale > 0.0 {
            let w: Vec<f64> = f.values().iter().map(|y| y / scale).collect();
            for (weight, pattern) in vertex_decomposition(&w)? {
                if pattern.iter().all(|v| *v == pattern[0]) {
                    parts.push((weight, Part::Constant(pattern[0])));
                } else {
                    let base = jackson_base(&StepFunction::new(normal.clone(), pattern)?)?;
                    parts.push((weight, Part::Base(base)));
                }
            }
        }
        Ok(Self {
            f: f.clone(),
            scale,
            map,
            parts,
        })
    }

    /// Largest base degree over the patterns; 0 when the target is constant.
    pub fn base_degree(&self) -> usize {
        self.bases().map(|b| b.degree).max().unwrap_or(0)
    }

    fn bases(&self) -> impl Iterator<Item = &BaseApproximant> {
        self.parts.iter().filter_map(|(_, p)| match p {
            Part::Base(b) => Some(b),
            Part::Constant(_) => None,
        })
    }

    /// `scale * 2 (3/4)^{m/2}`, or 0 when no pattern needs amplification.
    pub fn certificate(&self, m: usize) -> BoundCertificate {
        if self.base_degree() == 0 {
            return BoundCertificate::exact();
        }
        let st = self.f.system().stats();
        let n0 = self.base_degree() as f64;
        BoundCertificate::new(Formula::Pipeline, self.scale * 2.0 * pow_half(0.75, m))
            .with("m", m as f64)
            .with("base_degree", n0)
            .with("total_degree", m as f64 * n0)
            .with("scale", self.scale)
            .with("implied_c", implied_c(st.sigma, st.diameter, self.base_degree()))
    }

    /// Composes every base with the degree-`m` amplifier at `eps = 1/2`.
    pub fn polynomial(&self, m: usize) -> Result<Polynomial> {
        if m == 0 {
            return Err(precondition("amplifier degree m must be at least 1"));
        }
        let (amp, _) = amplifier(m, 0.5)?;
        let mut pieces = Vec::with_capacity(self.parts.len());
        for (w, part) in &self.parts {
            let q = match part {
                Part::Constant(c) => Polynomial::constant(*c),
                Part::Base(b) => compose(&amp, &b.polynomial)?,
            };
            pieces.push((*w, q));
        }
        let terms: Vec<(f64, &Polynomial)> = pieces.iter().map(|(w, q)| (*w, q)).collect();
        let q = weighted_sum(&terms)?;
        Ok(q.affine_pullback(&self.map).affine_values(self.scale, 0.0))
    }

    pub fn run(&self, m: usize) -> Result<PipelineReport> {
        let polynomial = self.polynomial(m)?;
        let total_degree = m * self.base_degree();
        let measured = sup_error(&polynomial, &self.f, &GridSpec::for_degree(total_degree));
        let st = self.f.system().stats();
        Ok(PipelineReport {
            base_degree: self.base_degree(),
            base_error: self.bases().map(|b| b.base_error).fold(0.0, f64::max),
            amplifier_degree: m,
            total_degree,
            certificate: self.certificate(m),
            measured,
            polynomial,
            implied_c: (self.base_degree() > 0).then(|| implied_c(st.sigma, st.diameter, self.base_degree())),
            patterns: self.parts.len(),
        })
    }
}

/// `c` with `2 (3/4)^{m/2} = 2 exp(-c n sigma/D)` at `n = m n0`.
pub fn implied_c(sigma: f64, diameter: f64, base_degree: usize) -> f64 {
    0.5 * (4.0f64 / 3.0).ln() * diameter / (sigma * base_degree as f64)
}

/// Base stage then amplification by degree `m >= 1`; total degree `m n0`.
pub fn general_pipeline(f: &StepFunction, m: usize) -> Result<PipelineReport> {
    if m == 0 {
        return Err(precondition("amplifier degree m must be at least 1"));
    }
    PreparedPipeline::new(f)?.run(m)
}

/// Pipeline with `m = floor(n / n0)`; `None` when the budget is below `n0`.
pub fn pipeline_for_budget(f: &StepFunction, n: usize) -> Result<Option<PipelineReport>> {
    let prep = PreparedPipeline::new(f)?;
    let n0 = prep.base_degree().max(1);
    let m = n / n0;
    if m == 0 {
        return Ok(None);
    }
    prep.run(m).map(Some)
}

/// Pipeline amplifier for a value set, certified by `(D̂/2)` times the pipeline bound.
pub fn eps_general(values: &ValueSet, delta: f64, n: usize) -> Result<(Polynomial, BoundCertificate)> {
    let system = values.inflate(delta)?;
    let f = StepFunction::new(system, values.recentred())?;
    let half = 0.5 * values.diameter();
    let prep = PreparedPipeline::new(&f)?;
    let m = n / prep.base_degree().max(1);
    if m == 0 {
        let cert = BoundCertificate::trivial(half).with("delta", delta).with("m", 0.0);
        return Ok((Polynomial::constant(values.midrange()), cert));
    }
    let p = prep.polynomial(m)?.affine_values(half, values.midrange());
    let cert = prep
        .certificate(m)
        .scaled(half, Formula::EpsGeneral)
        .with("delta", delta);
    Ok((p, cert))
}

/// `2 (4 eps/(1+eps)^2)^{m/2}`.
pub fn self_amplify_certificate(eps: f64, m: usize) -> f64 {
    2.0 * pow_half(4.0 * eps / (1.0 + eps).powi(2), m)
}

/// Inner approximant from [`choose_best`] composed with the `{-1, 1}` amplifier
/// at the inner error; degree `m * inner degree`.
///
/// The inner error is the inner certificate when it is below 1, otherwise the
/// measured inner error.
pub fn self_amplify(f: &StepFunction, inner_degree: usize, m: usize) -> Result<PipelineReport> {
    if m == 0 {
        return Err(precondition("amplifier degree m must be at least 1"));
    }
    let y = f.values();
    if y.iter().any(|v| v.abs() != 1.0) || !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(precondition("self amplification needs values in {-1, 1} taking both signs"));
    }
    let inner = choose_best(f, inner_degree)?;
    let grid = GridSpec::for_degree(inner.degree);
    let inner_measured = sup_error(&inner.polynomial, f, &grid).global_error;
    let eps = if inner.certificate.value < 1.0 {
        inner.certificate.value
    } else {
        inner_measured
    };
    if !(eps < 1.0) || eps <= 0.0 {
        return Err(Error::AmplificationImpossible(eps));
    }
    let pair = ValueSet::new(vec![-1.0, 1.0])?;
    let (amp, _) = eps_two(&pair, eps, m)?;
    let polynomial = compose(&amp, &inner.polynomial)?;
    let total_degree = m * inner.polynomial.degree();
    let measured = sup_error(&polynomial, f, &GridSpec::for_degree(total_degree));
    let certificate = BoundCertificate::new(Formula::SelfAmplify, self_amplify_certificate(eps, m))
        .with("eps_inner", eps)
        .with("m", m as f64)
        .with("inner_degree", inner.polynomial.degree() as f64);
    Ok(PipelineReport {
        base_degree: inner.polynomial.degree(),
        base_error: eps,
        amplifier_degree: m,
        total_degree,
        certificate,
        measured,
        polynomial,
        implied_c: None,
        patterns: 1,
    })
}

/// Which construction produced an approximant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Constant,
    Bernstein,
    SmallDelta,
    Pipeline,
    Trivial,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Constant => "constant",
            Method::Bernstein => "bernstein",
            Method::SmallDelta => "small-delta",
            Method::Pipeline => "pipeline",
            Method::Trivial => "trivial",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub polynomial: Polynomial,
    pub certificate: BoundCertificate,
    pub method: Method,
    pub degree: usize,
}

/// Construction with the smallest certificate within `degree_budget`; ties go
/// to the smaller degree, then to the Bernstein construction.
pub fn choose_best(f: &StepFunction, degree_budget: usize) -> Result<Choice> {
    let y = f.values();
    if y.iter().all(|v| *v == y[0]) {
        return Ok(Choice {
            polynomial: Polynomial::constant(y[0]),
            certificate: BoundCertificate::exact(),
            method: Method::Constant,
            degree: 0,
        });
    }
    let mut candidates = vec![Choice {
        polynomial: Polynomial::zero(),
        certificate: BoundCertificate::trivial(f.sup_norm()),
        method: Method::Trivial,
        degree: 0,
    }];
    if degree_budget == 0 {
        return Ok(candidates.remove(0));
    }
    let sys = f.system();
    if sys.len() == 2 {
        let (p, c) = equal_two_segment(sys, (y[0], y[1]), degree_budget)?;
        candidates.push(Choice {
            degree: p.degree(),
            polynomial: p,
            certificate: c,
            method: Method::Bernstein,
        });
    }
    let st = sys.stats();
    let (p, c) = small_delta_for_system(f, degree_budget, st.sigma / st.diameter)?;
    if c.formula == Formula::SmallDelta {
        candidates.push(Choice {
            degree: p.degree(),
            polynomial: p,
            certificate: c,
            method: Method::SmallDelta,
        });
    }
    let key = |c: &Choice| (c.certificate.value, c.degree, c.method);
    let mut best = candidates
        .into_iter()
        .min_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite certificates"))
        .expect("non-empty");

    // the pipeline certificate needs only the base degrees; compose only if it wins
    let prep = PreparedPipeline::new(f)?;
    let n0 = prep.base_degree().max(1);
    let m = degree_budget.min(DEFAULT_DEGREE_CAP) / n0;
    if m >= 1 {
        let cert = prep.certificate(m);
        let degree = m * prep.base_degree();
        if (cert.value, degree, Method::Pipeline) < key(&best) {
            best = Choice {
                polynomial: prep.polynomial(m)?,
                certificate: cert,
                method: Method::Pipeline,
                degree,
            };
        }
    }
    Ok(best)
}
