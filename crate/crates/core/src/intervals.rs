//! Segment systems, step functions and value sets.
//!
//! An [`IntervalSystem`] is a sorted family of closed, pairwise disjoint
//! segments `I_1, ..., I_s` with strictly positive gaps. Every bound in this
//! crate is parameterized by the four numbers reported by
//! [`IntervalSystem::stats`]: the count `s`, the maximal half-length `delta`,
//! the minimal gap `sigma` and the diameter `D` of the union.

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};

/// A closed segment `[lo, hi]`; `lo == hi` is a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate segment `[x, x]`.
    pub fn point(x: f64) -> Result<Self> {
        Self::new(x, x)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.len()
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Image under an affine map (endpoints reordered for negative scales).
    pub fn map(&self, map: &AffineMap) -> Interval {
        let a = map.apply(self.lo);
        let b = map.apply(self.hi);
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Geometry of a segment system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemStats {
    pub s: usize,
    /// Half of the longest segment length.
    pub delta: f64,
    /// Smallest gap between consecutive segments; `+inf` when `s == 1`.
    pub sigma: f64,
    /// Diameter of the union.
    pub diameter: f64,
}

/// Sorted, pairwise disjoint segments with positive gaps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSystem {
    intervals: Vec<Interval>,
}

impl IntervalSystem {
    /// Sorts the segments by left endpoint and checks disjointness.
    pub fn new(mut intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::EmptySystem);
        }
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
        for w in intervals.windows(2) {
            let gap = w[1].lo - w[0].hi;
            if gap <= 0.0 {
                return Err(Error::Disjointness {
                    prev_lo: w[0].lo,
                    prev_hi: w[0].hi,
                    next_lo: w[1].lo,
                    next_hi: w[1].hi,
                    gap,
                });
            }
        }
        Ok(Self { intervals })
    }

    /// Convenience constructor from `(lo, hi)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let intervals = pairs
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(intervals)
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Convex hull of the union.
    pub fn hull(&self) -> Interval {
        Interval {
            lo: self.intervals[0].lo,
            hi: self.intervals[self.intervals.len() - 1].hi,
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.intervals.iter().map(Interval::mid).collect()
    }

    pub fn stats(&self) -> SystemStats {
        let delta = self
            .intervals
            .iter()
            .map(Interval::radius)
            .fold(0.0, f64::max);
        let sigma = self
            .intervals
            .windows(2)
            .map(|w| w[1].lo - w[0].hi)
            .fold(f64::INFINITY, f64::min);
        SystemStats {
            s: self.intervals.len(),
            delta,
            sigma,
            diameter: self.hull().len(),
        }
    }

    /// Image of every segment under `map`.
    pub fn map(&self, map: &AffineMap) -> Result<Self> {
        Self::new(self.intervals.iter().map(|i| i.map(map)).collect())
    }

    /// Index of the segment containing `x`, if any.
    pub fn locate(&self, x: f64) -> Option<usize> {
        self.intervals.iter().position(|i| i.contains(x))
    }
}

/// Reference interval targets for [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalTarget {
    /// `[0, 1]`
    Unit,
    /// `[-1, 1]`
    Symmetric,
}

impl NormalTarget {
    pub fn interval(self) -> Interval {
        match self {
            NormalTarget::Unit => Interval { lo: 0.0, hi: 1.0 },
            NormalTarget::Symmetric => Interval { lo: -1.0, hi: 1.0 },
        }
    }
}

/// Maps the system so that its convex hull becomes the target interval.
///
/// Returns the normalized system and the map from original to normalized
/// coordinates.
pub fn normalize(system: &IntervalSystem, target: NormalTarget) -> Result<(IntervalSystem, AffineMap)> {
    let hull = system.hull();
    if hull.len() <= 0.0 {
        return Err(Error::NotNormalizable);
    }
    let t = target.interval();
    let map = AffineMap::between(hull, t)?;
    let mut mapped: Vec<Interval> = system.intervals.iter().map(|i| i.map(&map)).collect();
    // pin the hull endpoints against rounding
    let last = mapped.len() - 1;
    mapped[0].lo = t.lo;
    mapped[last].hi = t.hi;
    for i in &mut mapped {
        i.lo = i.lo.clamp(t.lo, t.hi);
        i.hi = i.hi.clamp(i.lo, t.hi);
    }
    Ok((IntervalSystem::new(mapped)?, map))
}

/// Piecewise constant target `sum_i y_i 1_{I_i}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    system: IntervalSystem,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(system: IntervalSystem, values: Vec<f64>) -> Result<Self> {
        if values.len() != system.len() {
            return Err(Error::ValueCount {
                expected: system.len(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("step value {v}")));
        }
        Ok(Self { system, values })
    }

    pub fn system(&self) -> &IntervalSystem {
        &self.system
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_i |y_i|`, the sup-norm of the step on `K`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same segments with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.system.clone(), values)
    }

    pub fn map(&self, map: &AffineMap) -> Result<Self> {
        // a negative scale reverses the segment order
        let mut values = self.values.clone();
        if map.scale() < 0.0 {
            values.reverse();
        }
        Self::new(self.system.map(map)?, values)
    }
}

/// Strictly increasing finite set `Y = {y_1 < ... < y_s}`, `s >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueSet {
    points: Vec<f64>,
}

impl ValueSet {
    /// Sorts the points; duplicates and non-finite entries are rejected.
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidValueSet);
        }
        points.sort_by(f64::total_cmp);
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidValueSet);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest gap between values.
    pub fn min_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        self.points[self.points.len() - 1] - self.points[0]
    }

    pub fn midrange(&self) -> f64 {
        0.5 * (self.points[0] + self.points[self.points.len() - 1])
    }

    /// Values recentred into `[-1, 1]` with the extreme values sent to `-1` and `1`.
    pub fn recentred(&self) -> Vec<f64> {
        let mid = self.midrange();
        let half = 0.5 * self.diameter();
        self.points.iter().map(|y| (y - mid) / half).collect()
    }

    /// The system `{[y_i - delta, y_i + delta]}`; requires `0 < delta < min_gap / 2`.
    pub fn inflate(&self, delta: f64) -> Result<IntervalSystem> {
        let bound = 0.5 * self.min_gap();
        if !(delta > 0.0 && delta < bound) {
            return Err(precondition(format!(
                "delta = {delta} must satisfy 0 < delta < min_gap/2 = {bound}"
            )));
        }
        IntervalSystem::new(
            self.points
                .iter()
                .map(|&y| Interval::new(y - delta, y + delta))
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

/// Invertible affine map `x -> scale * x + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    scale: f64,
    shift: f64,
}

impl AffineMap {
    pub fn new(scale: f64, shift: f64) -> Result<Self> {
        if !scale.is_finite() || scale == 0.0 || !shift.is_finite() {
            return Err(Error::SingularMap(scale));
        }
        Ok(Self { scale, shift })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            shift: 0.0,
        }
    }

    /// The increasing map sending `from` onto `to`.
    pub fn between(from: Interval, to: Interval) -> Result<Self> {
        if from.len() <= 0.0 || to.len() <= 0.0 {
            return Err(Error::NotNormalizable);
        }
        let scale = to.len() / from.len();
        Self::new(scale, to.lo - scale * from.lo)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }

    pub fn inverse(&self) -> Self {
        Self {
            scale: 1.0 / self.scale,
            shift: -self.shift / self.scale,
        }
    }

    /// `self` after `first`: `x -> self(first(x))`.
    pub fn after(&self, first: &AffineMap) -> Self {
        Self {
            scale: self.scale * first.scale,
            shift: self.scale * first.shift + self.shift,
        }
    }
}

/// A problem file: either a step function or a value-set problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Step(StepFunction),
    Values { set: ValueSet, delta: f64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    intervals: Option<Vec<[f64; 2]>>,
    values: Option<Vec<f64>>,
    value_set: Option<Vec<f64>>,
    delta: Option<f64>,
}

impl Problem {
    /// Parses `{"intervals": [[lo,hi],...], "values": [...]}` or
    /// `{"value_set": [...], "delta": d}`.
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let raw: RawProblem = serde_json::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
        match raw {
            RawProblem {
                intervals: Some(iv),
                values: Some(values),
                value_set: None,
                delta: None,
            } => {
                let intervals = iv
                    .into_iter()
                    .map(Interval::try_from)
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| ProblemError::Parse(e.to_string()))?;
                let system = IntervalSystem::new(intervals)?;
                Ok(Problem::Step(StepFunction::new(system, values)?))
            }
            RawProblem {
                intervals: None,
                values: None,
                value_set: Some(points),
                delta: Some(delta),
            } => {
                if !delta.is_finite() {
                    return Err(ProblemError::Parse(format!("non-finite delta {delta}")));
                }
                let set = ValueSet::new(points).map_err(|e| ProblemError::Parse(e.to_string()))?;
                Ok(Problem::Values { set, delta })
            }
            _ => Err(ProblemError::Parse(
                "expected either {intervals, values} or {value_set, delta}".into(),
            )),
        }
    }
}

/// Failure to load a problem file: malformed input vs. a well-formed file
/// violating a geometric precondition.
#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] Error),
}
