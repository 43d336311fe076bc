//! Explicit polynomial approximation of step functions on unions of disjoint
//! segments, with closed-form error certificates and a brute-force minimax
//! oracle to check them against.

pub mod amplify;
pub mod bernstein;
pub mod certificate;
pub mod cli;
pub mod error;
pub mod intervals;
pub mod newton;
pub mod numerics;
pub mod oracle;
pub mod poly;

pub use certificate::{BoundCertificate, Formula};
pub use error::{Error, Result};
pub use intervals::{AffineMap, Interval, IntervalSystem, StepFunction, ValueSet};
pub use poly::{ErrorReport, GridSpec, Polynomial};
