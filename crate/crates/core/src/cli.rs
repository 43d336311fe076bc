//! Batch front-end: loads a problem file, runs constructions and oracles and
//! writes CSV or JSON tables.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::amplify::{eps_general, PreparedPipeline};
use crate::bernstein::{eps_two, equal_two_segment};
use crate::certificate::{BoundCertificate, Formula};
use crate::error::Error;
use crate::intervals::{Problem, ProblemError, StepFunction, ValueSet};
use crate::newton::{eps_small_delta, small_delta_for_system};
use crate::oracle::{minimax_fit, oracle_grid, OracleResult, MIN_GRID_MULT, ORACLE_DEGREE_CAP};
use crate::poly::{fmt_f64, sup_error, ErrorReport, GridSpec, Polynomial};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "STEPCHEV_THREADS";

/// Slack allowed between a measured error and its certificate.
pub const CERTIFICATE_SLACK: f64 = 1e-12;

pub const CSV_HEADER: &str = "method,degree,m,measured_error,certificate,hull_norm,oracle_error,converged";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Geometry of the problem.
    Stats,
    /// Two-segment Bernstein construction.
    Bernstein,
    /// Confluent-interpolation construction for small segments.
    Newton,
    /// Base approximant followed by amplification.
    Pipeline,
    /// Minimax oracle.
    Oracle,
    /// All applicable constructions plus the oracle over a degree range.
    Sweep,
    /// Amplifiers for a value-set problem.
    Eps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Inclusive `A:B:step` (step defaults to 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeRange {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl DegreeRange {
    pub fn degrees(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.step).collect()
    }
}

impl FromStr for DegreeRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad degree `{t}`: {e}"));
        let (start, end, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(format!("expected A:B or A:B:step, got `{s}`")),
        };
        if step == 0 {
            return Err("step must be positive".into());
        }
        if start > end {
            return Err(format!("empty degree range {start}:{end}"));
        }
        Ok(Self { start, end, step })
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "stepchev", version, about = "Polynomial approximation of step functions on disjoint segments")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Problem file: {"intervals": [[lo,hi],...], "values": [...]} or {"value_set": [...], "delta": d}.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, conflicts_with = "degree_range")]
    pub degree: Option<usize>,
    #[arg(long, value_name = "A:B:STEP")]
    pub degree_range: Option<DegreeRange>,
    /// Amplifier degree for `pipeline` (overrides the degree budget).
    #[arg(long)]
    pub m: Option<usize>,
    /// Also run the bounded oracle.
    #[arg(long)]
    pub bounded: bool,
    /// Oracle grid points per segment, as a multiple of degree + 1.
    #[arg(long, default_value_t = MIN_GRID_MULT, value_parser = positive)]
    pub grid_mult: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

impl RunConfig {
    fn degrees(&self) -> Option<Vec<usize>> {
        match (self.degree, self.degree_range) {
            (Some(d), _) => Some(vec![d]),
            (None, Some(r)) => Some(r.degrees()),
            (None, None) => None,
        }
    }

    fn require_degrees(&self) -> Result<Vec<usize>, CliError> {
        self.degrees()
            .ok_or_else(|| CliError::new(ExitStatus::Parse, "--degree or --degree-range is required"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Io = 1,
    Parse = 2,
    Precondition = 3,
    Construction = 4,
    Sandwich = 5,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    pub fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::BaseFailure { .. } | Error::AmplificationImpossible(_) | Error::DegreeOverflow { .. } => {
                ExitStatus::Construction
            }
            Error::SandwichViolation { .. } => ExitStatus::Sandwich,
            _ => ExitStatus::Precondition,
        };
        Self::new(status, e.to_string())
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::Parse(msg) => Self::new(ExitStatus::Parse, msg),
            ProblemError::Invalid(e) => e.into(),
        }
    }
}

/// One line of the fixed CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub method: String,
    pub degree: usize,
    pub m: Option<usize>,
    pub measured_error: Option<f64>,
    pub certificate: Option<f64>,
    pub hull_norm: Option<f64>,
    pub oracle_error: Option<f64>,
    pub converged: Option<bool>,
}

impl Row {
    fn new(method: impl Into<String>, degree: usize) -> Self {
        Self {
            method: method.into(),
            degree,
            m: None,
            measured_error: None,
            certificate: None,
            hull_norm: None,
            oracle_error: None,
            converged: None,
        }
    }

    /// `measured <= certificate + slack` and `oracle <= measured`, where present.
    pub fn violation(&self) -> Option<String> {
        let measured = self.measured_error?;
        if let Some(c) = self.certificate {
            if measured > c + CERTIFICATE_SLACK {
                return Some(format!(
                    "VIOLATION {} degree {}: measured {} > certificate {}",
                    self.method,
                    self.degree,
                    fmt_f64(measured),
                    fmt_f64(c)
                ));
            }
        }
        if let Some(o) = self.oracle_error {
            if o > measured {
                return Some(format!(
                    "VIOLATION {} degree {}: oracle {} > measured {}",
                    self.method,
                    self.degree,
                    fmt_f64(o),
                    fmt_f64(measured)
                ));
            }
        }
        None
    }

    fn csv_fields(&self) -> [String; 8] {
        let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        [
            self.method.clone(),
            self.degree.to_string(),
            self.m.map(|m| m.to_string()).unwrap_or_default(),
            f(self.measured_error),
            f(self.certificate),
            f(self.hull_norm),
            f(self.oracle_error),
            self.converged.map(|c| c.to_string()).unwrap_or_default(),
        ]
    }
}

/// A row with the certificate details and the polynomial (JSON output).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    #[serde(flatten)]
    pub row: Row,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formula: Option<Formula>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<Polynomial>,
}

impl Record {
    fn construction(method: &str, p: Polynomial, cert: BoundCertificate, measured: &ErrorReport) -> Self {
        let mut row = Row::new(method, p.degree());
        row.m = cert.param("m").map(|m| m as usize);
        row.measured_error = Some(measured.global_error);
        row.certificate = Some(cert.value);
        row.hull_norm = Some(measured.hull_norm);
        Self {
            row,
            formula: Some(cert.formula),
            params: cert.params,
            polynomial: Some(p),
        }
    }

    fn oracle(r: OracleResult) -> Self {
        let mut row = Row::new(if r.bounded { "oracle-bounded" } else { "oracle" }, r.degree);
        row.hull_norm = Some(r.hull_norm);
        row.oracle_error = Some(r.best_error);
        row.converged = Some(r.converged);
        let mut params = BTreeMap::new();
        params.insert("iterations".into(), r.iterations as f64);
        params.insert("lower_bound".into(), r.lower_bound);
        params.insert("duality_gap_estimate".into(), r.duality_gap_estimate);
        params.insert("grid_points".into(), r.grid_points as f64);
        Self {
            row,
            formula: None,
            params,
            polynomial: Some(r.polynomial),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub s: usize,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_hat: Option<f64>,
    #[serde(rename = "D_hat", skip_serializing_if = "Option::is_none")]
    pub diameter_hat: Option<f64>,
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s={} delta={}", self.s, self.delta)?;
        if let Some(v) = self.sigma {
            write!(f, " sigma={v}")?;
        }
        if let Some(v) = self.diameter {
            write!(f, " D={v}")?;
        }
        if let Some(v) = self.sigma_hat {
            write!(f, " sigma_hat={v}")?;
        }
        if let Some(v) = self.diameter_hat {
            write!(f, " D_hat={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Stats(StatsReport),
    Table { records: Vec<Record>, notes: Vec<String> },
}

impl Report {
    pub fn records(&self) -> &[Record] {
        match self {
            Report::Stats(_) => &[],
            Report::Table { records, .. } => records,
        }
    }

    pub fn notes(&self) -> &[String] {
        match self {
            Report::Stats(_) => &[],
            Report::Table { notes, .. } => notes,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        self.records().iter().filter_map(|r| r.row.violation()).collect()
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        let io = |e: &dyn fmt::Display| CliError::new(ExitStatus::Io, e.to_string());
        match (self, format) {
            (Report::Stats(s), Format::Csv) => Ok(format!("{s}\n")),
            (Report::Stats(s), Format::Json) => serde_json::to_string_pretty(s).map(|t| t + "\n").map_err(|e| io(&e)),
            (Report::Table { records, .. }, Format::Csv) => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(CSV_HEADER.split(',')).map_err(|e| io(&e))?;
                for r in records {
                    w.write_record(r.row.csv_fields()).map_err(|e| io(&e))?;
                }
                let bytes = w.into_inner().map_err(|e| io(&e))?;
                String::from_utf8(bytes).map_err(|e| io(&e))
            }
            (Report::Table { records, .. }, Format::Json) => {
                serde_json::to_string_pretty(records).map(|t| t + "\n").map_err(|e| io(&e))
            }
        }
    }
}

pub fn load_problem(config: &RunConfig) -> Result<Problem, CliError> {
    let text = std::fs::read_to_string(&config.input)
        .map_err(|e| CliError::new(ExitStatus::Parse, format!("{}: {e}", config.input.display())))?;
    Ok(Problem::from_json(&text)?)
}

fn step_function(problem: Problem, command: Command) -> Result<StepFunction, CliError> {
    match problem {
        Problem::Step(f) => Ok(f),
        Problem::Values { .. } => Err(CliError::new(
            ExitStatus::Precondition,
            format!("`{}` needs an {{intervals, values}} problem", command_name(command)),
        )),
    }
}

fn command_name(c: Command) -> String {
    c.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default()
}

fn measured(p: &Polynomial, f: &StepFunction) -> ErrorReport {
    sup_error(p, f, &GridSpec::for_degree(p.degree()))
}

fn bernstein_record(f: &StepFunction, n: usize) -> Result<Record, CliError> {
    let y = f.values();
    let (p, cert) = equal_two_segment(f.system(), (y[0], y[1]), n)?;
    let e = measured(&p, f);
    Ok(Record::construction("bernstein", p, cert, &e))
}

fn newton_record(f: &StepFunction, n: usize) -> Result<Record, CliError> {
    let st = f.system().stats();
    let u = if st.diameter > 0.0 && st.sigma.is_finite() {
        st.sigma / st.diameter
    } else {
        1.0
    };
    let (p, cert) = small_delta_for_system(f, n, u)?;
    let e = measured(&p, f);
    Ok(Record::construction("small-delta", p, cert, &e))
}

fn pipeline_record(prep: &PreparedPipeline, m: usize) -> Result<Record, CliError> {
    let report = prep.run(m)?;
    let mut cert = report.certificate;
    cert = cert
        .with("m", m as f64)
        .with("base_degree", report.base_degree as f64)
        .with("base_error", report.base_error)
        .with("patterns", report.patterns as f64);
    if let Some(c) = report.implied_c {
        cert = cert.with("implied_c", c);
    }
    let mut rec = Record::construction("pipeline", report.polynomial, cert, &report.measured);
    rec.row.degree = report.total_degree;
    Ok(rec)
}

fn oracle_result(f: &StepFunction, degree: usize, bounded: bool, mult: usize) -> Result<OracleResult, CliError> {
    if degree > ORACLE_DEGREE_CAP {
        return Err(CliError::new(
            ExitStatus::Precondition,
            format!("oracle degree {degree} exceeds the cap {ORACLE_DEGREE_CAP}"),
        ));
    }
    Ok(minimax_fit(f, degree, bounded, &oracle_grid(degree, mult))?)
}

fn stats(problem: &Problem) -> StatsReport {
    match problem {
        Problem::Step(f) => {
            let st = f.system().stats();
            StatsReport {
                s: st.s,
                delta: st.delta,
                sigma: Some(st.sigma),
                diameter: Some(st.diameter),
                sigma_hat: None,
                diameter_hat: None,
            }
        }
        Problem::Values { set, delta } => {
            let inflated = set.inflate(*delta).ok().map(|sys| sys.stats());
            StatsReport {
                s: set.len(),
                delta: *delta,
                sigma: inflated.map(|st| st.sigma),
                diameter: inflated.map(|st| st.diameter),
                sigma_hat: Some(set.min_gap()),
                diameter_hat: Some(set.diameter()),
            }
        }
    }
}

fn eps_records(set: &ValueSet, delta: f64, degrees: &[usize]) -> Result<(Vec<Record>, Vec<String>), CliError> {
    let system = set.inflate(delta)?;
    let f = StepFunction::new(system, set.points().to_vec())?;
    let mut records = Vec::new();
    let mut notes = Vec::new();
    for &n in degrees {
        let mut batch: Vec<Record> = Vec::new();
        if set.len() == 2 {
            let (p, c) = eps_two(set, delta, n)?;
            let e = measured(&p, &f);
            batch.push(Record::construction("eps-two", p, c, &e));
        }
        let (p, c) = eps_small_delta(set, delta, n)?;
        let e = measured(&p, &f);
        batch.push(Record::construction("eps-small-delta", p, c, &e));
        let (p, c) = eps_general(set, delta, n)?;
        let e = measured(&p, &f);
        batch.push(Record::construction("eps-general", p, c, &e));
        let best = batch
            .iter()
            .min_by(|a, b| a.row.certificate.unwrap_or(f64::INFINITY).total_cmp(&b.row.certificate.unwrap_or(f64::INFINITY)))
            .expect("at least two methods");
        notes.push(format!(
            "n={} best {} certificate {}",
            n,
            best.row.method,
            fmt_f64(best.row.certificate.unwrap_or(f64::NAN))
        ));
        records.extend(batch);
    }
    Ok((records, notes))
}

/// Runs one command; the returned report may still contain certificate violations.
pub fn run(config: &RunConfig) -> Result<Report, CliError> {
    let problem = load_problem(config)?;
    let command = config.command;
    let mut notes = Vec::new();
    let records = match command {
        Command::Stats => return Ok(Report::Stats(stats(&problem))),
        Command::Eps => {
            let Problem::Values { set, delta } = &problem else {
                return Err(CliError::new(ExitStatus::Precondition, "`eps` needs a {value_set, delta} problem"));
            };
            let (records, n) = eps_records(set, *delta, &config.require_degrees()?)?;
            notes = n;
            records
        }
        Command::Bernstein => {
            let f = step_function(problem, command)?;
            config
                .require_degrees()?
                .into_iter()
                .map(|n| bernstein_record(&f, n))
                .collect::<Result<_, _>>()?
        }
        Command::Newton => {
            let f = step_function(problem, command)?;
            config
                .require_degrees()?
                .into_iter()
                .map(|n| newton_record(&f, n))
                .collect::<Result<_, _>>()?
        }
        Command::Pipeline => {
            let f = step_function(problem, command)?;
            let prep = PreparedPipeline::new(&f)?;
            let n0 = prep.base_degree().max(1);
            let ms: Vec<usize> = match (config.m, config.degrees()) {
                (Some(m), _) => vec![m],
                (None, Some(ds)) => ds.iter().map(|d| d / n0).collect(),
                (None, None) => return Err(CliError::new(ExitStatus::Parse, "--m, --degree or --degree-range is required")),
            };
            let mut out = Vec::new();
            for m in ms {
                if m == 0 {
                    notes.push(format!("budget below the base degree {n0}; skipped"));
                    continue;
                }
                out.push(pipeline_record(&prep, m)?);
            }
            out
        }
        Command::Oracle => {
            let f = step_function(problem, command)?;
            let mut out = Vec::new();
            for n in config.require_degrees()? {
                out.push(Record::oracle(oracle_result(&f, n, false, config.grid_mult)?));
                if config.bounded {
                    out.push(Record::oracle(oracle_result(&f, n, true, config.grid_mult)?));
                }
            }
            out
        }
        Command::Sweep => {
            let f = step_function(problem, command)?;
            sweep(&f, config, &mut notes)?
        }
    };
    Ok(Report::Table { records, notes })
}

fn sweep(f: &StepFunction, config: &RunConfig, notes: &mut Vec<String>) -> Result<Vec<Record>, CliError> {
    let degrees = config.require_degrees()?;
    let prep = match PreparedPipeline::new(f) {
        Ok(p) => Some(p),
        Err(e @ Error::Precondition(_)) => {
            notes.push(format!("pipeline skipped: {e}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut oracles: BTreeMap<(usize, bool), OracleResult> = BTreeMap::new();
    let mut oracle_at = |n: usize, bounded: bool| -> Result<Option<OracleResult>, CliError> {
        if n > ORACLE_DEGREE_CAP {
            return Ok(None);
        }
        if let Some(r) = oracles.get(&(n, bounded)) {
            return Ok(Some(r.clone()));
        }
        let r = oracle_result(f, n, bounded, config.grid_mult)?;
        oracles.insert((n, bounded), r.clone());
        Ok(Some(r))
    };
    let mut out = Vec::new();
    let mut last_m = 0;
    for n in degrees {
        let mut batch = Vec::new();
        if f.system().len() == 2 {
            batch.push(bernstein_record(f, n)?);
        }
        batch.push(newton_record(f, n)?);
        if let Some(prep) = &prep {
            let m = n / prep.base_degree().max(1);
            if m > 0 && m != last_m {
                batch.push(pipeline_record(prep, m)?);
                last_m = m;
            }
        }
        for rec in &mut batch {
            if let Some(o) = oracle_at(rec.row.degree, false)? {
                rec.row.oracle_error = Some(o.best_error);
                rec.row.converged = Some(o.converged);
            }
        }
        out.extend(batch);
        if let Some(o) = oracle_at(n, false)? {
            out.push(Record::oracle(o));
        }
        if config.bounded {
            if let Some(o) = oracle_at(n, true)? {
                out.push(Record::oracle(o));
            }
        }
    }
    Ok(out)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::new(ExitStatus::Parse, format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::new(ExitStatus::Io, e.to_string()))
}

/// Runs the command, writes the output and returns the process exit status.
pub fn execute(config: &RunConfig) -> Result<ExitStatus, CliError> {
    let pool = thread_pool()?;
    let report = pool.install(|| run(config))?;
    let text = report.render(config.format)?;
    match &config.out {
        Some(path) => std::fs::write(path, &text)
            .map_err(|e| CliError::new(ExitStatus::Io, format!("{}: {e}", path.display())))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::new(ExitStatus::Io, e.to_string()))?,
    }
    for note in report.notes() {
        eprintln!("{note}");
    }
    let violations = report.violations();
    for v in &violations {
        eprintln!("{v}");
    }
    Ok(if violations.is_empty() {
        ExitStatus::Success
    } else {
        ExitStatus::Sandwich
    })
}

/// Entry point for the binary.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::Parse.code() } else { 0 };
        }
    };
    match execute(&config) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status.code()
        }
    }
}
