//! Command-line front end: `coef`, `sim` and `verify` subcommands.
//!
//! Exit codes: 0 success, 1 parse or I/O error, 2 domain error,
//! 3 failed verification.

pub mod input;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conetract::coefficients::{
    birkhoff_bound, dobrushin_tau, h_hermitian_map, h_matrix, hilbert_lipschitz_homogeneous_map,
    hopf_opnorm_hermitian_map, hopf_opnorm_matrix, noncommutative_dobrushin, projective_diameter_map,
    projective_diameter_matrix, CoefficientReport, HermitianLinearMap, LinearMap, OptimizerOptions,
};
use conetract::flows::{
    integrate, riccati_scalar_rate, verify_decay_with_slack, DecayMetric, DecayReference, FlowState,
    FlowTrajectory, VectorFieldSpec,
};
use conetract::markov::{self, StochasticSequence};
use conetract::quantum::{self, sample_dual_ratio, sample_hopf_ratio, DensityMatrix, KrausChannel};
use conetract::sampling::LogBoxSampler;
use conetract::trajectory::StateColumns;
use conetract::{linalg, Error, RealVector};
use serde_json::json;

use output::{num, CsvRow};

pub const SEED_ENV: &str = "CONETRACT_SEED";
/// Largest allowed gap between the two sampled sides of the duality check.
pub const DUALITY_GAP: f64 = 0.05;
/// Sampled ratios may exceed the optimized coefficient by this much.
pub const DUALITY_ORDER_TOL: f64 = 1e-8;

#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Domain(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Io(_) => 1,
            CliError::Domain(_) => 2,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Domain(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { path, message } => CliError::Parse(format!("{path}: {message}")),
            other => CliError::Domain(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "conetract", version, about = "Contraction rates of consensus maps and flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the report or trajectory here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Seed for sampling and optimizer starts; CONETRACT_SEED takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a contraction coefficient and write a JSON report.
    Coef(CoefArgs),
    /// Simulate a Markov chain, a channel or a flow and write a CSV trajectory.
    Sim(SimArgs),
    /// Check a decay bound or the norm duality of a channel.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoefKind {
    /// Dobrushin coefficient of a stochastic matrix.
    Tau,
    /// Hopf oscillation operator norm of a matrix or channel.
    Hopf,
    /// Flow rate h(A) of a matrix.
    H,
    /// Noncommutative Dobrushin coefficient of a channel.
    Qdobrushin,
    /// Flow rate h(Phi - id) of the semigroup generated by a channel.
    Hphi,
    /// Projective diameter of a matrix or channel.
    Diam,
    /// Birkhoff contraction bound tanh(diam / 4).
    Birkhoff,
    /// Sampled Hilbert-metric Lipschitz constant of a linear map.
    Maplip,
}

#[derive(Debug, Args)]
pub struct OptimizerArgs {
    /// Optimizer starts.
    #[arg(long, default_value_t = 64)]
    pub starts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_sweeps: usize,
    /// Stop a start once a sweep improves by less than this.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

impl OptimizerArgs {
    fn options(&self, seed: u64) -> OptimizerOptions {
        OptimizerOptions { starts: self.starts, seed, max_sweeps: self.max_sweeps, tol: self.tol }
    }
}

#[derive(Debug, Args)]
pub struct CoefArgs {
    #[arg(value_enum)]
    pub kind: CoefKind,
    /// JSON file {"matrix": [[...]]}.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// JSON list of Kraus operators with [re, im] entries.
    #[arg(long)]
    pub channel: Option<PathBuf>,
    /// Sample count for sampled coefficients.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Half-width of the log-coordinate box used by `maplip`.
    #[arg(long, default_value_t = 4.0)]
    pub half_width: f64,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    Markov,
    Channel,
    Flow,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(value_enum)]
    pub kind: SimKind,
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub channel: Option<PathBuf>,
    /// JSON flow description tagged by "model".
    #[arg(long)]
    pub flow: Option<PathBuf>,
    /// Initial vector as comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Initial matrix (density matrix or Riccati state) as {"matrix": ...}.
    #[arg(long)]
    pub x0_file: Option<PathBuf>,
    /// Steps for Markov chains and channels.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 5.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = conetract::flows::DEFAULT_DT)]
    pub dt: f64,
    /// Rate for the bound column `e^{alpha t} metric(0)`.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Fill the bound column from the chain's own coefficient (tau or the
    /// noncommutative coefficient) instead of --alpha.
    #[arg(long)]
    pub certify: bool,
    /// Write every k-th row.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyKind {
    /// Exponential decay envelope of a flow.
    Bound,
    /// Oscillation ratio of Phi against trace-distance ratio of its adjoint.
    Duality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Hopf,
    Hilbert,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub kind: VerifyKind,
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[arg(long)]
    pub channel: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Second initial state; the distance between the two trajectories is checked.
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<String>,
    #[arg(long)]
    pub x0_file: Option<PathBuf>,
    #[arg(long)]
    pub y0_file: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = MetricArg::Hopf)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 5.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = conetract::flows::DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = conetract::flows::DECAY_SLACK)]
    pub slack: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

/// Seed from the environment when set, else from the command line.
pub fn effective_seed(cli_seed: u64, env: Option<&str>) -> Result<u64, CliError> {
    match env {
        Some(s) => s.trim().parse().map_err(|e| CliError::Parse(format!("{SEED_ENV}='{s}': {e}"))),
        None => Ok(cli_seed),
    }
}

fn require<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::Parse(format!("--{flag} is required")))
}

/// Parses arguments, runs the command and returns the process exit code.
/// Diagnostics go to `stderr`; reports go to `--output` or `stdout`.
pub fn run_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let env = std::env::var(SEED_ENV).ok();
    match effective_seed(cli.seed, env.as_deref()).and_then(|seed| run(&cli, seed, stdout)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "conetract: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: &Cli, seed: u64, stdout: &mut dyn Write) -> Result<i32, CliError> {
    // inputs are parsed inside each command before any computation starts
    let mut buf: Vec<u8> = Vec::new();
    let code = match &cli.command {
        Command::Coef(a) => cmd_coef(a, seed, &mut buf)?,
        Command::Sim(a) => cmd_sim(a, seed, &mut buf)?,
        Command::Verify(a) => cmd_verify(a, seed, &mut buf)?,
    };
    match &cli.output {
        Some(path) => {
            let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(f);
            w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))?;
        }
        None => stdout.write_all(&buf).map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(code)
}

enum Operand {
    Matrix(nalgebra::DMatrix<f64>),
    Channel(KrausChannel),
}

fn operand(matrix: &Option<PathBuf>, channel: &Option<PathBuf>) -> Result<Operand, CliError> {
    match (matrix, channel) {
        (Some(m), None) => Ok(Operand::Matrix(input::matrix_file(m)?)),
        (None, Some(c)) => Ok(Operand::Channel(input::channel_file(c)?)),
        _ => Err(CliError::Parse("exactly one of --matrix and --channel is required".into())),
    }
}

fn cmd_coef(a: &CoefArgs, seed: u64, out: &mut dyn Write) -> Result<i32, CliError> {
    let op = operand(&a.matrix, &a.channel)?;
    let opts = a.optimizer.options(seed);
    let start = Instant::now();
    let wrong = |what: &str| CliError::Parse(format!("this coefficient needs {what}"));
    let report: CoefficientReport = match (a.kind, &op) {
        (CoefKind::Tau, Operand::Matrix(m)) => dobrushin_tau(m)?,
        (CoefKind::Hopf, Operand::Matrix(m)) => hopf_opnorm_matrix(m)?,
        (CoefKind::Hopf, Operand::Channel(c)) => hopf_opnorm_hermitian_map(&c.phi_map(), &opts)?,
        (CoefKind::H, Operand::Matrix(m)) => h_matrix(m)?,
        (CoefKind::Qdobrushin, Operand::Channel(c)) => noncommutative_dobrushin(c, &opts)?,
        (CoefKind::Hphi, Operand::Channel(c)) => {
            let generator = c.phi_map().sub(&HermitianLinearMap::identity(c.dim()));
            h_hermitian_map(&generator, &opts)?
        }
        (CoefKind::Diam, Operand::Matrix(m)) => projective_diameter_matrix(m)?,
        (CoefKind::Diam, Operand::Channel(c)) => projective_diameter_map(&c.phi_map(), &opts)?,
        (CoefKind::Birkhoff, _) => {
            let mut d = match &op {
                Operand::Matrix(m) => projective_diameter_matrix(m)?,
                Operand::Channel(c) => projective_diameter_map(&c.phi_map(), &opts)?,
            };
            d.value = birkhoff_bound(d.value)?;
            d
        }
        (CoefKind::Maplip, Operand::Matrix(m)) => {
            let sampler = LogBoxSampler { n: m.ncols(), half_width: a.half_width };
            hilbert_lipschitz_homogeneous_map(&LinearMap(m.clone()), &sampler, a.samples, seed)?
        }
        (CoefKind::Tau | CoefKind::H | CoefKind::Maplip, _) => return Err(wrong("--matrix")),
        (CoefKind::Qdobrushin | CoefKind::Hphi, _) => return Err(wrong("--channel")),
    };
    let elapsed = start.elapsed().as_millis();
    output::write_json(out, &output::coefficient_report(&report, elapsed, seed))?;
    Ok(0)
}

fn bound_column(alpha: Option<f64>, m0: f64, t: f64) -> Option<f64> {
    alpha.map(|a| (a * t).exp() * m0)
}

fn cmd_sim(a: &SimArgs, seed: u64, out: &mut dyn Write) -> Result<i32, CliError> {
    if a.every == 0 {
        return Err(CliError::Parse("--every must be positive".into()));
    }
    let opts = a.optimizer.options(seed);
    match a.kind {
        SimKind::Markov => {
            let m = input::matrix_file(require(&a.matrix, "matrix")?)?;
            let x0 = RealVector::from_dvector(input::vector_arg(require(&a.x0, "x0")?)?)?;
            let seq = StochasticSequence::constant(m.clone())?;
            let traj = markov::iterate(&seq, &x0, a.steps)?;
            let alpha = if a.certify { Some(dobrushin_tau(&m)?.value.ln()) } else { a.alpha };
            let m0 = traj.metric[0];
            let rows = (0..traj.len()).step_by(a.every).map(|k| (k, traj.states[k].output_columns()));
            let rows: Vec<_> = rows.collect();
            output::write_csv(
                out,
                seq.dim(),
                rows.iter().map(|(k, s)| CsvRow {
                    t: traj.times[*k],
                    metric: traj.metric[*k],
                    bound: bound_column(alpha, m0, traj.times[*k]),
                    state: s,
                }),
            )?;
        }
        SimKind::Channel => {
            let ch = input::channel_file(require(&a.channel, "channel")?)?;
            let rho0 = match &a.x0_file {
                Some(p) => DensityMatrix::new(input::hermitian_file(p)?)?,
                None => {
                    let mut e = linalg::CVector::zeros(ch.dim());
                    e[0] = num_complex::Complex64::new(1.0, 0.0);
                    DensityMatrix::pure(&e)
                }
            };
            let traj = quantum::iterate_channel(&ch, &rho0, a.steps)?;
            let alpha = if a.certify { Some(noncommutative_dobrushin(&ch, &opts)?.value.ln()) } else { a.alpha };
            let m0 = traj.metric[0];
            let rows: Vec<_> = (0..traj.len()).step_by(a.every).map(|k| (k, traj.states[k].output_columns())).collect();
            output::write_csv(
                out,
                ch.dim(),
                rows.iter().map(|(k, s)| CsvRow {
                    t: traj.times[*k],
                    metric: traj.metric[*k],
                    bound: bound_column(alpha, m0, traj.times[*k]),
                    state: s,
                }),
            )?;
        }
        SimKind::Flow => {
            let spec = input::flow_file(require(&a.flow, "flow")?)?;
            let x0 = flow_state(&spec, &a.x0, &a.x0_file, "x0")?;
            let traj = integrate(&spec, &x0, a.t_end, a.dt)?;
            let m0 = traj.metric()[0];
            let rows: Vec<_> = (0..traj.len()).step_by(a.every).map(|k| (k, traj.state_columns(k))).collect();
            output::write_csv(
                out,
                spec.dim(),
                rows.iter().map(|(k, s)| CsvRow {
                    t: traj.times()[*k],
                    metric: traj.metric()[*k],
                    bound: bound_column(a.alpha, m0, traj.times()[*k]),
                    state: s,
                }),
            )?;
        }
    }
    Ok(0)
}

fn flow_state(
    spec: &VectorFieldSpec,
    vector: &Option<String>,
    file: &Option<PathBuf>,
    flag: &str,
) -> Result<FlowState, CliError> {
    if spec.is_matrix_model() {
        let p = match file {
            Some(p) => input::hermitian_file(p)?,
            None => return Err(CliError::Parse(format!("--{flag}-file is required for matrix models"))),
        };
        Ok(FlowState::Matrix(p))
    } else {
        Ok(FlowState::Vector(input::vector_arg(require(vector, flag)?)?))
    }
}

fn cmd_verify(a: &VerifyArgs, seed: u64, out: &mut dyn Write) -> Result<i32, CliError> {
    match a.kind {
        VerifyKind::Bound => {
            let spec = input::flow_file(require(&a.flow, "flow")?)?;
            let alpha = *require(&a.alpha, "alpha")?;
            let x0 = flow_state(&spec, &a.x0, &a.x0_file, "x0")?;
            let y0 = if a.y0.is_some() || a.y0_file.is_some() {
                Some(flow_state(&spec, &a.y0, &a.y0_file, "y0")?)
            } else {
                None
            };
            let metric = match a.metric {
                MetricArg::Hopf => DecayMetric::Hopf,
                MetricArg::Hilbert => DecayMetric::Hilbert,
            };
            if y0.is_none() && spec.is_matrix_model() && riccati_scalar_rate(&spec)?.is_none() {
                return Err(CliError::Domain(
                    "no scalar reference trajectory for this Riccati model; pass --y0-file".into(),
                ));
            }
            let traj = integrate(&spec, &x0, a.t_end, a.dt)?;
            let other: Option<FlowTrajectory> = match &y0 {
                Some(y) => Some(integrate(&spec, y, a.t_end, a.dt)?),
                None => None,
            };
            let reference = match (&other, &traj, metric) {
                (Some(o), _, _) => DecayReference::Trajectory(o),
                (None, FlowTrajectory::Vector(_), DecayMetric::Hopf) => DecayReference::Recorded,
                _ => DecayReference::ScaledIdentity,
            };
            let rep = verify_decay_with_slack(&traj, alpha, metric, reference, a.slack)?;
            let completed = traj.stop() == &conetract::trajectory::StopReason::Completed
                && other.as_ref().is_none_or(|o| o.stop() == &conetract::trajectory::StopReason::Completed);
            let v = json!({
                "pass": rep.pass,
                "worst_ratio": num(rep.worst_ratio),
                "worst_location": { "time": num(rep.worst_time) },
                "first_violation": rep.first_violation.map(num),
                "alpha": num(alpha),
                "points": rep.points,
                "completed": completed,
                "seed": seed,
            });
            output::write_json(out, &v)?;
            Ok(if rep.pass { 0 } else { 3 })
        }
        VerifyKind::Duality => {
            let ch = input::channel_file(require(&a.channel, "channel")?)?;
            let opts = a.optimizer.options(seed);
            let primal = sample_hopf_ratio(&ch, a.samples, seed)?;
            let dual = sample_dual_ratio(&ch, a.samples, seed)?;
            let coef = noncommutative_dobrushin(&ch, &opts)?;
            let gap = (primal.value - dual.value).abs();
            let pass = gap <= DUALITY_GAP
                && primal.value <= coef.value + DUALITY_ORDER_TOL
                && dual.value <= coef.value + DUALITY_ORDER_TOL;
            let (worst, side, w) = if primal.value >= dual.value {
                (primal.value, "oscillation", &primal.witness)
            } else {
                (dual.value, "trace-distance", &dual.witness)
            };
            let v = json!({
                "pass": pass,
                "worst_ratio": num(worst),
                "worst_location": { "side": side, "witness": output::witness(w) },
                "oscillation_ratio": num(primal.value),
                "trace_distance_ratio": num(dual.value),
                "coefficient": num(coef.value),
                "gap": num(gap),
                "seed": seed,
            });
            output::write_json(out, &v)?;
            Ok(if pass { 0 } else { 3 })
        }
    }
}

/// Entry point used by the binary.
pub fn main_entry() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with_args(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
