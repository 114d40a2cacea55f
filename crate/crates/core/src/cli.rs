//! Batch experiment driver behind the `pdhyp` binary.
//!
//! A run reads one declarative config (TOML, or JSON when the file ends in
//! `.json`; `preset:NAME` selects a built-in one), executes the task named by
//! the subcommand and writes `report.json` plus `series.csv` or `sweep.csv`
//! into the output directory. Exit codes: 0 when every verdict passes,
//! 1 when a verdict fails, 2 for configuration errors, 3 for numerical
//! failures.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::decay_diagnostics::{DecayStudy, DecayVariant, RadialOracle};
use crate::error::Error;
use crate::linear_propagator::{verify_mode_decay, PropagatorPlan};
use crate::littlewood_paley::{FilterBank, HybridNormSpec, Summation};
use crate::lyapunov_certificate::{log_grid, LyapunovCertificate};
use crate::nonlinear_solver::{functional_y, gaussian_data, lyapunov_monitor, NonlinearSolver, SolverConfig};
use crate::relaxation_limit::{convergence_study, sweep_data, SweepConfig};
use crate::spectral::{Grid, PhysicalField, SpectralField};
use crate::symbol_analysis::{check_structural_equivalences, direction_pair, elliptic_block_check, sk_condition, DirectionSample};
use crate::system_model::{
    isentropic_euler, linearized_euler, random_system, sk_counterexample, EulerParams, ExplicitSystem, RandomSystemOptions,
    SystemSpec, BUILTINS,
};

#[derive(Debug, Parser)]
#[command(name = "pdhyp", version, about = "Experiments on partially dissipative hyperbolic systems")]
pub struct Cli {
    /// Experiment config (TOML or JSON), or `preset:NAME`.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomized systems and data.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Structural checks and the SK condition.
    Analyze,
    /// Lyapunov certificate construction.
    Certify,
    /// Exact linear propagation against the certified envelope.
    SimulateLinear,
    /// Nonlinear run with functional monitoring.
    Simulate,
    /// Decay-exponent fits.
    Decay,
    /// Relaxation-limit epsilon sweep.
    Relax,
    /// Built-in systems and experiment presets.
    List,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Certify => "certify",
            Command::SimulateLinear => "simulate-linear",
            Command::Simulate => "simulate",
            Command::Decay => "decay",
            Command::Relax => "relax",
            Command::List => "list",
        }
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSystem(_) | Error::Dimension(_) | Error::Parameter { .. } | Error::Config(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// One of the built-in names, or `random` (uses `--seed`).
    #[serde(default = "default_builtin")]
    pub builtin: String,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Pressure coefficient; defaults to `1/gamma`.
    pub a: Option<f64>,
    #[serde(default = "one")]
    pub rhobar: f64,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default = "one")]
    pub friction: f64,
    #[serde(default = "one_usize")]
    pub n1: usize,
    #[serde(default = "one_usize")]
    pub n2: usize,
    /// Explicit matrices; takes precedence over `builtin`.
    pub explicit: Option<ExplicitSystem>,
}

fn default_builtin() -> String {
    "isentropic-euler".into()
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_gamma() -> f64 {
    1.4
}

impl Default for SystemBlock {
    fn default() -> Self {
        toml::from_str("").expect("empty system block")
    }
}

impl SystemBlock {
    pub fn build(&self, seed: u64) -> crate::Result<SystemSpec> {
        if let Some(e) = &self.explicit {
            return e.build();
        }
        match self.builtin.as_str() {
            "isentropic-euler" => isentropic_euler(EulerParams {
                d: self.d,
                gamma: self.gamma,
                a: self.a.unwrap_or(1.0 / self.gamma),
                rhobar: self.rhobar,
                epsilon: self.epsilon,
            }),
            "linearized-euler" => linearized_euler(self.d, self.friction),
            "sk-counterexample" => sk_counterexample(),
            "random" => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let opts = RandomSystemOptions {
                    n1: self.n1,
                    n2: self.n2,
                    d: self.d,
                    zero_a11: false,
                    break_sk: false,
                    nonsymmetric_l2: false,
                };
                random_system(&mut rng, opts)
            }
            other => Err(Error::Config(format!("system.builtin: unknown system `{other}` (expected one of {BUILTINS:?} or `random`)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Points per axis; a single value applies to every axis.
    #[serde(default = "default_modes")]
    pub modes: Vec<usize>,
    /// Box `[0, 2 pi period)` per axis.
    #[serde(default = "one")]
    pub period: f64,
}

fn default_modes() -> Vec<usize> {
    vec![64]
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { modes: default_modes(), period: 1.0 }
    }
}

impl GridBlock {
    pub fn build(&self, d: usize) -> crate::Result<Grid> {
        let modes = match self.modes.len() {
            1 => vec![self.modes[0]; d],
            n if n == d => self.modes.clone(),
            n => return Err(Error::Config(format!("grid.modes: {n} entries for a {d}-D system"))),
        };
        Grid::new(&modes, &vec![self.period; d])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    /// Time step; `cfl * (grid spacing in frequency)^-1` when absent.
    pub dt: Option<f64>,
    #[serde(default = "default_cfl_dt")]
    pub cfl: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
    pub smallness: Option<f64>,
}

fn default_cfl_dt() -> f64 {
    0.4
}
fn default_t_end() -> f64 {
    10.0
}
fn default_stride() -> usize {
    10
}
fn default_safety() -> f64 {
    1.5
}

impl Default for SolverBlock {
    fn default() -> Self {
        toml::from_str("").expect("empty solver block")
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    /// Zero-mean Gaussian bump at the box center.
    #[default]
    Gaussian,
    /// Smooth trigonometric profile used by the relaxation sweep.
    Trig,
    /// Random smooth field (uses `--seed`).
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    #[serde(default)]
    pub kind: DataKind,
    /// Amplitude of the first block.
    #[serde(default = "default_amp")]
    pub amplitude: f64,
    /// Amplitude of the damped block.
    #[serde(default)]
    pub z2_amplitude: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_amp() -> f64 {
    1e-2
}
fn default_width() -> f64 {
    2.0
}

impl Default for DataBlock {
    fn default() -> Self {
        toml::from_str("").expect("empty data block")
    }
}

impl DataBlock {
    pub fn build(&self, spec: &SystemSpec, grid: &Grid, seed: u64) -> crate::Result<SpectralField> {
        let (n1, n2) = (spec.dims.n1, spec.dims.n2);
        let amps: Vec<f64> = (0..n1).map(|_| self.amplitude).chain((0..n2).map(|_| self.z2_amplitude)).collect();
        match self.kind {
            DataKind::Gaussian => {
                let center: Vec<f64> = grid.periods().iter().map(|l| std::f64::consts::PI * l).collect();
                Ok(gaussian_data(grid, &amps, self.width, &center))
            }
            DataKind::Trig => {
                let cfg = SweepConfig { modes: grid.modes()[0], period: grid.periods()[0], ..Default::default() };
                let z = sweep_data(n1, n2, grid.dim(), &cfg, self.amplitude)?;
                if z.grid != *grid {
                    return Err(Error::Config("data.kind = trig needs a cubic grid".into()));
                }
                Ok(z)
            }
            DataKind::Random => {
                use rand::Rng;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let phases: Vec<[f64; 4]> = (0..n1 + n2).map(|_| rng.random()).collect();
                let f = PhysicalField::from_fn(grid, n1 + n2, |x| {
                    let s: f64 = x.iter().zip(grid.periods()).map(|(v, l)| v / l).sum();
                    phases
                        .iter()
                        .zip(&amps)
                        .map(|(p, a)| a * ((s + 6.0 * p[0]).sin() + p[1] * (2.0 * s + 6.0 * p[2]).cos() + 0.5 * p[3] * (3.0 * s).sin()))
                        .collect()
                });
                let mut z = f.to_spectral();
                z.remove_mean();
                z.dealias();
                Ok(z)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertifyBlock {
    #[serde(default = "default_dirs")]
    pub directions: usize,
    #[serde(default = "default_radii")]
    pub radii: usize,
}

fn default_dirs() -> usize {
    32
}
fn default_radii() -> usize {
    64
}

impl Default for CertifyBlock {
    fn default() -> Self {
        Self { directions: default_dirs(), radii: default_radii() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    #[serde(default = "default_lyap_slack")]
    pub lyapunov_slack: f64,
    #[serde(default = "default_y_bound")]
    pub functional_bound: f64,
    #[serde(default = "default_energy_tol")]
    pub energy_tolerance: f64,
}

fn default_lyap_slack() -> f64 {
    1e-8
}
fn default_y_bound() -> f64 {
    10.0
}
fn default_energy_tol() -> f64 {
    1e-7
}

impl Default for SimulateBlock {
    fn default() -> Self {
        toml::from_str("").expect("empty simulate block")
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    /// Continuous-frequency oracle for the linearized Euler flow.
    Oracle,
    /// Fit on a nonlinear run.
    #[default]
    Nonlinear,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DecayBlock {
    #[serde(default)]
    pub mode: DecayMode,
    #[serde(default = "half")]
    pub sigma1: f64,
    #[serde(default = "default_variant")]
    pub variant: DecayVariant,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    /// Tolerance on the low-frequency slope.
    #[serde(default = "default_low_tol")]
    pub low_tolerance: f64,
    /// Tolerance on the high-frequency and damped-mode slopes.
    #[serde(default = "default_rate_tol")]
    pub rate_tolerance: f64,
    /// Oracle time samples.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn half() -> f64 {
    0.5
}
fn default_variant() -> DecayVariant {
    DecayVariant::Strong
}
fn default_window() -> [f64; 2] {
    [1.0, 32.0]
}
fn default_low_tol() -> f64 {
    0.1
}
fn default_rate_tol() -> f64 {
    0.2
}
fn default_samples() -> usize {
    60
}

impl Default for DecayBlock {
    fn default() -> Self {
        toml::from_str("").expect("empty decay block")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RelaxBlock {
    #[serde(default = "default_eps")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_tau")]
    pub tau_end: f64,
    #[serde(default = "default_dt_factor")]
    pub dt_factor: f64,
    /// Accepted slope windows.
    #[serde(default = "default_rate_window")]
    pub rate_window: [f64; 2],
    #[serde(default = "default_half_window")]
    pub half_rate_window: [f64; 2],
}

fn default_eps() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}
fn default_tau() -> f64 {
    2.0
}
fn default_dt_factor() -> f64 {
    0.1
}
fn default_rate_window() -> [f64; 2] {
    [0.8, 1.2]
}
fn default_half_window() -> [f64; 2] {
    [0.4, 0.6]
}

impl Default for RelaxBlock {
    fn default() -> Self {
        toml::from_str("").expect("empty relax block")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    /// When present, must name the subcommand being run.
    pub kind: Option<String>,
    #[serde(default)]
    pub certify: CertifyBlock,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub decay: DecayBlock,
    #[serde(default)]
    pub relax: RelaxBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    /// Extra hybrid norms added as series columns.
    #[serde(default)]
    pub norms: Vec<HybridNormSpec>,
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub task: TaskBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn parse_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn parse_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{e}")))
    }

    /// Loads a file (JSON by extension, TOML otherwise) or a `preset:NAME`.
    pub fn load(source: &str) -> CliResult<Self> {
        if let Some(name) = source.strip_prefix("preset:") {
            let p = PRESETS
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`")))?;
            return Self::parse_toml(p.config);
        }
        let text = std::fs::read_to_string(source).map_err(|e| CliError::Config(format!("{source}: {e}")))?;
        let parsed = if source.ends_with(".json") { Self::parse_json(&text) } else { Self::parse_toml(&text) };
        parsed.map_err(|e| CliError::Config(format!("{source}: {}", e.to_string().trim_start_matches("config error: "))))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn dt(&self, grid: &Grid) -> f64 {
        self.solver.dt.unwrap_or(self.solver.cfl / grid.max_retained_xi())
    }

    fn solver_config(&self, grid: &Grid, keep_snapshots: bool) -> SolverConfig {
        SolverConfig {
            dt: self.dt(grid),
            t_end: self.solver.t_end,
            record_stride: self.solver.record_stride,
            cfl_safety: self.solver.cfl_safety,
            smallness: self.solver.smallness,
            keep_snapshots,
        }
    }
}

/// A preconfigured experiment.
pub struct Preset {
    pub name: &'static str,
    pub command: &'static str,
    pub description: &'static str,
    pub config: &'static str,
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "linear-decay-d2",
        command: "decay",
        description: "linear low-frequency decay in 2-D from data in B^{-1}_{2,inf} (sigma1 = 1, alpha1 = 1/2), radial oracle",
        config: r#"
[system]
builtin = "linearized-euler"
d = 2
[task.decay]
mode = "oracle"
sigma1 = 1.0
variant = "baseline"
window = [10.0, 1000.0]
low_tolerance = 0.05
"#,
    },
    Preset {
        name: "relax-sweep-euler",
        command: "relax",
        description: "strong relaxation limit of 1-D isentropic Euler, eps in {0.1, 0.05, 0.025}",
        config: r#"
[system]
builtin = "isentropic-euler"
[grid]
modes = [64]
period = 1.0
[data]
kind = "trig"
amplitude = 0.05
[task.relax]
epsilons = [0.1, 0.05, 0.025]
"#,
    },
    Preset {
        name: "euler-global-d1",
        command: "simulate",
        description: "small-data global run of 1-D isentropic Euler with Lyapunov and functional monitoring",
        config: r#"
[system]
builtin = "isentropic-euler"
[grid]
modes = [256]
period = 6.0
[solver]
t_end = 50.0
record_stride = 5
[data]
amplitude = 1e-2
z2_amplitude = 5e-3
"#,
    },
    Preset {
        name: "euler-decay-d1",
        command: "decay",
        description: "nonlinear decay exponents of 1-D isentropic Euler on a large torus (sigma1 = 1/2, strong variant)",
        config: r#"
[system]
builtin = "isentropic-euler"
[grid]
modes = [1024]
period = 64.0
[solver]
t_end = 32.0
record_stride = 2
[data]
amplitude = 1e-2
width = 2.0
[task.decay]
mode = "nonlinear"
sigma1 = 0.5
variant = "strong"
window = [1.0, 32.0]
"#,
    },
];

/// One named pass/fail check in `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// Plain-words statement of the property being checked.
    pub anchor: String,
    pub value: f64,
    /// Human-readable acceptance rule.
    pub rule: String,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, anchor: &str, value: f64, rule: String, passed: bool) -> Self {
        Self { name: name.into(), anchor: anchor.into(), value, rule, passed }
    }

    fn at_most(name: &str, anchor: &str, value: f64, limit: f64) -> Self {
        Self::new(name, anchor, value, format!("<= {limit:e}"), value <= limit)
    }

    fn within(name: &str, anchor: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, anchor, value, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&value))
    }

    fn flag(name: &str, anchor: &str, ok: bool) -> Self {
        Self::new(name, anchor, if ok { 1.0 } else { 0.0 }, "== 1".into(), ok)
    }
}

/// Header plus rows of numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    /// Comma-separated, header row, `.` decimal, LF line endings.
    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Numerical(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Numerical(e.to_string()))
    }
}

/// Result of one task before it is written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: Value,
    pub series: Option<Table>,
    pub sweep: Option<Table>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn analyze(cfg: &ExperimentConfig, seed: u64) -> CliResult<Outcome> {
    let spec = cfg.system.build(seed)?;
    let validation = spec.validate();
    let sample = DirectionSample::default_for(spec.d());
    let sk = sk_condition(&spec, &sample)?;
    let mut agree = true;
    let mut worst_abscissa = f64::INFINITY;
    for w in &sample.directions {
        let (a, b) = direction_pair(&spec, w)?;
        let rep = check_structural_equivalences(&a, &b)?;
        agree &= rep.agree;
        worst_abscissa = worst_abscissa.min(rep.abscissa);
    }
    let elliptic = elliptic_block_check(&spec, &sample).ok();
    let checks = vec![
        Check::flag("structure", "symmetric fluxes and a coercive damping block", validation.passed()),
        Check::flag("sk-equivalence", "the four SK characterizations agree on every sampled direction", agree),
    ];
    let results = json!({
        "system": spec.name,
        "n1": spec.dims.n1,
        "n2": spec.dims.n2,
        "d": spec.d(),
        "sk": sk.holds,
        "sk_witness": sk.witness,
        "sampled_directions": sample.len(),
        "min_abscissa": worst_abscissa,
        "symmetry_residual": validation.symmetry_residual,
        "coercivity": validation.coercivity,
        "failures": validation.failures,
        "detected_flags": validation.detected_flags,
        "elliptic_lambda_min": elliptic.map(|e| e.lambda_min),
    });
    Ok(Outcome { checks, results, series: None, sweep: None })
}

fn certificate(spec: &SystemSpec, block: &CertifyBlock) -> CliResult<LyapunovCertificate> {
    let extra = if spec.d() > 1 { block.directions.saturating_sub(2 * spec.d()) } else { 0 };
    let sample = DirectionSample::new(spec.d(), extra);
    Ok(LyapunovCertificate::construct(spec, &sample, &log_grid(1e-3, 1e3, block.radii))?)
}

fn certify(cfg: &ExperimentConfig, seed: u64) -> CliResult<Outcome> {
    let spec = cfg.system.build(seed)?;
    let cert = certificate(&spec, &cfg.task.certify)?;
    let v = cert.reverify(&spec, 1.0)?;
    let checks = vec![
        Check::at_most("derivative-form", "the derivative form is negative semidefinite on the radius and direction grid", v.max_residual, 1e-10),
        Check::at_most("cross-form", "the functional stays between half and twice the squared norm", v.cross_norm, 0.5),
    ];
    let results = serde_json::to_value(&cert).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(Outcome { checks, results, series: None, sweep: None })
}

fn sample_times(t_end: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|k| t_end * k as f64 / count as f64).collect()
}

fn simulate_linear(cfg: &ExperimentConfig, seed: u64) -> CliResult<Outcome> {
    let spec = cfg.system.build(seed)?;
    let grid = cfg.grid.build(spec.d())?;
    let plan = PropagatorPlan::new(&spec, &grid)?;
    let cert = certificate(&spec, &cfg.task.certify)?;
    let z0 = cfg.data.build(&spec, &grid, seed)?;
    let count = ((cfg.solver.t_end / cfg.dt(&grid)) as usize / cfg.solver.record_stride.max(1)).clamp(1, 400);
    let times = sample_times(cfg.solver.t_end, count);
    let bank = FilterBank::new(&grid, Default::default());
    let thr = 1.0 / cert.kappa;
    let mut header = vec!["t", "l2", "low", "high"];
    let names: Vec<String> = (0..cfg.norms.len()).map(|k| format!("norm{k}")).collect();
    header.extend(names.iter().map(|s| s.as_str()));
    let mut table = Table::new(&header);
    let (s_low, s_high) = crate::nonlinear_solver::lyapunov_regularities(spec.d());
    for &t in &times {
        let z = plan.propagate(&z0, t)?;
        let b = bank.block_norms(&z, 0..z.n());
        let mut row = vec![t, z.l2_norm(), b.low(s_low, thr), b.high(s_high, thr)];
        row.extend(cfg.norms.iter().map(|n| n.evaluate(&bank, &z)));
        table.rows.push(row);
    }
    let envelope = verify_mode_decay(&plan, &cert, std::slice::from_ref(&z0), &times)?;
    let checks = vec![Check::at_most(
        "pointwise-envelope",
        "every Fourier mode stays below twice its initial size times the certified exponential envelope",
        envelope.violations as f64,
        0.0,
    )];
    let results = json!({ "envelope": envelope, "kappa": cert.kappa, "c_decay": cert.c_decay });
    Ok(Outcome { checks, results, series: Some(table), sweep: None })
}

fn simulate(cfg: &ExperimentConfig, seed: u64) -> CliResult<Outcome> {
    let spec = cfg.system.build(seed)?;
    let grid = cfg.grid.build(spec.d())?;
    let solver = NonlinearSolver::new(&spec, &grid, None)?;
    let z0 = cfg.data.build(&spec, &grid, seed)?;
    let needs_snapshots = cfg.norms.iter().any(|n| n.p != crate::spectral::Lp::Two);
    let report = solver.solve(&z0, &cfg.solver_config(&grid, needs_snapshots))?;
    let block = &cfg.task.simulate;
    let last = report.records.len().saturating_sub(1);
    let y0 = functional_y(&report, 0).total;
    let y = functional_y(&report, last).total;
    let lyap = lyapunov_monitor(&report, block.lyapunov_slack);
    let ratio = if y0 > 0.0 { y / y0 } else { 0.0 };
    let checks = vec![
        Check::flag("completed", "the run reached its horizon without CFL, smallness or non-finite aborts", report.abort.is_none()),
        Check::at_most("lyapunov", "the block Lyapunov functional plus its integrated dissipation never increases", lyap.worst_excess - lyap.slack, 0.0),
        Check::at_most("functional-bound", "the trajectory functional stays within a fixed multiple of its data value", ratio, block.functional_bound),
        Check::at_most("energy-identity", "the discrete energy balance matches the energy identity", report.energy_residual_max, block.energy_tolerance),
    ];
    let mut header = vec!["t", "energy", "sup", "smallness", "lyapunov", "dissipation", "z_low", "z_high", "w_low"];
    let names: Vec<String> = (0..cfg.norms.len()).map(|k| format!("norm{k}")).collect();
    header.extend(names.iter().map(|s| s.as_str()));
    let mut table = Table::new(&header);
    let thr = report.threshold;
    for (k, r) in report.records.iter().enumerate() {
        let mut row = vec![
            r.t,
            r.energy,
            r.sup_norm,
            r.smallness_norm,
            r.lyap,
            r.lyap_h,
            r.z.low(report.s_low, thr),
            r.z.high(report.s_high, thr),
            r.w.low(report.s_low, thr),
        ];
        for n in &cfg.norms {
            row.push(if n.p == crate::spectral::Lp::Two && n.q == Summation::Sum {
                r.z.hybrid(n.s, n.s_high, n.threshold)
            } else {
                n.evaluate(&solver.bank, &report.snapshots[k])
            });
        }
        table.rows.push(row);
    }
    let results = json!({
        "steps": report.steps_taken,
        "dt": report.dt,
        "abort": report.abort,
        "lyapunov": lyap,
        "functional_y0": y0,
        "functional_y": y,
        "energy_residual_max": report.energy_residual_max,
        "smallness_threshold": report.smallness_threshold,
        "final_hash": report.final_hash,
    });
    Ok(Outcome { checks, results, series: Some(table), sweep: None })
}

fn decay(cfg: &ExperimentConfig, seed: u64) -> CliResult<Outcome> {
    let block = &cfg.task.decay;
    let window = (block.window[0], block.window[1]);
    match block.mode {
        DecayMode::Oracle => {
            let spec = cfg.system.build(seed)?;
            if spec.name != "linearized-euler" {
                return Err(CliError::Config("task.decay.mode = oracle needs system.builtin = linearized-euler".into()));
            }
            let oracle = RadialOracle::new(spec.d(), block.sigma1, cfg.system.friction)?;
            let (ds, fit) = oracle.fit_low(window, block.samples)?;
            let times = log_grid(window.0, window.1, block.samples);
            let s = spec.d() as f64 / 2.0 - 1.0;
            let mut table = Table::new(&["t", "low", "envelope"]);
            for &t in &times {
                table.rows.push(vec![t, oracle.block_norms(t).low(s, cfg.system.friction), fit.envelope(ds.c0, t)]);
            }
            let checks = vec![Check::within(
                "low-frequency-slope",
                "linear low-frequency decay exponent from negative-regularity data",
                fit.slope,
                fit.theory - block.low_tolerance,
                fit.theory + block.low_tolerance,
            )];
            Ok(Outcome { checks, results: json!({ "spec": ds, "fit": fit }), series: Some(table), sweep: None })
        }
        DecayMode::Nonlinear => {
            let spec = cfg.system.build(seed)?;
            let grid = cfg.grid.build(spec.d())?;
            let solver = NonlinearSolver::new(&spec, &grid, None)?;
            let z0 = cfg.data.build(&spec, &grid, seed)?;
            let report = solver.solve(&z0, &cfg.solver_config(&grid, false))?.into_result()?;
            let study = DecayStudy::run(&report, block.sigma1, block.variant, window)?;
            let series = DecayStudy::series(&report, block.variant);
            let mut table = Table::new(&["t", "low", "high", "damped", "z2_low", "negative", "low_envelope"]);
            for (k, r) in report.records.iter().enumerate() {
                table.rows.push(vec![
                    r.t,
                    series[0][k],
                    series[1][k],
                    series[2][k],
                    series[3][k],
                    study.negative.values[k],
                    study.low.envelope(study.spec.c0, r.t),
                ]);
            }
            let tol = block.rate_tolerance;
            let checks = vec![
                Check::within("low-frequency-slope", "low-frequency decay exponent", study.low.slope, study.low.theory - block.low_tolerance, study.low.theory + block.low_tolerance),
                Check::within("high-frequency-slope", "high-frequency decay exponent", study.high.slope, study.high.theory - tol, study.high.theory + tol),
                Check::within("damped-mode-slope", "decay exponent of the damped-mode time derivative", study.damped.slope, study.damped.theory - tol, study.damped.theory + tol),
                Check::at_most("negative-regularity", "the negative Besov norm stays bounded by a fixed multiple of its data value", study.negative.ratio, 3.0),
            ];
            let results = json!({
                "spec": study.spec,
                "low": study.low,
                "high": study.high,
                "damped": study.damped,
                "z2_low": study.z2_low,
                "negative_ratio": study.negative.ratio,
                "final_hash": report.final_hash,
            });
            Ok(Outcome { checks, results, series: Some(table), sweep: None })
        }
    }
}

fn relax(cfg: &ExperimentConfig, seed: u64) -> CliResult<Outcome> {
    let spec = cfg.system.build(seed)?;
    let grid = cfg.grid.build(spec.d())?;
    let block = &cfg.task.relax;
    let z0 = cfg.data.build(&spec, &grid, seed)?;
    let sweep_cfg = SweepConfig { modes: grid.modes()[0], period: grid.periods()[0], tau_end: block.tau_end, dt_factor: block.dt_factor };
    let sweep = convergence_study(&spec, &block.epsilons, &z0, &sweep_cfg)?;
    let [lo, hi] = block.rate_window;
    let [hlo, hhi] = block.half_rate_window;
    let checks = vec![
        Check::within("limit-error-rate", "sup-in-time error between the first block and the limit solution is of order eps", sweep.slopes.dn_sup, lo, hi),
        Check::within("damped-mode-rate", "time-integrated rescaled damped mode is of order eps", sweep.slopes.w_l1, lo, hi),
        Check::within("z2-l2-rate", "time-square-integrated damped block is of order eps^(1/2)", sweep.slopes.z2_l2, hlo, hhi),
        Check::flag("monotone", "the limit error decreases along the sweep", sweep.monotone),
    ];
    let mut table = Table::new(&["epsilon", "dn_sup", "dn_l1", "w_l1", "z2_l2", "s_l1", "w_gap_l1", "steps", "hyperbolic_period"]);
    for r in &sweep.rows {
        table.rows.push(vec![r.epsilon, r.dn_sup, r.dn_l1, r.w_l1, r.z2_l2, r.s_l1, r.w_gap_l1, r.steps as f64, r.hyperbolic_period]);
    }
    let results = serde_json::to_value(&sweep).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(Outcome { checks, results, series: None, sweep: Some(table) })
}

/// Names, commands and resolved parameters of the presets.
pub fn list_builtins() -> Value {
    let presets: Vec<Value> = PRESETS
        .iter()
        .map(|p| {
            let cfg = ExperimentConfig::parse_toml(p.config).expect("presets parse");
            let mut extra = json!({});
            if p.command == "decay" {
                let d = cfg.system.d;
                let a = crate::decay_diagnostics::alpha1(cfg.task.decay.sigma1, d, cfg.task.decay.variant).ok();
                extra = json!({ "d": d, "sigma1": cfg.task.decay.sigma1, "alpha1": a });
            }
            if p.command == "relax" {
                extra = json!({ "epsilons": cfg.task.relax.epsilons });
            }
            json!({ "name": p.name, "command": p.command, "description": p.description, "parameters": extra, "config": cfg })
        })
        .collect();
    json!({
        "systems": BUILTINS.iter().chain(std::iter::once(&"random")).collect::<Vec<_>>(),
        "system_parameters": SystemBlock::default(),
        "presets": presets,
    })
}

/// Runs one task and returns its outcome (no files written).
pub fn execute(command: Command, cfg: &ExperimentConfig, seed: u64) -> CliResult<Outcome> {
    if let Some(kind) = &cfg.task.kind {
        if kind != command.name() {
            return Err(CliError::Config(format!("task.kind = `{kind}` but the subcommand is `{}`", command.name())));
        }
    }
    match command {
        Command::Analyze => analyze(cfg, seed),
        Command::Certify => certify(cfg, seed),
        Command::SimulateLinear => simulate_linear(cfg, seed),
        Command::Simulate => simulate(cfg, seed),
        Command::Decay => decay(cfg, seed),
        Command::Relax => relax(cfg, seed),
        Command::List => Ok(Outcome { checks: Vec::new(), results: list_builtins(), series: None, sweep: None }),
    }
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Numerical(format!("writing {name}: {e}"));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

/// The full `report.json` document.
pub fn report_json(command: Command, cfg: &ExperimentConfig, seed: u64, outcome: &Outcome) -> Value {
    json!({
        "tool": "pdhyp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.name(),
        "seed": seed,
        "config": cfg,
        "config_sha256": cfg.content_hash(),
        "passed": outcome.passed(),
        "checks": outcome.checks,
        "results": outcome.results,
    })
}

/// Executes a command and writes its artifacts; returns whether all verdicts passed.
pub fn run(cli: &Cli) -> CliResult<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // A global pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = match &cli.config {
        Some(src) => ExperimentConfig::load(src)?,
        None if cli.command == Command::List => ExperimentConfig::default(),
        None => return Err(CliError::Config("--config is required for this subcommand".into())),
    };
    let outcome = execute(cli.command, &cfg, cli.seed)?;
    let dir = cli.out.clone().or_else(|| cfg.output.dir.clone());
    // Write errors on stdout (a closed pipe, say) must not abort the run.
    let mut stdout = std::io::stdout().lock();
    if cli.command == Command::List {
        let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&outcome.results).expect("json"));
    } else {
        for c in &outcome.checks {
            let _ = writeln!(stdout, "{} {}: {:e} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.rule);
        }
    }
    drop(stdout);
    let dir = match dir {
        Some(d) => d,
        None if cli.command == Command::List => return Ok(true),
        None => PathBuf::from("pdhyp-out"),
    };
    let report = report_json(cli.command, &cfg, cli.seed, &outcome);
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numerical(e.to_string()))? + "\n";
    write_atomic(&dir, "report.json", text.as_bytes())?;
    if let Some(t) = &outcome.series {
        write_atomic(&dir, "series.csv", &t.to_csv()?)?;
    }
    if let Some(t) = &outcome.sweep {
        write_atomic(&dir, "sweep.csv", &t.to_csv()?)?;
    }
    Ok(outcome.passed())
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("pdhyp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
