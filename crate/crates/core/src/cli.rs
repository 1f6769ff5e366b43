//! Command-line front end: layered configuration (defaults, then a TOML
//! file, then flags), dispatch to the library, and CSV plus metadata output.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{measured_growth_rate, random_initial, run_to_stationary, SimulationConfig};
use crate::equilibrium::PopulationField;
use crate::error::{Error, ErrorKind, Result};
use crate::experiments::{csv, format_float, run_sweep_with, Family, SweepPlan, STANDARD_TAU_M};
use crate::geometry::{Grid, Quadrature};
use crate::params::ModelParams;
use crate::spectral::{
    critical_curve, critical_points, eigen_table, linear_grid, mode_growth, sign_changes, PlaneAxis, PlaneSpec,
    ScanSpec,
};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "RACETRACK_OUTPUT";
const DEFAULT_OUTPUT: &str = "racetrack-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Exit status for an error of the given kind.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Numerical => EXIT_NUMERICAL,
        ErrorKind::Io => EXIT_IO,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nodes: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    /// Relative amplitude of the random perturbation of the uniform state.
    pub amplitude: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { amplitude: 0.01 }
    }
}

/// Evenly spaced values `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl RangeSpec {
    fn values(&self, name: &'static str) -> Result<Vec<f64>> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) || self.count == 0 {
            return Err(Error::invalid(
                name,
                format!(
                    "need lo <= hi and count >= 1, got {}:{}:{}",
                    self.lo, self.hi, self.count
                ),
            ));
        }
        Ok(linear_grid(self.lo, self.hi, self.count))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaneConfig {
    pub axis: PlaneAxis,
    /// `tau_m` window; defaults depend on the axis.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    pub x_resolution: usize,
    pub y_resolution: usize,
    pub tol: f64,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        let spec = PlaneSpec::default_for(PlaneAxis::TauA);
        Self {
            axis: spec.axis,
            x_range: None,
            y_range: None,
            x_resolution: spec.x_resolution,
            y_resolution: spec.y_resolution,
            tol: spec.tol,
        }
    }
}

impl PlaneConfig {
    fn spec(&self) -> PlaneSpec {
        let defaults = PlaneSpec::default_for(self.axis);
        PlaneSpec {
            axis: self.axis,
            x_range: self.x_range.unwrap_or(defaults.x_range),
            y_range: self.y_range.unwrap_or(defaults.y_range),
            x_resolution: self.x_resolution,
            y_resolution: self.y_resolution,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    /// Fourier modes for `eigen`, `critical`, `curve` and `heatmap`.
    pub modes: Vec<i64>,
    pub tau_m_grid: RangeSpec,
    pub scan: ScanSpec,
    pub plane: PlaneConfig,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            modes: vec![1],
            tau_m_grid: RangeSpec {
                lo: 0.05,
                hi: 10.0,
                count: 400,
            },
            scan: ScanSpec::default(),
            plane: PlaneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub modes: Vec<i64>,
    /// Relative amplitude of the cosine seed.
    pub amplitude: f64,
    /// Number of time steps fitted.
    pub horizon: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            modes: vec![1, 2, 3, 4],
            amplitude: 1e-4,
            horizon: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub tau_m: Vec<f64>,
    pub family: Family,
    pub family_values: Vec<f64>,
    pub seeds: usize,
    pub workers: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            tau_m: STANDARD_TAU_M.to_vec(),
            family: Family::TauA,
            family_values: vec![2.0],
            seeds: 5,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Root directory for run folders; falls back to the environment
    /// variable, then to `racetrack-out` in the working directory.
    pub root: Option<PathBuf>,
}

/// Everything a command needs. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed of the initial perturbation for `simulate`; master seed for `sweep`.
    pub seed: u64,
    pub params: ModelParams,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub simulation: SimulationConfig,
    pub spectral: SpectralConfig,
    pub probe: ProbeConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            params: ModelParams::default(),
            grid: GridConfig::default(),
            initial: InitialConfig::default(),
            simulation: SimulationConfig {
                snapshot_every: 0,
                ..SimulationConfig::default()
            },
            spectral: SpectralConfig::default(),
            probe: ProbeConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Checks shared by every command; command-specific bounds are checked
    /// by the library calls themselves before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        Grid::new(self.grid.nodes, self.params.rho)?;
        self.simulation.validate()?;
        if let Some(n) = self.spectral.modes.iter().chain(&self.probe.modes).find(|n| **n == 0) {
            return Err(Error::invalid(
                "modes",
                format!("mode {n} is excluded (mass conservation)"),
            ));
        }
        if self.spectral.modes.is_empty() {
            return Err(Error::invalid("modes", "list must not be empty"));
        }
        self.spectral.tau_m_grid.values("tau_m_grid")?;
        self.spectral.scan.validate()?;
        self.spectral.plane.spec().validate()
    }

    fn sweep_plan(&self) -> SweepPlan {
        SweepPlan {
            tau_m: self.sweep.tau_m.clone(),
            family: self.sweep.family,
            family_values: self.sweep.family_values.clone(),
            seeds: self.sweep.seeds,
            base: self.params,
            master_seed: self.seed,
            nodes: self.grid.nodes,
            amplitude: self.initial.amplitude,
            simulation: self.simulation,
            workers: self.sweep.workers,
        }
    }

    /// Short digest of everything that affects results. The output root is
    /// excluded so that moving the output does not rename runs.
    pub fn digest(&self, command: &str) -> String {
        let mut canonical = self.clone();
        canonical.output.root = None;
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(b"\n");
        hasher.update(canonical.to_toml().as_bytes());
        hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "racetrack",
    version,
    about = "Core-periphery economy on a circle: stability analysis, simulations and sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalue table over Fourier modes and a tau_m grid.
    Eigen(Overrides),
    /// Critical manufacturing transport costs of each mode.
    Critical(Overrides),
    /// Zero level set of the eigenvalue in the (tau_m, tau_a or eta) plane.
    Curve(Overrides),
    /// Eigenvalue sampled on the (tau_m, tau_a or eta) plane.
    Heatmap(Overrides),
    /// Run the migration dynamics from a random start to a stationary state.
    Simulate(Overrides),
    /// Compare measured growth of small cosine perturbations with theory.
    Probe(Overrides),
    /// Mean spike counts over seeds across a tau_m grid and a parameter family.
    Sweep(Overrides),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Eigen(_) => "eigen",
            Command::Critical(_) => "critical",
            Command::Curve(_) => "curve",
            Command::Heatmap(_) => "heatmap",
            Command::Simulate(_) => "simulate",
            Command::Probe(_) => "probe",
            Command::Sweep(_) => "sweep",
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Command::Eigen(o)
            | Command::Critical(o)
            | Command::Curve(o)
            | Command::Heatmap(o)
            | Command::Simulate(o)
            | Command::Probe(o)
            | Command::Sweep(o) => o,
        }
    }
}

/// Flags override the matching configuration keys.
#[derive(Debug, Clone, Default, Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output root directory.
    #[arg(long, value_name = "DIR", env = OUTPUT_ENV)]
    output: Option<PathBuf>,
    /// Master seed of the random initial conditions.
    #[arg(long)]
    seed: Option<u64>,

    /// Expenditure share of manufactured goods, in (0, 1).
    #[arg(long)]
    mu: Option<f64>,
    /// Elasticity of substitution of manufactured varieties (> 1).
    #[arg(long)]
    sigma: Option<f64>,
    /// Elasticity of substitution of agricultural varieties (> 1).
    #[arg(long)]
    eta: Option<f64>,
    /// Agricultural transport cost per unit distance.
    #[arg(long)]
    tau_a: Option<f64>,
    /// Manufacturing transport cost per unit distance.
    #[arg(long)]
    tau_m: Option<f64>,
    /// Radius of the circle.
    #[arg(long)]
    rho: Option<f64>,
    /// Migration speed.
    #[arg(long)]
    gamma: Option<f64>,

    /// Number of grid nodes (even, at least 4).
    #[arg(long)]
    nodes: Option<usize>,
    /// Relative amplitude of the random initial perturbation.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Time step of the migration dynamics.
    #[arg(long)]
    dt: Option<f64>,
    /// Stop once no density moves more than this in one step.
    #[arg(long)]
    stop_tol: Option<f64>,
    /// Give up after this many time steps.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Record the density every this many steps (0 disables).
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Tolerance of the equilibrium fixed-point iteration.
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Kernel quadrature: `cell-integrated` or `riemann`.
    #[arg(long, value_parser = parse_quadrature)]
    quadrature: Option<Quadrature>,

    /// Fourier modes: a range `1..6` (inclusive) or a list `1,2,5`.
    #[arg(long = "n", value_name = "MODES", value_parser = parse_modes)]
    modes: Option<Modes>,
    /// Evenly spaced tau_m values `lo:hi:count`.
    #[arg(long, value_name = "LO:HI:COUNT", value_parser = parse_range)]
    tau_m_grid: Option<RangeSpec>,
    /// Second axis of the stability plane.
    #[arg(long, value_parser = parse_axis)]
    axis: Option<PlaneAxis>,
    /// tau_m window of the plane, `lo:hi`.
    #[arg(long, value_name = "LO:HI", value_parser = parse_pair)]
    x_range: Option<(f64, f64)>,
    /// Window of the second axis, `lo:hi`.
    #[arg(long, value_name = "LO:HI", value_parser = parse_pair)]
    y_range: Option<(f64, f64)>,
    /// Samples along tau_m in the stability plane.
    #[arg(long)]
    x_resolution: Option<usize>,
    /// Samples along the second axis of the stability plane.
    #[arg(long)]
    y_resolution: Option<usize>,

    /// Number of time steps fitted by `probe`.
    #[arg(long)]
    horizon: Option<usize>,
    /// Relative amplitude of the cosine seed used by `probe`.
    #[arg(long)]
    probe_amplitude: Option<f64>,

    /// Parameter varied across sweep curves.
    #[arg(long, value_parser = parse_axis)]
    family: Option<Family>,
    /// Comma-separated values of the family parameter.
    #[arg(long, value_name = "LIST", value_parser = parse_list)]
    family_values: Option<FloatList>,
    /// Comma-separated tau_m values of the sweep.
    #[arg(long, value_name = "LIST", value_parser = parse_list)]
    tau_m_list: Option<FloatList>,
    /// Random initial conditions per sweep cell.
    #[arg(long)]
    seeds: Option<usize>,
    /// Concurrent simulations in a sweep.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Modes(Vec<i64>);

#[derive(Debug, Clone, PartialEq)]
struct FloatList(Vec<f64>);

fn parse_modes(text: &str) -> std::result::Result<Modes, String> {
    if let Some((a, b)) = text.split_once("..") {
        let lo: i64 = a.trim().parse().map_err(|e| format!("bad range start `{a}`: {e}"))?;
        let hi: i64 = b.trim().parse().map_err(|e| format!("bad range end `{b}`: {e}"))?;
        if lo > hi {
            return Err(format!("empty range {lo}..{hi}"));
        }
        return Ok(Modes((lo..=hi).collect()));
    }
    text.split(',')
        .map(|s| s.trim().parse::<i64>().map_err(|e| format!("bad mode `{s}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Modes)
}

fn parse_list(text: &str) -> std::result::Result<FloatList, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(FloatList)
}

fn parse_range(text: &str) -> std::result::Result<RangeSpec, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(format!("expected lo:hi:count, got `{text}`"));
    };
    Ok(RangeSpec {
        lo: lo.parse().map_err(|e| format!("bad lo `{lo}`: {e}"))?,
        hi: hi.parse().map_err(|e| format!("bad hi `{hi}`: {e}"))?,
        count: count.parse().map_err(|e| format!("bad count `{count}`: {e}"))?,
    })
}

fn parse_pair(text: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got `{text}`"))?;
    Ok((
        a.parse().map_err(|e| format!("bad lo `{a}`: {e}"))?,
        b.parse().map_err(|e| format!("bad hi `{b}`: {e}"))?,
    ))
}

fn parse_axis(text: &str) -> std::result::Result<PlaneAxis, String> {
    match text {
        "tau-a" | "tau_a" => Ok(PlaneAxis::TauA),
        "eta" => Ok(PlaneAxis::Eta),
        _ => Err(format!("expected `tau-a` or `eta`, got `{text}`")),
    }
}

fn parse_quadrature(text: &str) -> std::result::Result<Quadrature, String> {
    match text {
        "cell-integrated" => Ok(Quadrature::CellIntegrated),
        "riemann" => Ok(Quadrature::Riemann),
        _ => Err(format!("expected `cell-integrated` or `riemann`, got `{text}`")),
    }
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { $target = v; })*
            };
        }
        set! {
            seed => c.seed,
            mu => c.params.mu,
            sigma => c.params.sigma,
            eta => c.params.eta,
            tau_a => c.params.tau_a,
            tau_m => c.params.tau_m,
            rho => c.params.rho,
            gamma => c.params.gamma,
            nodes => c.grid.nodes,
            amplitude => c.initial.amplitude,
            dt => c.simulation.dt,
            stop_tol => c.simulation.stop_tol,
            max_steps => c.simulation.max_steps,
            snapshot_every => c.simulation.snapshot_every,
            solver_tol => c.simulation.solver.tol,
            quadrature => c.simulation.solver.quadrature,
            tau_m_grid => c.spectral.tau_m_grid,
            axis => c.spectral.plane.axis,
            x_resolution => c.spectral.plane.x_resolution,
            y_resolution => c.spectral.plane.y_resolution,
            horizon => c.probe.horizon,
            probe_amplitude => c.probe.amplitude,
            family => c.sweep.family,
            seeds => c.sweep.seeds,
        }
        if let Some(m) = &self.modes {
            c.spectral.modes = m.0.clone();
            c.probe.modes = m.0.clone();
        }
        if let Some(r) = self.x_range {
            c.spectral.plane.x_range = Some(r);
        }
        if let Some(r) = self.y_range {
            c.spectral.plane.y_range = Some(r);
        }
        if let Some(v) = &self.family_values {
            c.sweep.family_values = v.0.clone();
        }
        if let Some(v) = &self.tau_m_list {
            c.sweep.tau_m = v.0.clone();
        }
        if let Some(w) = self.workers {
            c.sweep.workers = Some(w);
        }
        if let Some(o) = &self.output {
            c.output.root = Some(o.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parse `args` (including the program name), run the command and return
/// the process exit status. Diagnostics go to stderr; the run directory is
/// printed on stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.dir.display());
            match outcome.failure {
                Some(message) => {
                    eprintln!("error: {message}");
                    EXIT_NUMERICAL
                }
                None => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}

/// Where a command wrote its artifacts, and whether its result is usable.
#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    /// Set when the artifacts were written but the computation did not
    /// reach its goal (for example a simulation that hit `max_steps`).
    pub failure: Option<String>,
}

fn execute(command: &Command) -> Result<Outcome> {
    let config = command.overrides().resolve()?;
    let name = command.name();
    let (files, summary, failure) = match command {
        Command::Eigen(_) => eigen(&config)?,
        Command::Critical(_) => critical(&config)?,
        Command::Curve(_) => plane(&config, true)?,
        Command::Heatmap(_) => plane(&config, false)?,
        Command::Simulate(_) => simulate(&config)?,
        Command::Probe(_) => probe(&config)?,
        Command::Sweep(_) => sweep(&config)?,
    };
    let root = config
        .output
        .root
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let dir = root.join(format!("{name}-{}", config.digest(name)));
    fs::create_dir_all(&dir)?;
    for (file, body) in &files {
        fs::write(dir.join(file), body)?;
    }
    fs::write(dir.join("metadata.toml"), metadata(name, &config, summary))?;
    Ok(Outcome { dir, failure })
}

type Artifacts = (Vec<(&'static str, String)>, toml::Table, Option<String>);

fn metadata(command: &str, config: &RunConfig, summary: toml::Table) -> String {
    let written = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut table = toml::Table::new();
    table.insert("command".into(), command.into());
    table.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    table.insert("result".into(), toml::Value::Table(summary));
    let config_value = toml::Value::try_from(config).expect("configuration is always representable as TOML");
    table.insert("config".into(), config_value);
    format!(
        "# written_at_unix = {written}\n{}",
        toml::to_string(&table).expect("metadata is valid TOML")
    )
}

fn num(x: f64) -> String {
    format_float(x)
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn eigen(c: &RunConfig) -> Result<Artifacts> {
    let grid = c.spectral.tau_m_grid.values("tau_m_grid")?;
    let rows = eigen_table(&c.spectral.modes, &c.params, &grid)?;
    let body = csv(
        &[
            "n",
            "tau_m",
            "H_alpha",
            "H_beta",
            "b",
            "D",
            "B",
            "Q",
            "Omega",
            "eigenvalue",
        ],
        rows.iter().map(|row| {
            let r = &row.result;
            vec![
                r.n.to_string(),
                num(row.tau_m),
                num(r.h_alpha),
                num(r.h_beta),
                num(r.b),
                num(r.d),
                num(r.big_b),
                num(r.q),
                num(r.omega),
                num(r.eigenvalue),
            ]
        }),
    );
    let mut summary = toml::Table::new();
    for &n in &c.spectral.modes {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.result.n == n)
            .map(|r| r.result.eigenvalue)
            .collect();
        summary.insert(format!("sign_changes_n{n}"), (sign_changes(&values) as i64).into());
    }
    Ok((vec![("eigen.csv", body)], summary, None))
}

fn critical(c: &RunConfig) -> Result<Artifacts> {
    let points = c
        .spectral
        .modes
        .iter()
        .map(|&n| critical_points(n, &c.params, &c.spectral.scan))
        .collect::<Result<Vec<_>>>()?;
    let body = csv(
        &["n", "tau_lower", "tau_upper", "status"],
        points.iter().map(|p| {
            vec![
                p.n.to_string(),
                opt_num(p.lower),
                opt_num(p.upper),
                p.status.as_str().to_string(),
            ]
        }),
    );
    let mut summary = toml::Table::new();
    summary.insert("modes".into(), (points.len() as i64).into());
    Ok((vec![("critical.csv", body)], summary, None))
}

fn plane(c: &RunConfig, with_curve: bool) -> Result<Artifacts> {
    let spec = c.spectral.plane.spec();
    let curves = c
        .spectral
        .modes
        .iter()
        .map(|&n| critical_curve(n, &c.params, &spec))
        .collect::<Result<Vec<_>>>()?;
    let heatmap = csv(
        &["n", "x", "y", "eigenvalue"],
        curves.iter().flat_map(|curve| {
            let h = &curve.heatmap;
            (0..h.ys.len()).flat_map(move |row| {
                (0..h.xs.len())
                    .map(move |col| vec![curve.n.to_string(), num(h.xs[col]), num(h.ys[row]), num(h.at(col, row))])
            })
        }),
    );
    let mut files = vec![("heatmap.csv", heatmap)];
    let mut summary = toml::Table::new();
    summary.insert("x".into(), "tau_m".into());
    summary.insert("y".into(), spec.axis.name().into());
    if with_curve {
        let body = csv(
            &["n", "x", "y"],
            curves.iter().flat_map(|curve| {
                curve
                    .points
                    .iter()
                    .map(move |p| vec![curve.n.to_string(), num(p.x), num(p.y)])
            }),
        );
        files.push(("curve.csv", body));
        let total: usize = curves.iter().map(|c| c.points.len()).sum();
        summary.insert("curve_points".into(), (total as i64).into());
    }
    Ok((files, summary, None))
}

fn simulate(c: &RunConfig) -> Result<Artifacts> {
    let grid = Grid::new(c.grid.nodes, c.params.rho)?;
    let lambda0 = random_initial(c.seed, c.initial.amplitude, &grid)?;
    let phi = PopulationField::uniform(&grid);
    let run = run_to_stationary(&lambda0, &phi, &c.params, &grid, &c.simulation)?;
    let stationary = csv(
        &["theta", "lambda"],
        grid.angles()
            .iter()
            .zip(run.lambda.values())
            .map(|(t, l)| vec![num(*t), num(*l)]),
    );
    let mut files = vec![("stationary.csv", stationary)];
    if !run.snapshots.is_empty() {
        let body = csv(
            &["step", "time", "theta", "lambda"],
            run.snapshots.iter().flat_map(|s| {
                grid.angles()
                    .iter()
                    .zip(&s.lambda)
                    .map(|(t, l)| vec![s.step.to_string(), num(s.time), num(*t), num(*l)])
            }),
        );
        files.push(("snapshots.csv", body));
    }
    let mut summary = toml::Table::new();
    summary.insert("spikes".into(), (run.spikes.count as i64).into());
    summary.insert(
        "spike_nodes".into(),
        toml::Value::Array(run.spikes.locations.iter().map(|k| (*k as i64).into()).collect()),
    );
    summary.insert("steps".into(), (run.steps as i64).into());
    summary.insert("converged".into(), run.converged.into());
    summary.insert("max_mass_drift".into(), run.max_mass_drift.into());
    summary.insert("min_density".into(), run.min_density.into());
    summary.insert("last_change".into(), run.last_change.into());
    summary.insert("solver_iterations".into(), (run.solver_iterations as i64).into());
    let failure = (!run.converged).then(|| {
        format!(
            "no stationary state within {} steps (last change {:e})",
            run.steps, run.last_change
        )
    });
    Ok((files, summary, failure))
}

fn probe(c: &RunConfig) -> Result<Artifacts> {
    let grid = Grid::new(c.grid.nodes, c.params.rho)?;
    let mut rows = Vec::new();
    for &n in &c.probe.modes {
        let measured = measured_growth_rate(n, &c.params, &grid, &c.simulation, c.probe.amplitude, c.probe.horizon)?;
        let analytic = mode_growth(n, &c.params)?.eigenvalue;
        rows.push((n, measured, analytic));
    }
    let body = csv(
        &["n", "tau_m", "measured", "analytic", "abs_error", "rel_error"],
        rows.iter().map(|(n, m, a)| {
            vec![
                n.to_string(),
                num(c.params.tau_m),
                num(*m),
                num(*a),
                num((m - a).abs()),
                num((m - a).abs() / a.abs()),
            ]
        }),
    );
    let mut summary = toml::Table::new();
    let worst = rows.iter().map(|(_, m, a)| (m - a).abs() / a.abs()).fold(0.0, f64::max);
    summary.insert("max_rel_error".into(), worst.into());
    Ok((vec![("probe.csv", body)], summary, None))
}

fn sweep(c: &RunConfig) -> Result<Artifacts> {
    let plan = c.sweep_plan();
    plan.validate()?;
    let total = plan.cells().len();
    let done = AtomicUsize::new(0);
    let output = run_sweep_with(&plan, |r| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        let spikes = r.spikes.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        eprintln!(
            "[{k}/{total}] {}={} tau_m={} seed={} spikes={spikes} steps={} converged={}",
            plan.family.name(),
            r.family_value,
            r.tau_m,
            r.seed,
            r.steps,
            r.converged
        );
    })?;
    let records = output.records_csv();
    let aggregate = output.aggregate_csv();
    let failed: usize = output.aggregate.iter().map(|a| a.n_failed).sum();
    let mut summary = toml::Table::new();
    summary.insert("runs".into(), (total as i64).into());
    summary.insert("failed_runs".into(), (failed as i64).into());
    if failed > 0 {
        eprintln!("warning: {failed} of {total} runs did not converge and were excluded from the means");
    }
    Ok((
        vec![("sweep.csv", records), ("aggregate.csv", aggregate)],
        summary,
        None,
    ))
}
