//! Migration dynamics `d lambda / dt = gamma (omega - <omega>) lambda`,
//! integrated with explicit Euler steps; each step re-solves the
//! instantaneous equilibrium, warm-started from the previous one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{Equilibrium, EquilibriumSolver, PopulationField, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{invariant_sum, Grid};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpikeOptions {
    /// A spike must reach this fraction of the field maximum.
    pub rel_height: f64,
    /// Maxima at most this many nodes apart are merged into the higher one.
    pub min_separation: usize,
    /// A spike must exceed the uniform density by this relative margin, so
    /// that round-off ripples on a settled uniform state are not counted.
    pub min_excess: f64,
}

impl Default for SpikeOptions {
    fn default() -> Self {
        Self {
            rel_height: 0.1,
            min_separation: 2,
            min_excess: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Spikes {
    pub count: usize,
    /// Node indices of the spikes, ascending.
    pub locations: Vec<usize>,
}

/// Count isolated peaks of a density on the circular grid.
///
/// A node is a peak when it is a strict local maximum (a flat run of equal
/// values counts once, at its first node, if both neighbours of the run are
/// lower), reaches `rel_height` times the global maximum and exceeds the
/// uniform density `uniform` by the relative margin `min_excess`.
pub fn count_spikes(values: &[f64], uniform: f64, opts: &SpikeOptions) -> Spikes {
    let n = values.len();
    if n < 3 {
        return Spikes {
            count: 0,
            locations: Vec::new(),
        };
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = uniform * (1.0 + opts.min_excess);
    let mut candidates = Vec::new();
    let mut visited = vec![false; n];
    for start in 0..n {
        if visited[start] {
            continue;
        }
        // extend the flat run containing `start` both ways
        let v = values[start];
        let mut left = start;
        let mut len = 1;
        while len < n && values[(left + n - 1) % n] == v {
            left = (left + n - 1) % n;
            len += 1;
        }
        while len < n && values[(left + len) % n] == v {
            len += 1;
        }
        for k in 0..len {
            visited[(left + k) % n] = true;
        }
        if len == n {
            break;
        }
        let before = values[(left + n - 1) % n];
        let after = values[(left + len) % n];
        if before < v && after < v && v >= opts.rel_height * max && v > floor {
            candidates.push(left);
        }
    }

    candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        let close = kept.iter().any(|&k| {
            let gap = c.abs_diff(k);
            gap.min(n - gap) <= opts.min_separation
        });
        if !close {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    Spikes {
        count: kept.len(),
        locations: kept,
    }
}

/// Uniform density with i.i.d. relative perturbations `u_i ~ U[-1, 1]`
/// scaled by `amplitude`, renormalized to unit mass. Uses ChaCha8 seeded
/// with `seed`.
pub fn random_initial(seed: u64, amplitude: f64, grid: &Grid) -> Result<PopulationField> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::invalid(
            "amplitude",
            format!("must lie in [0, 1), got {amplitude}"),
        ));
    }
    let base = 1.0 / grid.circumference();
    if amplitude == 0.0 {
        return Ok(PopulationField::uniform(grid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| base * (1.0 + amplitude * rng.gen_range(-1.0..=1.0)))
        .collect();
    PopulationField::normalized(grid, values)
}

/// `lambda_bar (1 + amplitude cos(n theta))`.
pub fn cosine_seed(n: i64, amplitude: f64, grid: &Grid) -> Result<PopulationField> {
    if n == 0 {
        return Err(Error::invalid("n", "mode 0 is excluded (mass conservation)"));
    }
    if n.unsigned_abs() as usize > grid.len() / 2 {
        return Err(Error::invalid(
            "n",
            format!("frequency {n} exceeds the grid's Nyquist limit {}", grid.len() / 2),
        ));
    }
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::invalid(
            "amplitude",
            format!("must lie in [0, 1), got {amplitude}"),
        ));
    }
    let base = 1.0 / grid.circumference();
    let values = grid
        .angles()
        .iter()
        .map(|t| base * (1.0 + amplitude * (n as f64 * t).cos()))
        .collect();
    PopulationField::normalized(grid, values)
}

/// Modulus of the discrete Fourier coefficient `sum_i f_i e^{-i n theta_i} w`
/// for `n != 0`. The mean is removed first so it cannot leak through roundoff.
pub fn fourier_amplitude(values: &[f64], n: i64, grid: &Grid) -> f64 {
    let mean = invariant_sum(values) / values.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (v, t) in values.iter().map(|v| v - mean).zip(grid.angles()) {
        let phase = n as f64 * t;
        re += v * phase.cos();
        im -= v * phase.sin();
    }
    re.hypot(im) * grid.weight()
}

/// One explicit Euler step of the migration equation.
pub fn euler_step(
    lambda: &PopulationField,
    eq: &Equilibrium,
    gamma: f64,
    dt: f64,
    grid: &Grid,
) -> Result<PopulationField> {
    grid.check_len(lambda.len())?;
    grid.check_len(eq.real_wage.len())?;
    let lam = lambda.values();
    let weighted: Vec<f64> = eq.real_wage.iter().zip(lam).map(|(w, l)| w * l).collect();
    let average = grid.integrate(&weighted);
    let rate = gamma * dt;
    let mut next = Vec::with_capacity(lam.len());
    for (i, (l, w)) in lam.iter().zip(&eq.real_wage).enumerate() {
        let v = l + rate * (w - average) * l;
        if v < 0.0 {
            return Err(Error::NegativeDensity { node: i, value: v });
        }
        next.push(v);
    }
    Ok(PopulationField::from_raw(next))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub dt: f64,
    /// Stop when `max_i |lambda^{k+1}_i - lambda^k_i|` falls below this.
    pub stop_tol: f64,
    pub max_steps: usize,
    pub solver: SolverOptions,
    pub spikes: SpikeOptions,
    /// Record the density every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            stop_tol: 1e-10,
            max_steps: 10_000_000,
            solver: SolverOptions::default(),
            spikes: SpikeOptions::default(),
            snapshot_every: 1000,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("time step must be > 0, got {}", self.dt)));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::invalid("stop_tol", "must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps", "must be at least 1"));
        }
        if !(self.spikes.rel_height > 0.0 && self.spikes.rel_height < 1.0) {
            return Err(Error::invalid("rel_height", "must lie in (0, 1)"));
        }
        if !(self.spikes.min_excess >= 0.0 && self.spikes.min_excess.is_finite()) {
            return Err(Error::invalid("min_excess", "must be finite and >= 0"));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub lambda: PopulationField,
    pub steps: usize,
    pub converged: bool,
    pub spikes: Spikes,
    /// Largest `|integral(lambda) - 1|` seen along the trajectory.
    pub max_mass_drift: f64,
    pub min_density: f64,
    /// Sup-norm change of the last step.
    pub last_change: f64,
    /// Fixed-point iterations summed over all equilibrium solves.
    pub solver_iterations: usize,
    pub snapshots: Vec<Snapshot>,
}

/// Starting point for the next equilibrium solve, extrapolated from the
/// transformed wages of recent steps.
/// Transformed wages `(W^A, W^M)` of one solve.
type WagePair = (Vec<f64>, Vec<f64>);

#[derive(Default)]
struct Predictor {
    /// Most recent first; at most three entries.
    history: Vec<WagePair>,
}

impl Predictor {
    fn push(&mut self, eq: &Equilibrium) {
        if self.history.len() == 3 {
            self.history.pop();
        }
        self.history
            .insert(0, (eq.transformed_a().to_vec(), eq.transformed_m().to_vec()));
    }

    /// Polynomial extrapolation through the stored solutions, falling back to
    /// the latest value wherever the extrapolant is not positive.
    fn guess(&self) -> Option<WagePair> {
        let h = &self.history;
        let pick = |sector: fn(&WagePair) -> &Vec<f64>| -> Vec<f64> {
            let x1 = sector(&h[0]);
            (0..x1.len())
                .map(|i| {
                    let v = match h.len() {
                        1 => x1[i],
                        2 => 2.0 * x1[i] - sector(&h[1])[i],
                        _ => 3.0 * x1[i] - 3.0 * sector(&h[1])[i] + sector(&h[2])[i],
                    };
                    if v > 0.0 {
                        v
                    } else {
                        x1[i]
                    }
                })
                .collect()
        };
        if h.is_empty() {
            return None;
        }
        Some((pick(|e| &e.0), pick(|e| &e.1)))
    }
}

/// Integrate from `lambda0` until the stop criterion or `max_steps`.
pub fn run_to_stationary(
    lambda0: &PopulationField,
    phi: &PopulationField,
    params: &ModelParams,
    grid: &Grid,
    config: &SimulationConfig,
) -> Result<StationaryResult> {
    config.validate()?;
    let solver = EquilibriumSolver::new(grid, params, config.solver)?;
    grid.check_len(lambda0.len())?;
    grid.check_len(phi.len())?;

    let mut lambda = lambda0.clone();
    let mut predictor = Predictor::default();
    let mut max_drift = (lambda.mass(grid) - 1.0).abs();
    let mut min_density = lambda.values().iter().copied().fold(f64::INFINITY, f64::min);
    let mut snapshots = Vec::new();
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut steps = 0;
    let mut solver_iterations = 0;

    let at = |step: usize| {
        move |e: Error| Error::AtStep {
            step,
            source: Box::new(e),
        }
    };
    while steps < config.max_steps {
        if config.snapshot_every > 0 && steps % config.snapshot_every == 0 {
            snapshots.push(Snapshot {
                step: steps,
                time: steps as f64 * config.dt,
                lambda: lambda.values().to_vec(),
            });
        }
        let guess = predictor.guess();
        let solved = solver
            .solve_from(&lambda, phi, guess.as_ref().map(|(a, m)| (a.as_slice(), m.as_slice())))
            .map_err(at(steps))?;
        solver_iterations += solved.iterations;
        predictor.push(&solved);
        let next = euler_step(&lambda, &solved, params.gamma, config.dt, grid).map_err(at(steps))?;
        steps += 1;
        last_change = next
            .values()
            .iter()
            .zip(lambda.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_drift = max_drift.max((next.mass(grid) - 1.0).abs());
        min_density = next.values().iter().copied().fold(min_density, f64::min);
        lambda = next;
        if last_change < config.stop_tol {
            converged = true;
            break;
        }
    }
    if config.snapshot_every > 0 {
        snapshots.push(Snapshot {
            step: steps,
            time: steps as f64 * config.dt,
            lambda: lambda.values().to_vec(),
        });
    }
    let spikes = count_spikes(lambda.values(), 1.0 / grid.circumference(), &config.spikes);
    Ok(StationaryResult {
        lambda,
        steps,
        converged,
        spikes,
        max_mass_drift: max_drift,
        min_density,
        last_change,
        solver_iterations,
        snapshots,
    })
}

/// Growth rate of a single cosine perturbation under the full nonlinear
/// dynamics: least-squares slope of `ln |a_n(t)|` over `horizon` steps.
pub fn measured_growth_rate(
    n: i64,
    params: &ModelParams,
    grid: &Grid,
    config: &SimulationConfig,
    amplitude: f64,
    horizon: usize,
) -> Result<f64> {
    config.validate()?;
    if horizon < 2 {
        return Err(Error::invalid("horizon", "need at least 2 steps"));
    }
    let solver = EquilibriumSolver::new(grid, params, config.solver)?;
    let phi = PopulationField::uniform(grid);
    let mut lambda = cosine_seed(n, amplitude, grid)?;
    let mut predictor = Predictor::default();
    let floor = 1e-13 / grid.circumference();

    let mut times = Vec::with_capacity(horizon + 1);
    let mut logs = Vec::with_capacity(horizon + 1);
    for step in 0..=horizon {
        let a = fourier_amplitude(lambda.values(), n, grid);
        if !(a > floor) {
            return Err(Error::AmplitudeUnderflow { step });
        }
        times.push(step as f64 * config.dt);
        logs.push(a.ln());
        if step == horizon {
            break;
        }
        let guess = predictor.guess();
        let solved = solver.solve_from(&lambda, &phi, guess.as_ref().map(|(a, m)| (a.as_slice(), m.as_slice())))?;
        predictor.push(&solved);
        lambda = euler_step(&lambda, &solved, params.gamma, config.dt, grid)?;
    }
    Ok(least_squares_slope(&times, &logs))
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Average real wage `int omega lambda dx`.
pub fn average_real_wage(eq: &Equilibrium, lambda: &PopulationField, grid: &Grid) -> f64 {
    let weighted: Vec<f64> = eq.real_wage.iter().zip(lambda.values()).map(|(w, l)| w * l).collect();
    invariant_sum(&weighted) * grid.weight()
}
