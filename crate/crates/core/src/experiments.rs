//! Batch sweeps: many independent simulations over a grid of manufacturing
//! transport costs and a family of agricultural parameters, summarised by
//! the mean spike count per cell.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{random_initial, run_to_stationary, SimulationConfig};
use crate::equilibrium::PopulationField;
use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::params::ModelParams;

/// Standard grid of manufacturing transport costs for spike-count curves.
pub const STANDARD_TAU_M: [f64; 16] = [
    6.0, 5.5, 5.0, 4.5, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0, 0.8, 0.6, 0.4, 0.2, 0.1,
];

/// The parameter varied across the curves of one sweep.
pub use crate::spectral::PlaneAxis as Family;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepPlan {
    pub tau_m: Vec<f64>,
    pub family: Family,
    pub family_values: Vec<f64>,
    /// Independent random initial conditions per cell.
    pub seeds: usize,
    pub base: ModelParams,
    pub master_seed: u64,
    /// Grid nodes; the radius is taken from `base.rho`.
    pub nodes: usize,
    /// Relative amplitude of the random initial perturbation.
    pub amplitude: f64,
    pub simulation: SimulationConfig,
    /// Upper bound on concurrently running simulations; `None` uses every
    /// available core.
    pub workers: Option<usize>,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            tau_m: STANDARD_TAU_M.to_vec(),
            family: Family::TauA,
            family_values: vec![2.0],
            seeds: 5,
            base: ModelParams::default(),
            master_seed: 0,
            nodes: 128,
            amplitude: 0.01,
            simulation: SimulationConfig {
                snapshot_every: 0,
                ..SimulationConfig::default()
            },
            workers: None,
        }
    }
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.tau_m.is_empty() {
            return Err(Error::invalid("tau_m", "list must not be empty"));
        }
        if let Some(t) = self.tau_m.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("tau_m", format!("every value must be > 0, got {t}")));
        }
        if self.family_values.is_empty() {
            return Err(Error::invalid("family_values", "list must not be empty"));
        }
        if self.seeds == 0 {
            return Err(Error::invalid("seeds", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(Error::invalid(
                "amplitude",
                format!("must lie in [0, 1), got {}", self.amplitude),
            ));
        }
        for value in &self.family_values {
            for tau_m in &self.tau_m {
                self.family.apply(&self.base, *value).with_tau_m(*tau_m).validate()?;
            }
        }
        Grid::new(self.nodes, self.base.rho)?;
        self.simulation.validate()
    }

    /// Every cell of the plan, family-major, then `tau_m`, then seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.family_values.len() * self.tau_m.len() * self.seeds);
        for (fi, value) in self.family_values.iter().enumerate() {
            for (ti, tau_m) in self.tau_m.iter().enumerate() {
                for si in 0..self.seeds {
                    cells.push(Cell {
                        family_value: *value,
                        tau_m: *tau_m,
                        seed_index: si,
                        seed: cell_seed(self.master_seed, fi, ti, si),
                    });
                }
            }
        }
        cells
    }
}

/// One simulation of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub family_value: f64,
    pub tau_m: f64,
    pub seed_index: usize,
    /// Seed handed to [`random_initial`].
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one cell, mixed from the master seed and the cell's indices so
/// that neighbouring cells get unrelated streams.
pub fn cell_seed(master: u64, family_index: usize, tau_index: usize, seed_index: usize) -> u64 {
    [family_index, tau_index, seed_index]
        .iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k as u64)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub family_value: f64,
    pub tau_m: f64,
    pub seed: u64,
    /// `None` when the run stopped on an error before reaching a final state.
    pub spikes: Option<usize>,
    pub steps: usize,
    pub converged: bool,
    pub max_mass_drift: f64,
    /// Error message for runs that aborted.
    pub failure: Option<String>,
    /// Wall-clock duration of the run; informational only and never
    /// written to the tables, which must be reproducible.
    pub seconds: f64,
}

/// Run one cell to its stationary state.
pub fn run_cell(plan: &SweepPlan, cell: &Cell) -> SweepRecord {
    let started = Instant::now();
    let params = plan.family.apply(&plan.base, cell.family_value).with_tau_m(cell.tau_m);
    let outcome = Grid::new(plan.nodes, params.rho).and_then(|grid| {
        let lambda0 = random_initial(cell.seed, plan.amplitude, &grid)?;
        let phi = PopulationField::uniform(&grid);
        run_to_stationary(&lambda0, &phi, &params, &grid, &plan.simulation)
    });
    match outcome {
        Ok(run) => SweepRecord {
            family_value: cell.family_value,
            tau_m: cell.tau_m,
            seed: cell.seed,
            spikes: Some(run.spikes.count),
            steps: run.steps,
            converged: run.converged,
            max_mass_drift: run.max_mass_drift,
            failure: None,
            seconds: started.elapsed().as_secs_f64(),
        },
        Err(e) => SweepRecord {
            family_value: cell.family_value,
            tau_m: cell.tau_m,
            seed: cell.seed,
            spikes: None,
            steps: match &e {
                Error::AtStep { step, .. } => *step,
                _ => 0,
            },
            converged: false,
            max_mass_drift: f64::NAN,
            failure: Some(e.to_string()),
            seconds: started.elapsed().as_secs_f64(),
        },
    }
}

/// Summary of the converged runs of one (family value, `tau_m`) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub family_value: f64,
    pub tau_m: f64,
    /// `None` when no run of the cell converged.
    pub mean_spikes: Option<f64>,
    pub min: Option<usize>,
    pub max: Option<usize>,
    pub n_converged: usize,
    /// Runs excluded from the mean.
    pub n_failed: usize,
}

fn key_order(a: (f64, f64), b: (f64, f64)) -> Ordering {
    // family ascending, tau_m descending
    a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1))
}

/// Group records by (family value, `tau_m`). Only converged runs with a spike
/// count enter the statistics; the result does not depend on record order.
pub fn aggregate(records: &[SweepRecord]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| key_order((a.family_value, a.tau_m), (b.family_value, b.tau_m)));
    let mut rows: Vec<AggregateRow> = Vec::new();
    let mut totals: Vec<usize> = Vec::new();
    for record in sorted {
        let same_key = rows.last().is_some_and(|row| {
            key_order((row.family_value, row.tau_m), (record.family_value, record.tau_m)) == Ordering::Equal
        });
        if !same_key {
            rows.push(AggregateRow {
                family_value: record.family_value,
                tau_m: record.tau_m,
                mean_spikes: None,
                min: None,
                max: None,
                n_converged: 0,
                n_failed: 0,
            });
            totals.push(0);
        }
        let row = rows.last_mut().expect("row pushed above");
        match record.spikes.filter(|_| record.converged) {
            Some(count) => {
                *totals.last_mut().expect("total pushed with its row") += count;
                row.min = Some(row.min.map_or(count, |m| m.min(count)));
                row.max = Some(row.max.map_or(count, |m| m.max(count)));
                row.n_converged += 1;
            }
            None => row.n_failed += 1,
        }
    }
    for (row, total) in rows.iter_mut().zip(totals) {
        if row.n_converged > 0 {
            row.mean_spikes = Some(total as f64 / row.n_converged as f64);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub family: Family,
    /// In cell order: family-major, then `tau_m`, then seed.
    pub records: Vec<SweepRecord>,
    pub aggregate: Vec<AggregateRow>,
}

impl SweepOutput {
    /// One line per run, in cell order.
    pub fn records_csv(&self) -> String {
        let family = self.family.name();
        csv(
            &[
                "family_name",
                "family_value",
                "tau_m",
                "seed",
                "spikes",
                "steps",
                "converged",
            ],
            self.records.iter().map(|r| {
                vec![
                    family.to_string(),
                    format_float(r.family_value),
                    format_float(r.tau_m),
                    r.seed.to_string(),
                    r.spikes.map(|s| s.to_string()).unwrap_or_default(),
                    r.steps.to_string(),
                    r.converged.to_string(),
                ]
            }),
        )
    }

    /// One line per (family value, `tau_m`) cell.
    pub fn aggregate_csv(&self) -> String {
        csv(
            &["family_value", "tau_m", "mean_spikes", "min", "max", "n_converged"],
            self.aggregate.iter().map(|a| {
                vec![
                    format_float(a.family_value),
                    format_float(a.tau_m),
                    a.mean_spikes.map(format_float).unwrap_or_default(),
                    a.min.map(|v| v.to_string()).unwrap_or_default(),
                    a.max.map(|v| v.to_string()).unwrap_or_default(),
                    a.n_converged.to_string(),
                ]
            }),
        )
    }
}

/// Round-trip-safe formatting with 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Comma-separated table with a header line and a trailing newline.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Run every cell of `plan`; see [`run_sweep_with`].
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutput> {
    run_sweep_with(plan, |_| {})
}

/// Run every cell of `plan` on a bounded worker pool, calling `on_record` as
/// each cell finishes (in completion order). The returned records are in
/// cell order and depend only on the plan.
pub fn run_sweep_with<F>(plan: &SweepPlan, on_record: F) -> Result<SweepOutput>
where
    F: Fn(&SweepRecord) + Sync,
{
    plan.validate()?;
    let cells = plan.cells();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(workers) = plan.workers {
        builder = builder.num_threads(workers);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let records: Vec<SweepRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let record = run_cell(plan, cell);
                on_record(&record);
                record
            })
            .collect()
    });
    let aggregate = aggregate(&records);
    Ok(SweepOutput {
        family: plan.family,
        records,
        aggregate,
    })
}
