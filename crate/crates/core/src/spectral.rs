//! Closed-form linear stability of the uniform state.
//!
//! A perturbation of the manufacturing density is expanded in Fourier modes
//! `exp(i n theta)`. Mode `n` grows at rate `gamma * lambda_bar * Omega_n`,
//! where `Omega_n` is a rational function of the kernel symbols `H^alpha_n`
//! and `H^beta_n`.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::one_minus_exp_over;
use crate::params::ModelParams;

/// Below this value of `decay * rho` the closed forms switch to series.
const SERIES_THRESHOLD: f64 = 1e-8;

/// Integral of `exp(-decay * d(x, y))` over the circle: `2 (1 - e^{-decay rho pi}) / decay`.
pub fn exp_kernel_mass(decay: f64, rho: f64) -> f64 {
    TAU * rho * one_minus_exp_over(decay * rho * PI)
}

/// Normalized Fourier symbol of the transport kernel for frequency `n`.
///
/// Equals `(1/E) * integral of exp(-decay d(0, theta)) cos(n theta) rho dtheta`.
pub fn h_coefficient(n: i64, decay: f64, rho: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "mode 0 is excluded (mass conservation)"));
    }
    if !(decay >= 0.0 && decay.is_finite()) {
        return Err(Error::invalid("decay", format!("must be finite and >= 0, got {decay}")));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", format!("must be > 0, got {rho}")));
    }
    Ok(h_unchecked(n.unsigned_abs(), decay * rho))
}

fn h_unchecked(n: u64, x: f64) -> f64 {
    let n2 = (n as f64) * (n as f64);
    let odd = n % 2 == 1;
    if x < SERIES_THRESHOLD {
        return if odd { 2.0 * x / (PI * n2) } else { x * x / n2 };
    }
    let x2 = x * x;
    let tail = (-x * PI).exp();
    let denom_tail = -(-x * PI).exp_m1();
    let numer_tail = if odd { 1.0 + tail } else { denom_tail };
    x2 * numer_tail / ((n2 + x2) * denom_tail)
}

/// Uniform stationary state with the nominal wage fixed at `w_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneousState {
    pub lambda: f64,
    pub phi: f64,
    pub wage: f64,
    pub income: f64,
    pub price_a: f64,
    pub price_m: f64,
    pub real_wage: f64,
    pub mass_alpha: f64,
    pub mass_beta: f64,
}

impl HomogeneousState {
    pub fn with_wage(params: &ModelParams, wage: f64) -> Self {
        let density = params.uniform_density();
        let mass_alpha = exp_kernel_mass(params.alpha(), params.rho);
        let mass_beta = exp_kernel_mass(params.beta(), params.rho);
        let (mu, sigma, eta) = (params.mu, params.sigma, params.eta);
        let price_a = (density * wage.powf(1.0 - eta) * mass_alpha).powf(1.0 / (1.0 - eta));
        let price_m = (density * wage.powf(1.0 - sigma) * mass_beta).powf(1.0 / (1.0 - sigma));
        let real_wage = density.powf(mu / (sigma - 1.0))
            * density.powf((1.0 - mu) / (eta - 1.0))
            * mass_alpha.powf((1.0 - mu) / (eta - 1.0))
            * mass_beta.powf(mu / (sigma - 1.0));
        Self {
            lambda: density,
            phi: density,
            wage,
            income: wage * density,
            price_a,
            price_m,
            real_wage,
            mass_alpha,
            mass_beta,
        }
    }

    /// Real wage recomputed from wage and price indices rather than the
    /// closed form; agrees with `real_wage` for every `wage`.
    pub fn real_wage_from_prices(&self, mu: f64) -> f64 {
        self.wage * self.price_m.powf(-mu) * self.price_a.powf(mu - 1.0)
    }
}

/// Uniform state under the normalization `w_bar = 1`.
pub fn homogeneous_state(params: &ModelParams) -> HomogeneousState {
    HomogeneousState::with_wage(params, 1.0)
}

/// Everything computed for one Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralResult {
    pub n: i64,
    pub h_alpha: f64,
    pub h_beta: f64,
    pub b: f64,
    pub d: f64,
    pub big_b: f64,
    /// The quadratic evaluated at `h_beta`.
    pub q: f64,
    pub omega: f64,
    pub eigenvalue: f64,
}

/// Quadratic in `h` whose sign decides stability, given `b` and `B`.
pub fn stability_quadratic(h: f64, b: f64, big_b: f64, mu: f64, sigma: f64) -> f64 {
    let lead = -sigma * (mu * mu + b) / b + 1.0 + big_b;
    let lin = mu * (sigma * (b + 1.0) - 1.0) / b;
    lead * h * h + lin * h - big_b
}

/// Growth factor `Omega_n` and eigenvalue `gamma * lambda_bar * Omega_n`.
pub fn mode_growth(n: i64, params: &ModelParams) -> Result<SpectralResult> {
    let h_alpha = h_coefficient(n, params.alpha(), params.rho)?;
    let h_beta = h_coefficient(n, params.beta(), params.rho)?;
    let state = homogeneous_state(params);
    Ok(assemble(n, h_alpha, h_beta, params, &state))
}

fn assemble(n: i64, h_alpha: f64, h_beta: f64, params: &ModelParams, state: &HomogeneousState) -> SpectralResult {
    let (mu, sigma, eta) = (params.mu, params.sigma, params.eta);
    let b = 1.0 - (1.0 - mu) * h_alpha / (eta - (eta - 1.0) * h_alpha * h_alpha);
    let d = sigma - mu / b * h_beta - (sigma - 1.0) * h_beta * h_beta;
    let big_b = mu * sigma * (sigma - 1.0) * (1.0 - b) * h_alpha / b;
    assert!(d > 0.0, "D must be positive, got {d} (n={n}, {params:?})");
    assert!(b > mu && b <= 1.0, "b must lie in (mu, 1], got {b} (n={n}, {params:?})");
    let q = stability_quadratic(h_beta, b, big_b, mu, sigma);
    let omega = TAU * params.rho * state.real_wage / ((sigma - 1.0) * d) * q;
    SpectralResult {
        n,
        h_alpha,
        h_beta,
        b,
        d,
        big_b,
        q,
        omega,
        eigenvalue: params.gamma * state.lambda * omega,
    }
}

/// Limit of `Omega_n` as `tau_m -> 0` for `alpha > 0`.
pub fn low_transport_limit(n: i64, params: &ModelParams) -> Result<f64> {
    let r = mode_growth(n, &params.with_tau_m(0.0))?;
    let state = homogeneous_state(&params.with_tau_m(0.0));
    Ok(-TAU * params.rho * state.real_wage * r.big_b / ((params.sigma - 1.0) * params.sigma))
}

/// Nonzero root of the quadratic when `alpha = 0`:
/// `mu (2 sigma - 1) / (sigma (1 + mu^2) - 1)`.
pub fn critical_symbol_without_agri_costs(mu: f64, sigma: f64) -> f64 {
    mu * (2.0 * sigma - 1.0) / (sigma * (1.0 + mu * mu) - 1.0)
}

/// Geometric scan over `tau_m` plus bisection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub tol: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            lo: 1e-3,
            hi: 20.0,
            points: 400,
            tol: 1e-8,
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.lo < self.hi && self.hi.is_finite()) {
            return Err(Error::invalid(
                "tau_m_range",
                format!("need 0 < lo < hi, got [{}, {}]", self.lo, self.hi),
            ));
        }
        if self.points < 2 {
            return Err(Error::invalid("points", "scan needs at least 2 points"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "bisection tolerance must be > 0"));
        }
        Ok(())
    }

    /// Scan values from `hi` down to `lo`, geometrically spaced.
    pub fn descending_grid(&self) -> Vec<f64> {
        geometric_grid(self.hi, self.lo, self.points)
    }
}

/// `count` geometrically spaced values from `start` to `end` inclusive.
pub fn geometric_grid(start: f64, end: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let ratio = (end / start).ln() / (count - 1) as f64;
    (0..count)
        .map(|k| match k {
            0 => start,
            k if k == count - 1 => end,
            k => start * (ratio * k as f64).exp(),
        })
        .collect()
}

/// `count` evenly spaced values from `start` to `end` inclusive.
pub fn linear_grid(start: f64, end: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let step = (end - start) / (count - 1) as f64;
    (0..count)
        .map(|k| if k == count - 1 { end } else { start + step * k as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingStatus {
    /// No sign change on the scan range.
    None,
    /// A single sign change.
    Single,
    /// The usual stable/unstable/stable pattern.
    Pair,
    /// More than two sign changes; all of them are kept in `crossings`.
    Anomalous,
}

impl CrossingStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CrossingStatus::None => "none",
            CrossingStatus::Single => "single",
            CrossingStatus::Pair => "pair",
            CrossingStatus::Anomalous => "anomalous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoints {
    pub n: i64,
    /// Where the mode restabilizes as `tau_m` keeps falling.
    pub lower: Option<f64>,
    /// Where the mode first destabilizes as `tau_m` falls.
    pub upper: Option<f64>,
    /// Every located zero, in descending `tau_m` order.
    pub crossings: Vec<f64>,
    pub status: CrossingStatus,
    pub scan: ScanSpec,
}

/// Locate the zeros of `Omega_n` as a function of `tau_m`. The value of
/// `params.tau_m` is ignored.
pub fn critical_points(n: i64, params: &ModelParams, scan: &ScanSpec) -> Result<CriticalPoints> {
    scan.validate()?;
    params.validate()?;
    let omega = |tau_m: f64| mode_growth(n, &params.with_tau_m(tau_m)).map(|r| r.omega);
    let grid = scan.descending_grid();
    let values = grid.iter().map(|&t| omega(t)).collect::<Result<Vec<_>>>()?;

    let mut crossings = Vec::new();
    // (tau, destabilizing-as-tau-falls)
    let mut kinds = Vec::new();
    for k in 0..grid.len() - 1 {
        let (f_hi, f_lo) = (values[k], values[k + 1]);
        if f_hi == 0.0 {
            crossings.push(grid[k]);
            kinds.push(f_lo > 0.0);
            continue;
        }
        if f_hi.signum() != f_lo.signum() && f_lo != 0.0 {
            let root = bisect(
                grid[k + 1],
                grid[k],
                scan.tol,
                |t| omega(t).map(|v| v > 0.0),
                f_lo > 0.0,
            )?;
            crossings.push(root);
            kinds.push(f_lo > 0.0);
        }
    }
    if values[grid.len() - 1] == 0.0 {
        crossings.push(grid[grid.len() - 1]);
        kinds.push(false);
    }

    let status = match crossings.len() {
        0 => CrossingStatus::None,
        1 => CrossingStatus::Single,
        2 => CrossingStatus::Pair,
        _ => CrossingStatus::Anomalous,
    };
    let upper = crossings
        .iter()
        .zip(&kinds)
        .find(|(_, &destab)| destab)
        .map(|(&t, _)| t);
    let mut lower = crossings
        .iter()
        .zip(&kinds)
        .rev()
        .find(|(_, &destab)| !destab)
        .map(|(&t, _)| t);
    if params.alpha() == 0.0 {
        // The quadratic has a root at H = 0, i.e. tau_m = 0, and is positive just above it.
        lower = Some(0.0);
    }
    Ok(CriticalPoints {
        n,
        lower,
        upper,
        crossings,
        status,
        scan: *scan,
    })
}

/// Bisection on `[lo, hi]` for a predicate that flips inside the bracket.
/// `positive_at_lo` is the predicate value at `lo`.
fn bisect(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    positive: impl Fn(f64) -> Result<bool>,
    positive_at_lo: bool,
) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if positive(mid)? == positive_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Second axis of a two-parameter stability map; the first is always `tau_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaneAxis {
    TauA,
    Eta,
}

impl PlaneAxis {
    pub fn apply(&self, params: &ModelParams, value: f64) -> ModelParams {
        match self {
            PlaneAxis::TauA => params.with_tau_a(value),
            PlaneAxis::Eta => params.with_eta(value),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlaneAxis::TauA => "tau_a",
            PlaneAxis::Eta => "eta",
        }
    }
}

/// Eigenvalue sampled on a rectangle; `values[row * xs.len() + col]` is the
/// value at `(xs[col], ys[row])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.xs.len() + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalCurve {
    pub n: i64,
    pub axis: PlaneAxis,
    pub heatmap: Heatmap,
    /// Zero crossings found column by column, ordered by `x` then `y`.
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneSpec {
    pub axis: PlaneAxis,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub x_resolution: usize,
    pub y_resolution: usize,
    pub tol: f64,
}

impl PlaneSpec {
    /// Default window for each plane: `tau_m` in [0.1, 6] against `tau_a` in
    /// [0.1, 5] or `eta` in [1.05, 5].
    pub fn default_for(axis: PlaneAxis) -> Self {
        let y_range = match axis {
            PlaneAxis::TauA => (0.1, 5.0),
            PlaneAxis::Eta => (1.05, 5.0),
        };
        Self {
            axis,
            x_range: (0.1, 6.0),
            y_range,
            x_resolution: 120,
            y_resolution: 100,
            tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        if !(x0 > 0.0 && x0 < x1) {
            return Err(Error::invalid("x_range", format!("need 0 < lo < hi, got [{x0}, {x1}]")));
        }
        if !(y0 > 0.0 && y0 < y1) {
            return Err(Error::invalid("y_range", format!("need 0 < lo < hi, got [{y0}, {y1}]")));
        }
        if self.axis == PlaneAxis::Eta && y0 <= 1.0 {
            return Err(Error::invalid("y_range", "eta must stay above 1"));
        }
        if self.x_resolution < 16 || self.y_resolution < 16 {
            return Err(Error::invalid("resolution", "need at least 16 samples per axis"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "bisection tolerance must be > 0"));
        }
        Ok(())
    }
}

/// Eigenvalue heatmap over `(tau_m, axis)` and its zero level set.
pub fn critical_curve(n: i64, base: &ModelParams, plane: &PlaneSpec) -> Result<CriticalCurve> {
    plane.validate()?;
    base.validate()?;
    h_coefficient(n, 0.0, 1.0)?;
    let xs = linear_grid(plane.x_range.0, plane.x_range.1, plane.x_resolution);
    let ys = linear_grid(plane.y_range.0, plane.y_range.1, plane.y_resolution);
    let eval = |x: f64, y: f64| -> Result<f64> {
        let p = plane.axis.apply(&base.with_tau_m(x), y);
        mode_growth(n, &p).map(|r| r.eigenvalue)
    };
    let values = (0..ys.len() * xs.len())
        .into_par_iter()
        .map(|k| eval(xs[k % xs.len()], ys[k / xs.len()]))
        .collect::<Result<Vec<_>>>()?;
    let heatmap = Heatmap { xs, ys, values };

    let columns = (0..heatmap.xs.len())
        .into_par_iter()
        .map(|col| {
            let x = heatmap.xs[col];
            let mut found = Vec::new();
            for row in 0..heatmap.ys.len() - 1 {
                let (f0, f1) = (heatmap.at(col, row), heatmap.at(col, row + 1));
                if f0 == 0.0 {
                    found.push(CurvePoint { x, y: heatmap.ys[row] });
                } else if f1 != 0.0 && f0.signum() != f1.signum() {
                    let y = bisect(
                        heatmap.ys[row],
                        heatmap.ys[row + 1],
                        plane.tol,
                        |y| eval(x, y).map(|v| v > 0.0),
                        f0 > 0.0,
                    )?;
                    found.push(CurvePoint { x, y });
                }
            }
            Ok(found)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CriticalCurve {
        n,
        axis: plane.axis,
        heatmap,
        points: columns.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenRow {
    pub tau_m: f64,
    pub result: SpectralResult,
}

/// `mode_growth` over every `(n, tau_m)` pair, ordered by `n` then `tau_m`
/// as given.
pub fn eigen_table(ns: &[i64], params: &ModelParams, tau_m_grid: &[f64]) -> Result<Vec<EigenRow>> {
    params.validate()?;
    let mut rows = Vec::with_capacity(ns.len() * tau_m_grid.len());
    for &n in ns {
        for &tau_m in tau_m_grid {
            if !(tau_m >= 0.0 && tau_m.is_finite()) {
                return Err(Error::invalid("tau_m", format!("grid value must be >= 0, got {tau_m}")));
            }
            rows.push(EigenRow {
                tau_m,
                result: mode_growth(n, &params.with_tau_m(tau_m))?,
            });
        }
    }
    Ok(rows)
}

/// Number of sign changes in a sequence, ignoring exact zeros.
pub fn sign_changes(values: &[f64]) -> usize {
    let signs: Vec<bool> = values.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}
