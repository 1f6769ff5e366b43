//! Instantaneous market equilibrium for a fixed manufacturing distribution.
//!
//! For given densities `lambda` (manufacturing) and `phi` (agriculture) the
//! only true unknowns are the two nominal wage fields. With the substitution
//! `W^A = (w^A)^eta` and `W^M = (w^M)^sigma` they solve the fixed-point
//! problem
//!
//! ```text
//! W^A(x) = int Y(y) / [int phi(z) W^A(z)^((1-eta)/eta) e^{-alpha d(y,z)} dz] e^{-alpha d(x,y)} dy
//! W^M(x) = int Y(y) / [int lambda(z) W^M(z)^((1-sigma)/sigma) e^{-beta d(y,z)} dz] e^{-beta d(x,y)} dy
//! ```
//!
//! with `Y = mu w^M lambda + (1 - mu) w^A phi`. The inner integrals are the
//! price indices raised to `1 - eta` and `1 - sigma`. The map commutes with a
//! joint rescaling of both wage fields, so the fixed points form a ray; the
//! solver pins it by keeping the mean of `w^M` at 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{invariant_sum, Grid, KernelOperator, Quadrature};
use crate::params::ModelParams;

/// Tolerance on `|integral(lambda) - 1|` accepted by [`PopulationField::new`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Nonnegative density sampled on a grid, integrating to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationField {
    values: Vec<f64>,
}

impl PopulationField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::check(grid, &values)?;
        let mass = grid.integrate(&values);
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(
                "lambda",
                format!("density must integrate to 1, got {mass}"),
            ));
        }
        Ok(Self { values })
    }

    /// Rescale arbitrary nonnegative weights to unit mass.
    pub fn normalized(grid: &Grid, mut values: Vec<f64>) -> Result<Self> {
        Self::check(grid, &values)?;
        let mass = grid.integrate(&values);
        if !(mass > 0.0) {
            return Err(Error::invalid("lambda", "density has zero mass"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self { values })
    }

    pub fn uniform(grid: &Grid) -> Self {
        Self {
            values: vec![1.0 / grid.circumference(); grid.len()],
        }
    }

    /// Wraps values without the mass check. Used by the time stepper, which
    /// tracks drift itself.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    fn check(grid: &Grid, values: &[f64]) -> Result<()> {
        grid.check_len(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "lambda",
                node: i,
            });
        }
        if let Some(i) = values.iter().position(|v| *v < 0.0) {
            return Err(Error::invalid(
                "lambda",
                format!("density must be nonnegative, node {i} is {}", values[i]),
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self, grid: &Grid) -> f64 {
        grid.integrate(&self.values)
    }

    /// Shift every value `k` nodes in the direction of increasing angle.
    pub fn rotated(&self, k: usize) -> Self {
        let mut values = self.values.clone();
        let n = values.len();
        values.rotate_right(k % n);
        Self { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Stop when both transformed wage fields move less than this (sup norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the mean manufacturing wage at 1 after every iteration.
    pub normalize_wages: bool,
    /// Relaxation factor in (0, 2). 1 is the plain iteration, smaller values
    /// damp it and larger ones over-relax. The fixed point does not depend on
    /// it. Near agglomerated states the plain map contracts slowly, and
    /// over-relaxation roughly halves the number of iterations.
    pub relaxation: f64,
    pub quadrature: Quadrature,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            normalize_wages: true,
            relaxation: 1.7,
            quadrature: Quadrature::CellIntegrated,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "solver tolerance must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::invalid(
                "relaxation",
                format!("must lie in (0, 2), got {}", self.relaxation),
            ));
        }
        Ok(())
    }
}

/// Instantaneous-equilibrium fields, one value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub income: Vec<f64>,
    pub wage_a: Vec<f64>,
    pub wage_m: Vec<f64>,
    pub price_a: Vec<f64>,
    pub price_m: Vec<f64>,
    pub real_wage: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm change of the last iteration over both transformed wages.
    pub residual: f64,
    transformed_a: Vec<f64>,
    transformed_m: Vec<f64>,
}

impl Equilibrium {
    /// Latest fixed-point iterate of `(w^A)^eta`. It agrees with
    /// `wage_a^eta` to within the solver tolerance and is the natural warm
    /// start for the next solve.
    pub fn transformed_a(&self) -> &[f64] {
        &self.transformed_a
    }

    /// Latest fixed-point iterate of `(w^M)^sigma`; see [`Self::transformed_a`].
    pub fn transformed_m(&self) -> &[f64] {
        &self.transformed_m
    }
}

/// Fixed-point solver bound to one grid and parameter set. Kernel operators
/// are built once and reused across solves.
#[derive(Debug, Clone)]
pub struct EquilibriumSolver {
    grid: Grid,
    params: ModelParams,
    opts: SolverOptions,
    kernel_a: KernelOperator,
    kernel_m: KernelOperator,
}

struct Workspace {
    income: Vec<f64>,
    src_a: Vec<f64>,
    src_m: Vec<f64>,
    den_a: Vec<f64>,
    den_m: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            income: vec![0.0; n],
            src_a: vec![0.0; n],
            src_m: vec![0.0; n],
            den_a: vec![0.0; n],
            den_m: vec![0.0; n],
        }
    }
}

impl EquilibriumSolver {
    pub fn new(grid: &Grid, params: &ModelParams, opts: SolverOptions) -> Result<Self> {
        params.validate()?;
        opts.validate()?;
        if (grid.radius() - params.rho).abs() > 1e-12 * params.rho {
            return Err(Error::invalid(
                "rho",
                format!("grid radius {} differs from model radius {}", grid.radius(), params.rho),
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            params: *params,
            opts,
            kernel_a: KernelOperator::new(grid, params.alpha(), opts.quadrature)?,
            kernel_m: KernelOperator::new(grid, params.beta(), opts.quadrature)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Solve from unit wages, or from `warm`'s wages when given.
    pub fn solve(
        &self,
        lambda: &PopulationField,
        phi: &PopulationField,
        warm: Option<&Equilibrium>,
    ) -> Result<Equilibrium> {
        let guess = warm.map(|eq| (eq.transformed_a.as_slice(), eq.transformed_m.as_slice()));
        self.solve_from(lambda, phi, guess)
    }

    /// Solve starting from explicit transformed wages `(W^A, W^M)`; unit
    /// wages when `None`. Only the starting point differs, not the fixed point.
    pub fn solve_from(
        &self,
        lambda: &PopulationField,
        phi: &PopulationField,
        guess: Option<(&[f64], &[f64])>,
    ) -> Result<Equilibrium> {
        let n = self.grid.len();
        self.grid.check_len(lambda.len())?;
        self.grid.check_len(phi.len())?;
        let (mut big_a, mut big_m) = match guess {
            Some((a, m)) if a.len() == n && m.len() == n && a.iter().chain(m).all(|v| *v > 0.0 && v.is_finite()) => {
                (a.to_vec(), m.to_vec())
            }
            _ => (vec![1.0; n], vec![1.0; n]),
        };
        let mut next_a = vec![0.0; n];
        let mut next_m = vec![0.0; n];
        let (eta, sigma) = (self.params.eta, self.params.sigma);
        let mut wage_a: Vec<f64> = big_a.iter().map(|v| root(*v, eta)).collect();
        let mut wage_m: Vec<f64> = big_m.iter().map(|v| root(*v, sigma)).collect();
        if self.opts.normalize_wages {
            normalize(&mut big_a, &mut big_m, &mut wage_a, &mut wage_m, eta, sigma);
        }
        let mut next_wa = vec![0.0; n];
        let mut next_wm = vec![0.0; n];
        let mut ws = Workspace::new(n);
        let theta = self.opts.relaxation;

        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < self.opts.max_iter {
            iterations += 1;
            self.update(
                lambda.values(),
                phi.values(),
                (&big_a, &wage_a),
                (&big_m, &wage_m),
                &mut next_a,
                &mut next_m,
                &mut ws,
            );
            if theta != 1.0 {
                relax(&mut next_a, &big_a, theta);
                relax(&mut next_m, &big_m, theta);
            }
            for (w, v) in next_wa.iter_mut().zip(&next_a) {
                *w = root(*v, eta);
            }
            for (w, v) in next_wm.iter_mut().zip(&next_m) {
                *w = root(*v, sigma);
            }
            if self.opts.normalize_wages {
                normalize(&mut next_a, &mut next_m, &mut next_wa, &mut next_wm, eta, sigma);
            }
            check_finite("W^A", &next_a)?;
            check_finite("W^M", &next_m)?;
            residual = sup_diff(&next_a, &big_a).max(sup_diff(&next_m, &big_m));
            if residual < self.opts.tol {
                // The kernel sums of this iteration belong to its input
                // wages, so the input wages are returned with them; the newer
                // iterate is kept as the warm start for later solves.
                let mut eq = self.finish((wage_a, next_a), (wage_m, next_m), ws.income, ws.den_a, ws.den_m)?;
                eq.iterations = iterations;
                eq.residual = residual;
                return Ok(eq);
            }
            std::mem::swap(&mut big_a, &mut next_a);
            std::mem::swap(&mut big_m, &mut next_m);
            std::mem::swap(&mut wage_a, &mut next_wa);
            std::mem::swap(&mut wage_m, &mut next_wm);
        }
        Err(Error::NonConvergence { iterations, residual })
    }

    /// One application of the fixed-point map. Each sector is passed as the
    /// pair (transformed wage, wage).
    #[allow(clippy::too_many_arguments)]
    fn update(
        &self,
        lambda: &[f64],
        phi: &[f64],
        (big_a, wage_a): (&[f64], &[f64]),
        (big_m, wage_m): (&[f64], &[f64]),
        out_a: &mut [f64],
        out_m: &mut [f64],
        ws: &mut Workspace,
    ) {
        let mu = self.params.mu;
        for i in 0..lambda.len() {
            let (wa, wm) = (wage_a[i], wage_m[i]);
            ws.income[i] = mu * wm * lambda[i] + (1.0 - mu) * wa * phi[i];
            // w^(1 - eta) = w / W
            ws.src_a[i] = phi[i] * wa / big_a[i];
            ws.src_m[i] = lambda[i] * wm / big_m[i];
        }
        self.kernel_a.apply(&ws.src_a, &mut ws.den_a);
        self.kernel_m.apply(&ws.src_m, &mut ws.den_m);
        for i in 0..lambda.len() {
            ws.src_a[i] = ws.income[i] / ws.den_a[i];
            ws.src_m[i] = ws.income[i] / ws.den_m[i];
        }
        self.kernel_a.apply(&ws.src_a, out_a);
        self.kernel_m.apply(&ws.src_m, out_m);
    }

    /// Income, price indices and real wage implied by the two wage fields.
    pub fn fields_from_wages(
        &self,
        lambda: &PopulationField,
        phi: &PopulationField,
        wage_a: Vec<f64>,
        wage_m: Vec<f64>,
    ) -> Result<Equilibrium> {
        self.grid.check_len(wage_a.len())?;
        self.grid.check_len(wage_m.len())?;
        let (eta, sigma) = (self.params.eta, self.params.sigma);
        let big_a: Vec<f64> = wage_a.iter().map(|w| w.powf(eta)).collect();
        let big_m: Vec<f64> = wage_m.iter().map(|w| w.powf(sigma)).collect();
        let n = self.grid.len();
        let mu = self.params.mu;
        let (lam, ph) = (lambda.values(), phi.values());
        let income: Vec<f64> = (0..n)
            .map(|i| mu * wage_m[i] * lam[i] + (1.0 - mu) * wage_a[i] * ph[i])
            .collect();
        // w^(1 - eta) = w / W
        let src_a: Vec<f64> = (0..n).map(|i| ph[i] * wage_a[i] / big_a[i]).collect();
        let src_m: Vec<f64> = (0..n).map(|i| lam[i] * wage_m[i] / big_m[i]).collect();
        let mut den_a = vec![0.0; n];
        let mut den_m = vec![0.0; n];
        self.kernel_a.apply(&src_a, &mut den_a);
        self.kernel_m.apply(&src_m, &mut den_m);
        self.finish((wage_a, big_a), (wage_m, big_m), income, den_a, den_m)
    }

    /// Builds the full equilibrium record from consistent wages, transformed
    /// wages, income and the price-index kernel sums
    /// `den^A = K_alpha(phi (w^A)^(1-eta))`, `den^M = K_beta(lambda (w^M)^(1-sigma))`.
    fn finish(
        &self,
        (wage_a, transformed_a): (Vec<f64>, Vec<f64>),
        (wage_m, transformed_m): (Vec<f64>, Vec<f64>),
        income: Vec<f64>,
        den_a: Vec<f64>,
        den_m: Vec<f64>,
    ) -> Result<Equilibrium> {
        let p = &self.params;
        let (mu, eta, sigma) = (p.mu, p.eta, p.sigma);
        let price_a: Vec<f64> = den_a.iter().map(|d| power(*d, 1.0 / (1.0 - eta))).collect();
        let price_m: Vec<f64> = den_m.iter().map(|d| power(*d, 1.0 / (1.0 - sigma))).collect();
        // omega = w^M (G^M)^(-mu) (G^A)^(mu - 1), written through the sums
        let (ea, em) = ((1.0 - mu) / (eta - 1.0), mu / (sigma - 1.0));
        let real_wage: Vec<f64> = (0..wage_m.len())
            .map(|i| wage_m[i] * power(den_m[i], em) * power(den_a[i], ea))
            .collect();

        check_finite("Y", &income)?;
        check_finite("G^A", &price_a)?;
        check_finite("G^M", &price_m)?;
        check_finite("omega^M", &real_wage)?;
        Ok(Equilibrium {
            income,
            wage_a,
            wage_m,
            price_a,
            price_m,
            real_wage,
            iterations: 0,
            residual: 0.0,
            transformed_a,
            transformed_m,
        })
    }

    /// Largest sup-norm mismatch over the six equilibrium equations when each
    /// stored field is recomputed from the others.
    pub fn residual(&self, eq: &Equilibrium, lambda: &PopulationField, phi: &PopulationField) -> f64 {
        let n = self.grid.len();
        let p = &self.params;
        let (mu, eta, sigma) = (p.mu, p.eta, p.sigma);
        let (lam, ph) = (lambda.values(), phi.values());
        let mut worst: f64 = 0.0;
        let mut track = |stored: &[f64], recomputed: &[f64]| {
            worst = worst.max(sup_diff(stored, recomputed));
        };

        let income: Vec<f64> = (0..n)
            .map(|i| mu * eq.wage_m[i] * lam[i] + (1.0 - mu) * eq.wage_a[i] * ph[i])
            .collect();
        track(&eq.income, &income);

        let mut buf = vec![0.0; n];
        let src: Vec<f64> = (0..n).map(|i| ph[i] * eq.wage_a[i].powf(1.0 - eta)).collect();
        self.kernel_a.apply(&src, &mut buf);
        track(
            &eq.price_a,
            &buf.iter().map(|v| v.powf(1.0 / (1.0 - eta))).collect::<Vec<_>>(),
        );

        let src: Vec<f64> = (0..n).map(|i| eq.income[i] * eq.price_a[i].powf(eta - 1.0)).collect();
        self.kernel_a.apply(&src, &mut buf);
        track(&eq.wage_a, &buf.iter().map(|v| v.powf(1.0 / eta)).collect::<Vec<_>>());

        let src: Vec<f64> = (0..n).map(|i| lam[i] * eq.wage_m[i].powf(1.0 - sigma)).collect();
        self.kernel_m.apply(&src, &mut buf);
        track(
            &eq.price_m,
            &buf.iter().map(|v| v.powf(1.0 / (1.0 - sigma))).collect::<Vec<_>>(),
        );

        let src: Vec<f64> = (0..n).map(|i| eq.income[i] * eq.price_m[i].powf(sigma - 1.0)).collect();
        self.kernel_m.apply(&src, &mut buf);
        track(&eq.wage_m, &buf.iter().map(|v| v.powf(1.0 / sigma)).collect::<Vec<_>>());

        let real: Vec<f64> = (0..n)
            .map(|i| eq.wage_m[i] * eq.price_m[i].powf(-mu) * eq.price_a[i].powf(mu - 1.0))
            .collect();
        track(&eq.real_wage, &real);
        worst
    }
}

/// One-shot convenience wrapper around [`EquilibriumSolver`].
pub fn solve_instantaneous(
    grid: &Grid,
    lambda: &PopulationField,
    phi: &PopulationField,
    params: &ModelParams,
    opts: SolverOptions,
) -> Result<Equilibrium> {
    EquilibriumSolver::new(grid, params, opts)?.solve(lambda, phi, None)
}

/// Self-consistency audit of `eq`; see [`EquilibriumSolver::residual`].
pub fn equilibrium_residual(
    grid: &Grid,
    eq: &Equilibrium,
    lambda: &PopulationField,
    phi: &PopulationField,
    params: &ModelParams,
    quadrature: Quadrature,
) -> Result<f64> {
    let opts = SolverOptions {
        quadrature,
        ..Default::default()
    };
    Ok(EquilibriumSolver::new(grid, params, opts)?.residual(eq, lambda, phi))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Move `next` to `old + theta * (next - old)`, keeping the plain update
/// wherever over-relaxation would leave the positive cone.
fn relax(next: &mut [f64], old: &[f64], theta: f64) {
    for (nx, old) in next.iter_mut().zip(old) {
        let relaxed = theta * *nx + (1.0 - theta) * old;
        if relaxed > 0.0 {
            *nx = relaxed;
        }
    }
}

/// Rescale so that the manufacturing wages average exactly one.
fn normalize(big_a: &mut [f64], big_m: &mut [f64], wage_a: &mut [f64], wage_m: &mut [f64], eta: f64, sigma: f64) {
    let scale = wage_m.len() as f64 / invariant_sum(wage_m);
    let (sa, sm) = (scale.powf(eta), scale.powf(sigma));
    big_a.iter_mut().for_each(|v| *v *= sa);
    big_m.iter_mut().for_each(|v| *v *= sm);
    wage_a.iter_mut().for_each(|v| *v *= scale);
    wage_m.iter_mut().for_each(|v| *v *= scale);
}

/// `x^e` with exact shortcuts for the exponents produced by integer and
/// half-integer elasticities.
fn power(x: f64, e: f64) -> f64 {
    match e {
        1.0 => x,
        -1.0 => 1.0 / x,
        0.5 => x.sqrt(),
        -0.5 => 1.0 / x.sqrt(),
        0.25 => x.sqrt().sqrt(),
        2.0 => x * x,
        -2.0 => 1.0 / (x * x),
        _ => x.powf(e),
    }
}

/// `x^(1/k)`, using the dedicated square and cube roots when they apply.
fn root(x: f64, k: f64) -> f64 {
    if k == 2.0 {
        x.sqrt()
    } else if k == 3.0 {
        x.cbrt()
    } else {
        x.powf(1.0 / k)
    }
}

fn check_finite(field: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite { field, node }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::homogeneous_state;

    fn params() -> ModelParams {
        ModelParams {
            mu: 0.5,
            sigma: 3.0,
            eta: 2.0,
            tau_a: 2.0,
            tau_m: 4.0,
            rho: 1.0,
            gamma: 1.0,
        }
    }

    fn bumpy(grid: &Grid) -> PopulationField {
        let vals = grid
            .angles()
            .iter()
            .map(|t| 1.0 + 0.4 * (2.0 * t).cos() + 0.2 * (5.0 * t).cos())
            .collect();
        PopulationField::normalized(grid, vals).unwrap()
    }

    #[test]
    fn homogeneous_matches_closed_form() {
        let grid = Grid::new(128, 1.0).unwrap();
        let p = params();
        let u = PopulationField::uniform(&grid);
        let eq = solve_instantaneous(&grid, &u, &u, &p, SolverOptions::default()).unwrap();
        let expect = homogeneous_state(&p).real_wage;
        for w in &eq.real_wage {
            assert!((w - expect).abs() / expect < 1e-8);
        }
        assert!(eq.residual < 1e-10);
    }

    #[test]
    fn closed_form_state_satisfies_discrete_equations() {
        let grid = Grid::new(64, 1.0).unwrap();
        let p = params();
        let s = homogeneous_state(&p);
        let u = PopulationField::uniform(&grid);
        let n = grid.len();
        let eq = Equilibrium {
            income: vec![s.income; n],
            wage_a: vec![s.wage; n],
            wage_m: vec![s.wage; n],
            price_a: vec![s.price_a; n],
            price_m: vec![s.price_m; n],
            real_wage: vec![s.real_wage; n],
            iterations: 0,
            residual: 0.0,
            transformed_a: vec![1.0; n],
            transformed_m: vec![1.0; n],
        };
        let r = equilibrium_residual(&grid, &eq, &u, &u, &p, Quadrature::CellIntegrated).unwrap();
        assert!(r <= 1e-12, "{r}");
    }

    #[test]
    fn solved_fields_are_self_consistent() {
        let grid = Grid::new(128, 1.0).unwrap();
        let p = params();
        let lam = bumpy(&grid);
        let phi = PopulationField::uniform(&grid);
        let solver = EquilibriumSolver::new(&grid, &p, SolverOptions::default()).unwrap();
        let eq = solver.solve(&lam, &phi, None).unwrap();
        assert!(eq.residual < 1e-10);
        assert!(solver.residual(&eq, &lam, &phi) <= 1e-8);
        for f in [
            &eq.income,
            &eq.wage_a,
            &eq.wage_m,
            &eq.price_a,
            &eq.price_m,
            &eq.real_wage,
        ] {
            assert!(f.iter().all(|v| *v > 0.0));
        }

        let mut broken = eq.clone();
        broken.wage_m[17] *= 1.1;
        assert!(solver.residual(&broken, &lam, &phi) > 1e-3);
    }

    #[test]
    fn riemann_rule_also_converges() {
        let grid = Grid::new(64, 1.0).unwrap();
        let opts = SolverOptions {
            quadrature: Quadrature::Riemann,
            ..Default::default()
        };
        let lam = bumpy(&grid);
        let phi = PopulationField::uniform(&grid);
        let solver = EquilibriumSolver::new(&grid, &params(), opts).unwrap();
        let eq = solver.solve(&lam, &phi, None).unwrap();
        assert!(solver.residual(&eq, &lam, &phi) <= 1e-8);
    }

    #[test]
    fn reflection_symmetry() {
        let grid = Grid::new(128, 1.0).unwrap();
        let lam = bumpy(&grid);
        let phi = PopulationField::uniform(&grid);
        let eq = solve_instantaneous(&grid, &lam, &phi, &params(), SolverOptions::default()).unwrap();
        // theta_i = -pi + i h reflects to index (I - i) mod I
        let n = grid.len();
        for f in [
            &eq.income,
            &eq.wage_a,
            &eq.wage_m,
            &eq.price_a,
            &eq.price_m,
            &eq.real_wage,
        ] {
            for i in 0..n {
                let j = (n - i) % n;
                assert!((f[i] - f[j]).abs() <= 1e-10, "{i}");
            }
        }
    }

    #[test]
    fn rotation_equivariance_is_exact() {
        let grid = Grid::new(64, 1.0).unwrap();
        let lam = bumpy(&grid);
        let skew = PopulationField::normalized(
            &grid,
            lam.values()
                .iter()
                .enumerate()
                .map(|(i, v)| v * (1.0 + 0.01 * i as f64))
                .collect(),
        )
        .unwrap();
        let phi = PopulationField::uniform(&grid);
        let solver = EquilibriumSolver::new(&grid, &params(), SolverOptions::default()).unwrap();
        let a = solver.solve(&skew, &phi, None).unwrap();
        let b = solver.solve(&skew.rotated(9), &phi, None).unwrap();
        let mut rotated = a.real_wage.clone();
        rotated.rotate_right(9);
        assert_eq!(rotated, b.real_wage);
        let mut rotated = a.wage_a.clone();
        rotated.rotate_right(9);
        assert_eq!(rotated, b.wage_a);
    }

    #[test]
    fn wage_gauge_leaves_real_wage_unchanged() {
        let grid = Grid::new(128, 1.0).unwrap();
        let lam = bumpy(&grid);
        let phi = PopulationField::uniform(&grid);
        let solver = EquilibriumSolver::new(&grid, &params(), SolverOptions::default()).unwrap();
        let eq = solver.solve(&lam, &phi, None).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled = solver
                .fields_from_wages(
                    &lam,
                    &phi,
                    eq.wage_a.iter().map(|w| w * c).collect(),
                    eq.wage_m.iter().map(|w| w * c).collect(),
                )
                .unwrap();
            for (a, b) in scaled.real_wage.iter().zip(&eq.real_wage) {
                assert!((a - b).abs() / b <= 1e-12);
            }
        }
    }

    #[test]
    fn deterministic() {
        let grid = Grid::new(64, 1.0).unwrap();
        let lam = bumpy(&grid);
        let phi = PopulationField::uniform(&grid);
        let solver = EquilibriumSolver::new(&grid, &params(), SolverOptions::default()).unwrap();
        let a = solver.solve(&lam, &phi, None).unwrap();
        let b = solver.solve(&lam, &phi, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_convergence_is_reported() {
        let grid = Grid::new(64, 1.0).unwrap();
        let opts = SolverOptions {
            max_iter: 2,
            ..Default::default()
        };
        let lam = bumpy(&grid);
        let phi = PopulationField::uniform(&grid);
        let err = solve_instantaneous(&grid, &lam, &phi, &params(), opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }));
    }

    #[test]
    fn field_validation() {
        let grid = Grid::new(8, 1.0).unwrap();
        assert!(PopulationField::new(&grid, vec![1.0; 8]).is_err());
        assert!(PopulationField::new(&grid, vec![1.0; 6]).is_err());
        let mut v = vec![1.0 / grid.circumference(); 8];
        assert!(PopulationField::new(&grid, v.clone()).is_ok());
        v[0] = -v[0];
        assert!(PopulationField::normalized(&grid, v).is_err());
    }
}
