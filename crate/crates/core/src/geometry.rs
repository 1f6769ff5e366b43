//! Discretization of the circle of radius `rho`.
//!
//! Nodes sit at `theta_i = -pi + i * dtheta` (zero-based `i`), `dtheta = 2 pi / I`.
//! Every node carries the same quadrature weight `rho * dtheta`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shorter arc length between two angles on a circle of radius `rho`.
pub fn circle_distance(theta: f64, theta_prime: f64, rho: f64) -> f64 {
    let gap = (theta - theta_prime).abs();
    rho * gap.min(TAU - gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: usize,
    radius: f64,
    angles: Vec<f64>,
    /// Arc length for each index offset `0..nodes`; the grid is circulant so
    /// `d_ij` depends only on `(j - i) mod I`.
    offset_distance: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: usize, radius: f64) -> Result<Self> {
        if nodes < 4 || !nodes.is_multiple_of(2) {
            return Err(Error::invalid(
                "nodes",
                format!("node count must be even and at least 4, got {nodes}"),
            ));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("rho", format!("radius must be > 0, got {radius}")));
        }
        let spacing = TAU / nodes as f64;
        let angles = (0..nodes).map(|i| -PI + i as f64 * spacing).collect();
        let offset_distance = (0..nodes).map(|m| radius * spacing * m.min(nodes - m) as f64).collect();
        Ok(Self {
            nodes,
            radius,
            angles,
            offset_distance,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Angular spacing `2 pi / I`.
    pub fn spacing(&self) -> f64 {
        TAU / self.nodes as f64
    }

    /// Quadrature weight of each node, `rho * dtheta`.
    pub fn weight(&self) -> f64 {
        self.radius * self.spacing()
    }

    pub fn circumference(&self) -> f64 {
        TAU * self.radius
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let m = (j + self.nodes - i) % self.nodes;
        self.offset_distance[m]
    }

    pub fn offset_distances(&self) -> &[f64] {
        &self.offset_distance
    }

    /// Riemann sum of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        invariant_sum(values) * self.weight()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.nodes {
            return Err(Error::GridMismatch {
                expected: self.nodes,
                actual: len,
            });
        }
        Ok(())
    }
}

/// Pointwise transport kernel `K_ij = exp(-decay * d_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    size: usize,
    decay: f64,
    entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(grid: &Grid, decay: f64) -> Result<Self> {
        check_decay(decay)?;
        let n = grid.len();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push((-decay * grid.distance(i, j)).exp());
            }
        }
        Ok(Self {
            size: n,
            decay,
            entries,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }
}

/// How integrals against the transport kernel are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Plain Riemann sum: weight `rho * dtheta` times the pointwise kernel.
    Riemann,
    /// Product integration: the kernel is integrated exactly over each node's
    /// cell, the other factor is taken as constant on the cell. Row sums equal
    /// the continuum kernel mass exactly.
    #[default]
    CellIntegrated,
}

/// Weighted circulant kernel operator `(Kf)_i = sum_j c_{(j - i) mod I} f_j`,
/// with the quadrature weight folded into the coefficients `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOperator {
    decay: f64,
    coefficients: Vec<f64>,
}

impl KernelOperator {
    pub fn new(grid: &Grid, decay: f64, rule: Quadrature) -> Result<Self> {
        check_decay(decay)?;
        let n = grid.len();
        let coefficients = match rule {
            Quadrature::Riemann => grid
                .offset_distances()
                .iter()
                .map(|d| (-decay * d).exp() * grid.weight())
                .collect(),
            Quadrature::CellIntegrated => {
                let h = grid.weight();
                let half = n / 2;
                (0..n)
                    .map(|m| {
                        let k = m.min(n - m);
                        if k == 0 {
                            // [-h/2, h/2]
                            h * one_minus_exp_over(decay * h / 2.0)
                        } else if k == half {
                            // both halves of the antipodal cell end at rho * pi
                            let far = h * half as f64;
                            h * (-decay * far).exp() * one_minus_exp_over(-decay * h / 2.0)
                        } else {
                            let near = h * (k as f64 - 0.5);
                            h * (-decay * near).exp() * one_minus_exp_over(decay * h)
                        }
                    })
                    .collect()
            }
        };
        Ok(Self { decay, coefficients })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Coefficient for index offset `m`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Discrete kernel mass (row sum).
    pub fn mass(&self) -> f64 {
        invariant_sum(&self.coefficients)
    }

    /// `out_i = sum_m c_m * input_{(i + m) mod I}`. The kernel is even
    /// (`c_m = c_{I-m}`), so opposite offsets share one multiply. The
    /// summation order depends only on the offset, so rotating `input`
    /// rotates `out` bit-for-bit.
    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        assert_eq!(input.len(), self.coefficients.len());
        assert_eq!(out.len(), self.coefficients.len());
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked just above.
                unsafe { circulant_avx2(&self.coefficients, input, out) };
                return;
            }
        }
        circulant(&self.coefficients, input, out);
    }
}

/// Wider registers only; no fused multiply-add, so the result is identical
/// to the portable path.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn circulant_avx2(coefficients: &[f64], input: &[f64], out: &mut [f64]) {
    circulant(coefficients, input, out);
}

#[inline(always)]
fn circulant(coefficients: &[f64], input: &[f64], out: &mut [f64]) {
    let n = coefficients.len();
    let half = n / 2;
    // tripled so that both i + m and i - m stay in bounds as plain slices
    let mut ext = Vec::with_capacity(3 * n);
    ext.extend_from_slice(input);
    ext.extend_from_slice(input);
    ext.extend_from_slice(input);
    let c0 = coefficients[0];
    for (o, x) in out.iter_mut().zip(input) {
        *o = c0 * x;
    }
    for m in 1..half {
        let cm = coefficients[m];
        let ahead = &ext[n + m..2 * n + m];
        let behind = &ext[n - m..2 * n - m];
        for ((o, a), b) in out.iter_mut().zip(ahead).zip(behind) {
            *o += cm * (a + b);
        }
    }
    let ch = coefficients[half];
    for (o, a) in out.iter_mut().zip(&ext[n + half..2 * n + half]) {
        *o += ch * a;
    }
}

fn check_decay(decay: f64) -> Result<()> {
    if !(decay >= 0.0 && decay.is_finite()) {
        return Err(Error::invalid(
            "decay",
            format!("kernel decay rate must be finite and >= 0, got {decay}"),
        ));
    }
    Ok(())
}

/// `(1 - exp(-x)) / x`, continuous at 0. Valid for either sign of `x`.
pub(crate) fn one_minus_exp_over(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x / 2.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Sum that does not depend on the order of `values`: sorts a copy first.
pub fn invariant_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_node_grid() {
        let g = Grid::new(4, 1.0).unwrap();
        let expect = [-PI, -PI / 2.0, 0.0, PI / 2.0];
        for (a, e) in g.angles().iter().zip(expect) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!((g.weight() - PI / 2.0).abs() < 1e-15);
        let g2 = Grid::new(4, 2.0).unwrap();
        assert!((g2.distance(0, 1) - PI).abs() < 1e-15);
        assert!((g2.distance(0, 2) - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn standard_grid_weights() {
        let g = Grid::new(128, 1.0).unwrap();
        assert!((g.spacing() - TAU / 128.0).abs() < 1e-16);
        let total = g.weight() * g.len() as f64;
        assert!((total - TAU).abs() / TAU < 1e-14);
        assert_eq!(g.angles()[0], -PI);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(2, 1.0).is_err());
        assert!(Grid::new(7, 1.0).is_err());
        assert!(Grid::new(8, 0.0).is_err());
        assert!(Grid::new(8, -1.0).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(circle_distance(0.0, 0.0, 1.0), 0.0);
        assert!(circle_distance(-PI, PI, 1.0).abs() < 1e-15);
        assert!((circle_distance(0.0, PI, 2.0) - TAU).abs() < 1e-15);
    }

    #[test]
    fn kernel_examples() {
        let g = Grid::new(4, 1.0).unwrap();
        let flat = KernelMatrix::new(&g, 0.0).unwrap();
        assert!((0..4).all(|i| (0..4).all(|j| flat.get(i, j) == 1.0)));
        let k = KernelMatrix::new(&g, 1.0).unwrap();
        // exp(-pi/2)
        assert!((k.get(0, 1) - 0.207_879_576_350_761_9).abs() < 1e-15);
        assert!(KernelMatrix::new(&g, -0.1).is_err());
    }

    #[test]
    fn cell_integrated_mass_is_exact() {
        for &(nodes, rho, decay) in &[(128, 1.0, 2.0), (64, 0.5, 10.0), (16, 2.0, 0.0), (128, 1.0, 1e-12)] {
            let g = Grid::new(nodes, rho).unwrap();
            let op = KernelOperator::new(&g, decay, Quadrature::CellIntegrated).unwrap();
            let exact = crate::spectral::exp_kernel_mass(decay, rho);
            assert!((op.mass() - exact).abs() / exact < 1e-14, "{nodes} {rho} {decay}");
        }
    }

    #[test]
    fn riemann_mass_converges() {
        let g = Grid::new(4096, 1.0).unwrap();
        for decay in [0.1, 1.0, 5.0] {
            let op = KernelOperator::new(&g, decay, Quadrature::Riemann).unwrap();
            let exact = crate::spectral::exp_kernel_mass(decay, 1.0);
            assert!((op.mass() - exact).abs() / exact < 1e-4);
        }
    }

    #[test]
    fn apply_matches_dense_matrix() {
        let g = Grid::new(16, 1.3).unwrap();
        let dense = KernelMatrix::new(&g, 0.7).unwrap();
        let op = KernelOperator::new(&g, 0.7, Quadrature::Riemann).unwrap();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin() + 2.0).collect();
        let mut out = vec![0.0; 16];
        op.apply(&x, &mut out);
        for (i, got) in out.iter().enumerate() {
            let expect: f64 = (0..16).map(|j| dense.get(i, j) * x[j] * g.weight()).sum();
            assert!((got - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn apply_commutes_with_rotation_exactly() {
        let g = Grid::new(32, 1.0).unwrap();
        let op = KernelOperator::new(&g, 3.0, Quadrature::CellIntegrated).unwrap();
        let x: Vec<f64> = (0..32).map(|i| ((i * i) as f64 * 0.11).cos() + 1.5).collect();
        let mut rotated = x.clone();
        rotated.rotate_right(5);
        let (mut a, mut b) = (vec![0.0; 32], vec![0.0; 32]);
        op.apply(&x, &mut a);
        op.apply(&rotated, &mut b);
        a.rotate_right(5);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric_with_unit_diagonal(half in 2usize..24, rho in 0.1f64..5.0, decay in 0.0f64..20.0) {
            let g = Grid::new(2 * half, rho).unwrap();
            let k = KernelMatrix::new(&g, decay).unwrap();
            for i in 0..g.len() {
                prop_assert_eq!(k.get(i, i), 1.0);
                for j in 0..g.len() {
                    prop_assert_eq!(k.get(i, j), k.get(j, i));
                    prop_assert!(k.get(i, j) > 0.0 && k.get(i, j) <= 1.0);
                    let d = g.distance(i, j);
                    prop_assert!(d >= 0.0 && d <= rho * PI * (1.0 + 1e-15));
                }
            }
            prop_assert!((g.integrate(&vec![1.0; g.len()]) - g.circumference()).abs() <= 1e-14 * g.circumference());
        }

        #[test]
        fn grid_distance_matches_angles(half in 2usize..40, rho in 0.1f64..5.0, i in 0usize..80, j in 0usize..80) {
            let g = Grid::new(2 * half, rho).unwrap();
            let (i, j) = (i % g.len(), j % g.len());
            let direct = circle_distance(g.angles()[i], g.angles()[j], rho);
            prop_assert!((direct - g.distance(i, j)).abs() < 1e-12);
        }
    }
}
