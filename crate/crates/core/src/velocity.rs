//! Velocity lattice, global Maxwellian, velocity weight and moment basis.

use nalgebra::DMatrix;

use crate::{BgkError, Result, Vec3};

/// Denominator of the energy basis vector `chi_4 = (|v|^2 - 3) / d * sqrt(mu)`.
///
/// With `d = sqrt(6)` the basis is orthonormal and `<f, chi_4>` equals the
/// energy chart variable `G` exactly.
#[cfg(not(feature = "literal-chi4"))]
pub const CHI4_DENOM: f64 = 2.449_489_742_783_178;
#[cfg(feature = "literal-chi4")]
pub const CHI4_DENOM: f64 = 2.0;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Default quadrature tolerance on `sum q mu = 1`.
pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-8;

/// Floor below which density (and temperature) count as degenerate.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

/// Normalised global Maxwellian `(2 pi)^{-3/2} exp(-|v|^2 / 2)`.
#[inline]
pub fn global_maxwellian(v: &Vec3) -> f64 {
    (-0.5 * crate::dot3(v, v)).exp() / TWO_PI.powf(1.5)
}

/// Parameters of the velocity weight `w(v) = (1 + |v|)^beta exp(theta |v|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    pub beta: f64,
    pub theta: f64,
}

impl WeightParams {
    /// Validates admissibility: `0 < theta < 1/4, beta >= 0`, or
    /// `theta = 0, beta > 3/2`.
    pub fn new(beta: f64, theta: f64) -> Result<Self> {
        if !beta.is_finite() || !theta.is_finite() {
            return Err(BgkError::Config("weight parameters must be finite".into()));
        }
        if theta < 0.0 {
            return Err(BgkError::Config(format!("theta = {theta} violates theta >= 0")));
        }
        if theta >= 0.25 {
            return Err(BgkError::Config(format!("theta = {theta} violates theta < 1/4")));
        }
        if theta == 0.0 {
            if beta <= 1.5 {
                return Err(BgkError::Config(format!("beta = {beta} violates beta > 3/2 for theta=0")));
            }
        } else if beta < 0.0 {
            return Err(BgkError::Config(format!("beta = {beta} violates beta >= 0 for 0 < theta < 1/4")));
        }
        Ok(WeightParams { beta, theta })
    }

    pub fn value(&self, v: &Vec3) -> f64 {
        let s2 = crate::dot3(v, v);
        (1.0 + s2.sqrt()).powf(self.beta) * (self.theta * s2).exp()
    }
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams { beta: 0.0, theta: 0.1 }
    }
}

/// `w(v)`; see [`WeightParams::value`].
pub fn weight_value(wp: &WeightParams, v: &Vec3) -> f64 {
    wp.value(v)
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Macroscopic state `(rho, U, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Macro {
    pub rho: f64,
    pub u: Vec3,
    pub temp: f64,
}

impl Macro {
    pub const EQUILIBRIUM: Macro = Macro { rho: 1.0, u: [0.0; 3], temp: 1.0 };

    pub fn new(rho: f64, u: Vec3, temp: f64) -> Self {
        Macro { rho, u, temp }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.temp > 0.0) || !self.rho.is_finite() || !self.temp.is_finite() {
            return Err(BgkError::Degenerate(format!(
                "rho = {}, T = {} must both be positive",
                self.rho, self.temp
            )));
        }
        Ok(())
    }
}

/// One-dimensional axis rule: a Gauss rule for the weight `phi(s)` on each
/// half-axis, mirrored to the negative half.
///
/// The rule integrates `p(s) phi(s)` exactly for polynomials of degree `< n`
/// on each half-line separately, so full-space moments and half-space wall
/// fluxes, whose integrand has a kink at `s = 0`, are resolved to the same
/// accuracy. The half-line measure is untruncated unless its outermost node
/// would leave `[0, v_max]`, in which case it is cut at `v_max`. Returned
/// weights are for the plain integral `int g(s) ds`, i.e. divided by `phi`
/// at the node.
fn axis_rule(n: usize, v_max: f64) -> (Vec<f64>, Vec<f64>) {
    // phi is below 1e-40 past this point
    const TAIL: f64 = 14.0;
    let (nodes, weights) = half_line_gauss(n / 2, TAIL);
    if nodes.last().is_some_and(|&s| s <= v_max) {
        return mirror_rule(nodes, weights);
    }
    let (nodes, weights) = half_line_gauss(n / 2, v_max.min(TAIL));
    mirror_rule(nodes, weights)
}

fn mirror_rule(nodes: Vec<f64>, weights: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut all_nodes: Vec<f64> = nodes.iter().rev().map(|s| -s).collect();
    let mut all_weights: Vec<f64> = weights.iter().rev().copied().collect();
    all_nodes.extend_from_slice(&nodes);
    all_weights.extend_from_slice(&weights);
    (all_nodes, all_weights)
}

/// Gauss rule with `half` nodes for `phi(s) ds` on `[0, cut]`, ascending,
/// with weights divided by `phi` at the node.
fn half_line_gauss(half: usize, cut: f64) -> (Vec<f64>, Vec<f64>) {
    let phi = |s: f64| (-0.5 * s * s).exp() / TWO_PI.sqrt();

    // discretised measure phi(s) ds on [0, cut]: composite Gauss-Legendre
    let (gl_x, gl_w) = gauss_legendre(24);
    let panels = 60;
    let mut xs = Vec::with_capacity(panels * gl_x.len());
    let mut ws = Vec::with_capacity(panels * gl_x.len());
    for p in 0..panels {
        let a = cut * p as f64 / panels as f64;
        let b = cut * (p + 1) as f64 / panels as f64;
        for (x, w) in gl_x.iter().zip(&gl_w) {
            let s = a + (b - a) * x;
            xs.push(s);
            ws.push((b - a) * w * phi(s));
        }
    }

    // Stieltjes procedure for the three-term recurrence
    let mut alpha = vec![0.0; half];
    let mut beta = vec![0.0; half];
    let mut p_prev = vec![0.0; xs.len()];
    let mut p_cur = vec![1.0; xs.len()];
    let mut norm_prev = 1.0;
    for k in 0..half {
        let norm: f64 = p_cur.iter().zip(&ws).map(|(p, w)| w * p * p).sum();
        let xnorm: f64 = p_cur.iter().zip(&ws).zip(&xs).map(|((p, w), x)| w * x * p * p).sum();
        alpha[k] = xnorm / norm;
        beta[k] = if k == 0 { norm } else { norm / norm_prev };
        let next: Vec<f64> = (0..xs.len())
            .map(|i| (xs[i] - alpha[k]) * p_cur[i] - if k == 0 { 0.0 } else { beta[k] * p_prev[i] })
            .collect();
        p_prev = std::mem::replace(&mut p_cur, next);
        norm_prev = norm;
    }

    // Golub-Welsch
    let mut jacobi = DMatrix::<f64>::zeros(half, half);
    for k in 0..half {
        jacobi[(k, k)] = alpha[k];
        if k + 1 < half {
            let off = beta[k + 1].sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..half)
        .map(|k| {
            let s = eig.eigenvalues[k];
            let first = eig.eigenvectors[(0, k)];
            (s, beta[0] * first * first / phi(s))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev-like initial guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Truncated tensor-product velocity lattice with tabulated `mu`, `sqrt(mu)`,
/// `w` and the moment basis `chi_0..chi_4`.
///
/// Node `(i1, i2, i3)` is stored at index `(i1 * n + i2) * n + i3`.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    n_axis: usize,
    v_max: f64,
    weight_params: WeightParams,
    axis_nodes: Vec<f64>,
    axis_weights: Vec<f64>,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    mu: Vec<f64>,
    sqrt_mu: Vec<f64>,
    w: Vec<f64>,
    chi: [Vec<f64>; 5],
    mass_defect: f64,
    tolerance: f64,
}

impl VelocityGrid {
    /// Builds the lattice. Requires `n_axis >= 8` even, `v_max >= 6` and an
    /// admissible weight.
    pub fn new(n_axis: usize, v_max: f64, weight_params: WeightParams) -> Result<Self> {
        let wp = WeightParams::new(weight_params.beta, weight_params.theta)?;
        if n_axis < 8 || !n_axis.is_multiple_of(2) {
            return Err(BgkError::Config(format!("N_v = {n_axis} must be even and >= 8")));
        }
        if !(v_max >= 6.0) || !v_max.is_finite() {
            return Err(BgkError::Config(format!("V_max = {v_max} must be >= 6")));
        }
        let (axis_nodes, axis_weights) = axis_rule(n_axis, v_max);
        let total = n_axis.pow(3);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for i1 in 0..n_axis {
            for i2 in 0..n_axis {
                for i3 in 0..n_axis {
                    nodes.push([axis_nodes[i1], axis_nodes[i2], axis_nodes[i3]]);
                    weights.push(axis_weights[i1] * axis_weights[i2] * axis_weights[i3]);
                }
            }
        }
        let mu: Vec<f64> = nodes.iter().map(global_maxwellian).collect();
        let sqrt_mu: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
        let w: Vec<f64> = nodes.iter().map(|v| wp.value(v)).collect();
        let chi = [
            sqrt_mu.clone(),
            nodes.iter().zip(&sqrt_mu).map(|(v, s)| v[0] * s).collect(),
            nodes.iter().zip(&sqrt_mu).map(|(v, s)| v[1] * s).collect(),
            nodes.iter().zip(&sqrt_mu).map(|(v, s)| v[2] * s).collect(),
            nodes
                .iter()
                .zip(&sqrt_mu)
                .map(|(v, s)| (crate::dot3(v, v) - 3.0) / CHI4_DENOM * s)
                .collect(),
        ];
        let mut grid = VelocityGrid {
            n_axis,
            v_max,
            weight_params: wp,
            axis_nodes,
            axis_weights,
            nodes,
            weights,
            mu,
            sqrt_mu,
            w,
            chi,
            mass_defect: 0.0,
            tolerance: DEFAULT_QUADRATURE_TOL,
        };
        grid.mass_defect = (grid.sum(&grid.mu) - 1.0).abs();
        // coarse lattices record the tolerance they actually achieve
        grid.tolerance = DEFAULT_QUADRATURE_TOL.max(10.0 * grid.mass_defect);
        Ok(grid)
    }

    pub fn n_axis(&self) -> usize {
        self.n_axis
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn weight_params(&self) -> WeightParams {
        self.weight_params
    }

    pub fn axis_nodes(&self) -> &[f64] {
        &self.axis_nodes
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.axis_weights
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sqrt_mu(&self) -> &[f64] {
        &self.sqrt_mu
    }

    /// Tabulated weight `w(v_j)`.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn chi(&self, i: usize) -> &[f64] {
        &self.chi[i]
    }

    /// `|sum_j q_j mu(v_j) - 1|`.
    pub fn mass_defect(&self) -> f64 {
        self.mass_defect
    }

    /// Quadrature tolerance declared for this lattice.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Largest `|v_1|` on the lattice.
    pub fn max_abs_v1(&self) -> f64 {
        self.axis_nodes.last().copied().unwrap_or(0.0)
    }

    /// Index of the node mirrored through the origin.
    pub fn mirror(&self, j: usize) -> usize {
        self.len() - 1 - j
    }

    /// `sum_j q_j g_j`, compensated, in fixed node order, rejecting
    /// non-finite values.
    pub fn integrate(&self, g: &[f64]) -> Result<f64> {
        debug_assert_eq!(g.len(), self.len());
        let mut acc = CompensatedSum::default();
        for (j, (&q, &x)) in self.weights.iter().zip(g).enumerate() {
            if !x.is_finite() {
                return Err(BgkError::NonFinite { index: j });
            }
            acc.add(q * x);
        }
        Ok(acc.value())
    }

    /// Compensated `sum_j q_j g_j` without the finiteness check.
    pub fn sum(&self, g: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for (&q, &x) in self.weights.iter().zip(g) {
            acc.add(q * x);
        }
        acc.value()
    }

    /// Inner product `<f, g> = sum_j q_j f_j g_j`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for ((&q, &a), &b) in self.weights.iter().zip(f).zip(g) {
            acc.add(q * a * b);
        }
        acc.value()
    }

    /// `(<f, chi_0>, ..., <f, chi_4>)`.
    pub fn basis_coefficients(&self, f: &[f64]) -> [f64; 5] {
        std::array::from_fn(|i| self.inner(f, &self.chi[i]))
    }

    /// Raw conserved sums `(sum q F, sum q F v, sum q F |v|^2)`.
    pub fn conserved_sums(&self, f: &[f64]) -> [f64; 5] {
        // rows along the third axis are short; only the outer sums are compensated
        let n = self.n_axis;
        let (s, q) = (&self.axis_nodes, &self.axis_weights);
        let mut acc = [CompensatedSum::default(); 5];
        for (r, row) in f.chunks_exact(n).enumerate() {
            let (i1, i2) = (r / n, r % n);
            let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
            for ((&x, &v), &w) in row.iter().zip(s).zip(q) {
                let wx = w * x;
                t0 += wx;
                t1 += wx * v;
                t2 += wx * v * v;
            }
            let w12 = q[i1] * q[i2];
            let (v1, v2) = (s[i1], s[i2]);
            acc[0].add(w12 * t0);
            acc[1].add(w12 * v1 * t0);
            acc[2].add(w12 * v2 * t0);
            acc[3].add(w12 * t1);
            acc[4].add(w12 * ((v1 * v1 + v2 * v2) * t0 + t2));
        }
        acc.map(|a| a.value())
    }

    /// `(rho, U, T)` of a nonnegative absolute distribution.
    pub fn moments(&self, f: &[f64]) -> Result<Macro> {
        let rho = self.integrate(f)?;
        if !(rho > DEGENERATE_FLOOR) {
            return Err(BgkError::Degenerate(format!("density {rho} below floor")));
        }
        let mut m = [CompensatedSum::default(); 3];
        for ((v, &q), &x) in self.nodes.iter().zip(&self.weights).zip(f) {
            for k in 0..3 {
                m[k].add(q * x * v[k]);
            }
        }
        let u = [m[0].value() / rho, m[1].value() / rho, m[2].value() / rho];
        let mut e = CompensatedSum::default();
        for ((v, &q), &x) in self.nodes.iter().zip(&self.weights).zip(f) {
            let c = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
            e.add(q * x * crate::dot3(&c, &c));
        }
        let temp = e.value() / (3.0 * rho);
        if !(temp > DEGENERATE_FLOOR) {
            return Err(BgkError::Degenerate(format!("temperature {temp} below floor")));
        }
        Ok(Macro { rho, u, temp })
    }
}

/// Builds a [`VelocityGrid`]; alias kept for API symmetry with the other
/// module-level operations.
pub fn build_grid(n_axis: usize, v_max: f64, wp: WeightParams) -> Result<VelocityGrid> {
    VelocityGrid::new(n_axis, v_max, wp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> VelocityGrid {
        VelocityGrid::new(24, 7.0, WeightParams::default()).unwrap()
    }

    #[test]
    fn weight_admissibility() {
        let err = WeightParams::new(1.0, 0.0).unwrap_err().to_string();
        assert!(err.contains("beta > 3/2 for theta=0"), "{err}");
        let err = WeightParams::new(0.0, 0.3).unwrap_err().to_string();
        assert!(err.contains("theta < 1/4"), "{err}");
        assert!(WeightParams::new(2.0, 0.0).is_ok());
        assert!(WeightParams::new(0.0, 0.1).is_ok());
        assert!(WeightParams::new(-1.0, 0.1).is_err());
    }

    #[test]
    fn grid_preconditions() {
        let wp = WeightParams::default();
        assert!(VelocityGrid::new(9, 8.0, wp).is_err());
        assert!(VelocityGrid::new(6, 8.0, wp).is_err());
        assert!(VelocityGrid::new(16, 5.0, wp).is_err());
        assert!(VelocityGrid::new(16, 8.0, WeightParams { beta: 1.0, theta: 0.0 }).is_err());
    }

    #[test]
    fn gaussian_mass_on_fine_grid() {
        let g = VelocityGrid::new(32, 8.0, WeightParams::new(0.0, 0.1).unwrap()).unwrap();
        assert!(g.mass_defect() <= 1e-8, "{}", g.mass_defect());
        assert!(g.weights().iter().all(|&q| q > 0.0));
    }

    #[test]
    fn coarse_grid_records_coarser_tolerance() {
        let g = VelocityGrid::new(8, 6.0, WeightParams::new(2.0, 0.0).unwrap()).unwrap();
        assert!(g.weights().iter().all(|&q| q > 0.0));
        assert!(g.tolerance() >= g.mass_defect());
        assert!(g.tolerance() >= DEFAULT_QUADRATURE_TOL);
    }

    #[test]
    fn integrate_examples() {
        let g = grid();
        assert!((g.integrate(g.mu()).unwrap() - 1.0).abs() <= 1e-8);
        let odd: Vec<f64> = g.nodes().iter().zip(g.mu()).map(|(v, m)| v[0] * m).collect();
        assert!(g.integrate(&odd).unwrap().abs() <= 1e-12);
        // analytic second moment of the standard Gaussian is 3
        let second: Vec<f64> = g.nodes().iter().zip(g.mu()).map(|(v, m)| crate::dot3(v, v) * m).collect();
        assert!((g.integrate(&second).unwrap() - 3.0).abs() <= 1e-7);
    }

    #[test]
    fn integrate_rejects_nan_with_index() {
        let g = grid();
        let mut f = g.mu().to_vec();
        f[17] = f64::NAN;
        match g.integrate(&f) {
            Err(BgkError::NonFinite { index }) => assert_eq!(index, 17),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nodes_symmetric() {
        let g = grid();
        for j in 0..g.len() {
            let m = g.mirror(j);
            let (a, b) = (g.nodes()[j], g.nodes()[m]);
            assert_eq!(a, [-b[0], -b[1], -b[2]]);
            assert_eq!(g.weights()[j], g.weights()[m]);
        }
    }

    #[test]
    #[cfg_attr(feature = "literal-chi4", ignore)]
    fn gram_is_identity() {
        let g = grid();
        for i in 0..5 {
            for k in 0..5 {
                let expect = if i == k { 1.0 } else { 0.0 };
                let got = g.inner(g.chi(i), g.chi(k));
                assert!((got - expect).abs() <= 1e-8, "<chi_{i}, chi_{k}> = {got}");
            }
        }
    }

    #[test]
    fn moments_examples() {
        let g = grid();
        let m = g.moments(g.mu()).unwrap();
        assert!((m.rho - 1.0).abs() < 1e-7 && (m.temp - 1.0).abs() < 1e-7);
        assert!(m.u.iter().all(|u| u.abs() < 1e-7));

        let twice: Vec<f64> = g.mu().iter().map(|x| 2.0 * x).collect();
        let m = g.moments(&twice).unwrap();
        assert!((m.rho - 2.0).abs() < 1e-7 && (m.temp - 1.0).abs() < 1e-7);

        let shifted: Vec<f64> = g.nodes().iter().map(|v| global_maxwellian(&[v[0] - 0.1, v[1], v[2]])).collect();
        let m = g.moments(&shifted).unwrap();
        assert!((m.rho - 1.0).abs() < 1e-7);
        assert!((m.u[0] - 0.1).abs() < 1e-7 && m.u[1].abs() < 1e-7);
        assert!((m.temp - 1.0).abs() < 1e-7);
    }

    #[test]
    fn moments_degenerate() {
        let g = grid();
        assert!(matches!(g.moments(&vec![0.0; g.len()]), Err(BgkError::Degenerate(_))));
        // all mass on a single node: zero temperature
        let mut f = vec![0.0; g.len()];
        f[100] = 1.0;
        assert!(matches!(g.moments(&f), Err(BgkError::Degenerate(_))));
    }

    #[test]
    fn weight_examples() {
        let wp = WeightParams::new(0.0, 0.1).unwrap();
        assert_eq!(weight_value(&wp, &[0.0; 3]), 1.0);
        let wp = WeightParams::new(2.0, 0.0).unwrap();
        assert!((weight_value(&wp, &[0.0, 1.0, 0.0]) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_sqrt_mu_bounded_by_stationary_value() {
        // w sqrt(mu) as a function of r = |v| is maximal where
        // beta/(1+r) + (2 theta - 1/2) r = 0
        let g = grid();
        let wp = g.weight_params();
        let grid_max = g.w().iter().zip(g.sqrt_mu()).map(|(a, b)| a * b).fold(0.0, f64::max);
        let radial = |r: f64| (1.0 + r).powf(wp.beta) * (wp.theta * r * r).exp() * (-0.25 * r * r).exp() / TWO_PI.powf(0.75);
        let (mut best, mut r) = (0.0f64, 0.0);
        while r < 20.0 {
            best = best.max(radial(r));
            r += 1e-4;
        }
        assert!(grid_max.is_finite());
        assert!(grid_max <= best * (1.0 + 1e-9));
    }

    #[test]
    fn inverse_square_weight_summable() {
        let wp = WeightParams::new(2.0, 0.0).unwrap();
        let mut prev = 0.0;
        // the lattice reaches further out as N_v grows
        for n in [8, 12, 16, 24, 32, 48, 64] {
            let g = VelocityGrid::new(n, 10.0, wp).unwrap();
            let inv: Vec<f64> = g.w().iter().map(|w| w.powi(-2)).collect();
            let s = g.integrate(&inv).unwrap();
            assert!(s > prev);
            prev = s;
        }
        // continuum value of int (1+|v|)^{-4} dv = 4 pi / 3
        assert!(prev < 4.0 * std::f64::consts::PI / 3.0);
    }

    #[test]
    fn half_space_flux_matches_continuum() {
        let g = VelocityGrid::new(24, 7.0, WeightParams::default()).unwrap();
        let flux: f64 = g
            .nodes()
            .iter()
            .zip(g.weights())
            .zip(g.mu())
            .filter(|((v, _), _)| v[0] > 0.0)
            .map(|((v, q), m)| q * m * v[0])
            .sum();
        assert!((flux * TWO_PI.sqrt() - 1.0).abs() < 1e-12, "{flux}");
        assert!(g.axis_nodes().iter().all(|s| s.abs() <= g.v_max() && *s != 0.0));
    }
}
