//! Taylor expansion of the BGK operator around the global Maxwellian in the
//! conserved chart `(rho, rho U, G)`, and the probes built on it.
//!
//! Primitive variables are ordered `(rho, U1, U2, U3, T)` and chart
//! variables `(rho, rho U1, rho U2, rho U3, G)` with
//! `G = (rho |U|^2 + 3 rho T - 3 rho) / sqrt(6)`.

use crate::collision::{collision_frequency, project_p, CollisionParams};
use crate::state::{DistributionField, Representation};
use crate::velocity::{gauss_legendre, Macro, VelocityGrid, WeightParams, TWO_PI};
use crate::{BgkError, Result, Vec3};

pub const SQRT6: f64 = 2.449_489_742_783_178;

/// Lower bound on `rho_theta` and `T_theta` enforced by every expansion.
pub const SMALLNESS_FLOOR: f64 = 0.5;

pub type Mat5 = [[f64; 5]; 5];

/// `(rho, rho U, G)` of a macroscopic state.
pub fn chart_from_macro(m: &Macro) -> [f64; 5] {
    let u2 = crate::dot3(&m.u, &m.u);
    [m.rho, m.rho * m.u[0], m.rho * m.u[1], m.rho * m.u[2], (m.rho * u2 + 3.0 * m.rho * m.temp - 3.0 * m.rho) / SQRT6]
}

/// Inverse of [`chart_from_macro`].
pub fn macro_from_chart(c: &[f64; 5]) -> Macro {
    let rho = c[0];
    let u = [c[1] / rho, c[2] / rho, c[3] / rho];
    let temp = (SQRT6 * c[4] - rho * crate::dot3(&u, &u) + 3.0 * rho) / (3.0 * rho);
    Macro { rho, u, temp }
}

/// State on the segment from equilibrium to a target in the conserved chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaState {
    pub theta: f64,
    pub rho: f64,
    pub u: Vec3,
    pub temp: f64,
    pub g: f64,
}

impl ThetaState {
    /// Interpolates chart increments `delta = (rho - 1, rho U, G)` at `theta`.
    pub fn from_increments(delta: &[f64; 5], theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(BgkError::Precondition(format!("theta = {theta} outside [0, 1]")));
        }
        let chart = [1.0 + theta * delta[0], theta * delta[1], theta * delta[2], theta * delta[3], theta * delta[4]];
        let m = macro_from_chart(&chart);
        if !(m.rho > SMALLNESS_FLOOR && m.temp > SMALLNESS_FLOOR) {
            return Err(BgkError::Precondition(format!(
                "state outside the smallness regime at theta={theta}: rho={}, T={}",
                m.rho, m.temp
            )));
        }
        Ok(ThetaState { theta, rho: m.rho, u: m.u, temp: m.temp, g: chart[4] })
    }

    pub fn from_macro(target: &Macro, theta: f64) -> Result<Self> {
        let c = chart_from_macro(target);
        Self::from_increments(&[c[0] - 1.0, c[1], c[2], c[3], c[4]], theta)
    }

    pub fn macro_state(&self) -> Macro {
        Macro { rho: self.rho, u: self.u, temp: self.temp }
    }
}

/// Gauss-Legendre rule on `[0, 1]`, optionally carrying the `(1 - theta)`
/// factor of the integral remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub remainder: bool,
}

impl ThetaQuadrature {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(BgkError::Config("theta quadrature needs at least one node".into()));
        }
        let (nodes, weights) = gauss_legendre(n);
        Ok(ThetaQuadrature { nodes, weights, remainder: false })
    }

    /// Same nodes, weights multiplied by `(1 - theta)`.
    pub fn with_remainder_factor(&self) -> Self {
        if self.remainder {
            return self.clone();
        }
        let weights = self.nodes.iter().zip(&self.weights).map(|(t, w)| w * (1.0 - t)).collect();
        ThetaQuadrature { nodes: self.nodes.clone(), weights, remainder: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl Default for ThetaQuadrature {
    fn default() -> Self {
        ThetaQuadrature::new(32).expect("32 nodes")
    }
}

/// `J[i][k] = d prim_k / d chart_i`.
pub fn chart_jacobian(m: &Macro) -> Result<Mat5> {
    m.validate()?;
    let (rho, u, t) = (m.rho, m.u, m.temp);
    let u2 = crate::dot3(&u, &u);
    let mut j = [[0.0; 5]; 5];
    j[0][0] = 1.0;
    for k in 0..3 {
        j[0][k + 1] = -u[k] / rho;
        j[k + 1][k + 1] = 1.0 / rho;
        j[k + 1][4] = -2.0 * u[k] / (3.0 * rho);
    }
    j[0][4] = (-3.0 * t + u2 + 3.0) / (3.0 * rho);
    j[4][4] = (2.0f64 / 3.0).sqrt() / rho;
    Ok(j)
}

/// `d J / d prim_k` for each primitive variable `k`.
fn chart_jacobian_derivatives(m: &Macro) -> [Mat5; 5] {
    let (rho, u, t) = (m.rho, m.u, m.temp);
    let u2 = crate::dot3(&u, &u);
    let r2 = rho * rho;
    let mut d = [[[0.0; 5]; 5]; 5];
    // d/d rho
    for k in 0..3 {
        d[0][0][k + 1] = u[k] / r2;
        d[0][k + 1][k + 1] = -1.0 / r2;
        d[0][k + 1][4] = 2.0 * u[k] / (3.0 * r2);
    }
    d[0][0][4] = -(-3.0 * t + u2 + 3.0) / (3.0 * r2);
    d[0][4][4] = -(2.0f64 / 3.0).sqrt() / r2;
    // d/d U_k
    for k in 0..3 {
        d[k + 1][0][k + 1] = -1.0 / rho;
        d[k + 1][0][4] = 2.0 * u[k] / (3.0 * rho);
        d[k + 1][k + 1][4] = -2.0 / (3.0 * rho);
    }
    // d/d T
    d[4][0][4] = -1.0 / rho;
    d
}

fn mat_vec(j: &Mat5, x: &[f64; 5]) -> [f64; 5] {
    std::array::from_fn(|i| (0..5).map(|k| j[i][k] * x[k]).sum())
}

/// `Q_i = d nu / d chart_i` at the theta-state.
pub fn q_i_eval(params: &CollisionParams, ts: &ThetaState) -> Result<[f64; 5]> {
    let m = ts.macro_state();
    let j = chart_jacobian(&m)?;
    let (eta, omega) = (params.eta, params.omega);
    let mut grad = [0.0; 5];
    if eta != 0.0 {
        grad[0] = eta * m.rho.powf(eta - 1.0) * m.temp.powf(omega);
    }
    if omega != 0.0 {
        grad[4] = omega * m.temp.powf(omega - 1.0) * m.rho.powf(eta);
    }
    Ok(mat_vec(&j, &grad))
}

/// Primitive gradient of `log M` at `v`, and its primitive derivatives.
fn log_maxwellian_gradient(m: &Macro, v: &Vec3) -> ([f64; 5], Mat5) {
    let (rho, u, t) = (m.rho, m.u, m.temp);
    let c = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
    let c2 = crate::dot3(&c, &c);
    let t2 = t * t;
    let g = [1.0 / rho, c[0] / t, c[1] / t, c[2] / t, (c2 - 3.0 * t) / (2.0 * t2)];
    // dg[k][l] = d g_l / d prim_k
    let mut dg = [[0.0; 5]; 5];
    dg[0][0] = -1.0 / (rho * rho);
    for k in 0..3 {
        dg[k + 1][k + 1] = -1.0 / t;
        dg[4][k + 1] = -c[k] / t2;
        dg[k + 1][4] = -c[k] / t2;
    }
    dg[4][4] = -c2 / (t2 * t) + 1.5 / t2;
    (g, dg)
}

/// `M(v) / sqrt(mu(v))` as one exponential.
fn maxwellian_over_sqrt_mu(m: &Macro, v: &Vec3) -> f64 {
    let c = [v[0] - m.u[0], v[1] - m.u[1], v[2] - m.u[2]];
    let expo = m.rho.ln() - 1.5 * (TWO_PI * m.temp).ln() + 0.75 * TWO_PI.ln() - crate::dot3(&c, &c) / (2.0 * m.temp)
        + 0.25 * crate::dot3(v, v);
    expo.exp()
}

/// `Q_ij / M`: the polynomial factor of the second chart derivative of the
/// Maxwellian at `v`.
fn q_ij_factor(m: &Macro, v: &Vec3) -> Result<Mat5> {
    let j = chart_jacobian(m)?;
    let dj = chart_jacobian_derivatives(m);
    let (g, dg) = log_maxwellian_gradient(m, v);
    // h = J g = first chart derivative of log M
    let h = mat_vec(&j, &g);
    // dh[k][jj] = d h_jj / d prim_k
    let mut dh = [[0.0; 5]; 5];
    for k in 0..5 {
        for jj in 0..5 {
            dh[k][jj] = (0..5).map(|l| dj[k][jj][l] * g[l] + j[jj][l] * dg[k][l]).sum();
        }
    }
    let mut q = [[0.0; 5]; 5];
    for i in 0..5 {
        for jj in 0..5 {
            q[i][jj] = h[i] * h[jj] + (0..5).map(|k| j[i][k] * dh[k][jj]).sum::<f64>();
        }
    }
    Ok(q)
}

/// `Q_ij`: second derivative of the theta-Maxwellian in the conserved chart
/// at velocity `v`.
pub fn q_ij_eval(ts: &ThetaState, v: &Vec3) -> Result<Mat5> {
    let m = ts.macro_state();
    let mut q = q_ij_factor(&m, v)?;
    let c = [v[0] - m.u[0], v[1] - m.u[1], v[2] - m.u[2]];
    let maxw = m.rho / (TWO_PI * m.temp).powf(1.5) * (-crate::dot3(&c, &c) / (2.0 * m.temp)).exp();
    q.iter_mut().flatten().for_each(|x| *x *= maxw);
    Ok(q)
}

/// First chart derivative of the Maxwellian at `v`.
pub fn maxwellian_chart_gradient(m: &Macro, v: &Vec3) -> Result<[f64; 5]> {
    let j = chart_jacobian(m)?;
    let (g, _) = log_maxwellian_gradient(m, v);
    let h = mat_vec(&j, &g);
    let c = [v[0] - m.u[0], v[1] - m.u[1], v[2] - m.u[2]];
    let maxw = m.rho / (TWO_PI * m.temp).powf(1.5) * (-crate::dot3(&c, &c) / (2.0 * m.temp)).exp();
    Ok(h.map(|x| x * maxw))
}

fn theta_states(delta: &[f64; 5], tq: &ThetaQuadrature) -> Result<Vec<ThetaState>> {
    tq.nodes.iter().map(|&t| ThetaState::from_increments(delta, t)).collect()
}

/// `nu_p = sum_i <f, chi_i> int_0^1 Q_i dtheta`.
pub fn nu_p(params: &CollisionParams, grid: &VelocityGrid, f: &[f64], tq: &ThetaQuadrature) -> Result<f64> {
    let delta = grid.basis_coefficients(f);
    nu_p_from_increments(params, &delta, tq)
}

fn nu_p_from_increments(params: &CollisionParams, delta: &[f64; 5], tq: &ThetaQuadrature) -> Result<f64> {
    if params.eta == 0.0 && params.omega == 0.0 {
        return Ok(0.0);
    }
    let plain = ThetaQuadrature { nodes: tq.nodes.clone(), weights: plain_weights(tq), remainder: false };
    let mut acc = 0.0;
    for (ts, w) in theta_states(delta, &plain)?.iter().zip(&plain.weights) {
        let q = q_i_eval(params, ts)?;
        acc += w * (0..5).map(|i| delta[i] * q[i]).sum::<f64>();
    }
    Ok(acc)
}

fn plain_weights(tq: &ThetaQuadrature) -> Vec<f64> {
    if tq.remainder {
        tq.nodes.iter().zip(&tq.weights).map(|(t, w)| w / (1.0 - t)).collect()
    } else {
        tq.weights.clone()
    }
}

/// The four parts of the nonlinear operator at one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaParts {
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub gamma3: Vec<f64>,
    pub gamma4: Vec<f64>,
    pub nu_p: f64,
}

impl GammaParts {
    pub fn total(&self) -> Vec<f64> {
        (0..self.gamma1.len()).map(|j| self.gamma1[j] + self.gamma2[j] + self.gamma3[j] + self.gamma4[j]).collect()
    }

    pub fn parts(&self) -> [&[f64]; 4] {
        [&self.gamma1, &self.gamma2, &self.gamma3, &self.gamma4]
    }
}

/// `Gamma_1 = nu_p P f`, `Gamma_2 = -nu_p f`,
/// `Gamma_3 = sum_ij <f,chi_i><f,chi_j> int Q_ij (1 - theta) dtheta / sqrt(mu)`,
/// `Gamma_4 = nu_p Gamma_3`.
pub fn gamma_expansion(params: &CollisionParams, grid: &VelocityGrid, f: &[f64], tq: &ThetaQuadrature) -> Result<GammaParts> {
    let (pf, delta) = project_p(grid, f);
    let nu_p = nu_p_from_increments(params, &delta, tq)?;
    let rem = tq.with_remainder_factor();
    let states = theta_states(&delta, &rem)?;

    // v-independent pieces per theta node: a = J^T delta, B[k][l] = sum_j delta_j dJ_k[j][l]
    struct Node {
        m: Macro,
        a: [f64; 5],
        b: Mat5,
        w: f64,
    }
    let mut nodes = Vec::with_capacity(states.len());
    for (ts, &w) in states.iter().zip(&rem.weights) {
        let m = ts.macro_state();
        let j = chart_jacobian(&m)?;
        let dj = chart_jacobian_derivatives(&m);
        let a: [f64; 5] = std::array::from_fn(|k| (0..5).map(|i| delta[i] * j[i][k]).sum());
        let mut b = [[0.0; 5]; 5];
        for k in 0..5 {
            for l in 0..5 {
                b[k][l] = (0..5).map(|jj| delta[jj] * dj[k][jj][l]).sum();
            }
        }
        nodes.push(Node { m, a, b, w });
    }

    let mut gamma3 = vec![0.0; f.len()];
    for (out, v) in gamma3.iter_mut().zip(grid.nodes()) {
        let mut acc = 0.0;
        for nd in &nodes {
            let (g, dg) = log_maxwellian_gradient(&nd.m, v);
            let ag: f64 = (0..5).map(|l| nd.a[l] * g[l]).sum();
            let mut second = 0.0;
            for k in 0..5 {
                let inner: f64 = (0..5).map(|l| nd.b[k][l] * g[l] + nd.a[l] * dg[k][l]).sum();
                second += nd.a[k] * inner;
            }
            acc += nd.w * (ag * ag + second) * maxwellian_over_sqrt_mu(&nd.m, v);
        }
        *out = acc;
    }

    let gamma1 = pf.iter().map(|x| nu_p * x).collect();
    let gamma2 = f.iter().map(|x| -nu_p * x).collect();
    let gamma4 = gamma3.iter().map(|x| nu_p * x).collect();
    Ok(GammaParts { gamma1, gamma2, gamma3, gamma4, nu_p })
}

/// `Gamma(f) = nu (M(F) - F) / sqrt(mu) + (I - P) f` with `F = mu + sqrt(mu) f`.
pub fn gamma_direct(params: &CollisionParams, grid: &VelocityGrid, f: &[f64]) -> Result<Vec<f64>> {
    let big_f: Vec<f64> = grid.mu().iter().zip(grid.sqrt_mu()).zip(f).map(|((m, s), x)| m + s * x).collect();
    let m = grid.moments(&big_f)?;
    let nu = collision_frequency(params, &m);
    let (pf, _) = project_p(grid, f);
    Ok(grid
        .nodes()
        .iter()
        .zip(grid.sqrt_mu())
        .zip(f.iter().zip(&pf))
        .map(|((v, s), (x, p))| nu * (maxwellian_over_sqrt_mu(&m, v) - s - x) + (x - p))
        .collect())
}

fn weighted_max(grid: &VelocityGrid, wp: &WeightParams, f: &[f64]) -> f64 {
    grid.nodes().iter().zip(f).map(|(v, x)| wp.value(v) * x.abs()).fold(0.0, f64::max)
}

/// Result of [`macroscopic_control_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlProbe {
    pub delta: f64,
    pub macro_deviation: f64,
    pub ratio: f64,
}

/// Measured `||(rho - 1, U, T - 1)||_inf / ||w f||_inf` over all cells of a
/// perturbation field.
pub fn macroscopic_control_probe(grid: &VelocityGrid, f: &DistributionField, wp: &WeightParams) -> Result<ControlProbe> {
    if f.representation() != Representation::Perturbation {
        return Err(BgkError::Precondition("control probe expects a perturbation field".into()));
    }
    let mut delta = 0.0f64;
    let mut dev = 0.0f64;
    for cell in f.cells() {
        delta = delta.max(weighted_max(grid, wp, cell));
        let big_f: Vec<f64> = grid.mu().iter().zip(grid.sqrt_mu()).zip(cell).map(|((m, s), x)| m + s * x).collect();
        let m = grid.moments(&big_f)?;
        dev = dev.max((m.rho - 1.0).abs()).max((m.temp - 1.0).abs());
        for u in m.u {
            dev = dev.max(u.abs());
        }
    }
    let ratio = if delta > 0.0 { dev / delta } else { 0.0 };
    Ok(ControlProbe { delta, macro_deviation: dev, ratio })
}

/// Measured `||w (Gamma(f1) - Gamma(f2))||_inf / (delta ||w (f1 - f2)||_inf)`
/// with `delta = max(||w f1||, ||w f2||)`, for single-cell perturbations.
pub fn gamma_stability_probe(params: &CollisionParams, grid: &VelocityGrid, f1: &[f64], f2: &[f64], tq: &ThetaQuadrature) -> Result<f64> {
    let wp = grid.weight_params();
    let diff: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a - b).collect();
    let denom_f = weighted_max(grid, &wp, &diff);
    if denom_f == 0.0 {
        return Ok(0.0);
    }
    let delta = weighted_max(grid, &wp, f1).max(weighted_max(grid, &wp, f2));
    let g1 = gamma_expansion(params, grid, f1, tq)?.total();
    let g2 = gamma_expansion(params, grid, f2, tq)?.total();
    let dg: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
    Ok(weighted_max(grid, &wp, &dg) / (delta * denom_f))
}

/// Single-cell perturbation `sqrt(mu) u`, `u` uniform in `[-1, 1]` per
/// node, scaled to `||w f||_inf = delta`.
pub fn random_perturbation<R: rand::Rng + ?Sized>(grid: &VelocityGrid, rng: &mut R, delta: f64) -> Vec<f64> {
    let wp = grid.weight_params();
    let raw: Vec<f64> = grid.sqrt_mu().iter().map(|s| s * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let scale = weighted_max(grid, &wp, &raw);
    raw.iter().map(|x| delta * x / scale).collect()
}

/// `||w Gamma_i||_inf` for the four parts.
pub fn weighted_part_norms(grid: &VelocityGrid, parts: &GammaParts) -> [f64; 4] {
    let wp = grid.weight_params();
    parts.parts().map(|p| weighted_max(grid, &wp, p))
}
