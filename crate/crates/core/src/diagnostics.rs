//! Norms, exponential decay fits and residuals of the macroscopic
//! conservation laws.

use crate::collision::project_p;
use crate::state::{DistributionField, Representation};
use crate::velocity::{CompensatedSum, VelocityGrid, WeightParams, CHI4_DENOM};
use crate::{BgkError, Result};

/// `max_{cells, nodes} w(v) |f|`.
pub fn weighted_linf(grid: &VelocityGrid, wp: &WeightParams, f: &DistributionField) -> f64 {
    let w: Vec<f64> = grid.nodes().iter().map(|v| wp.value(v)).collect();
    f.cells()
        .flat_map(|c| c.iter().zip(&w).map(|(x, w)| w * x.abs()))
        .fold(0.0, f64::max)
}

/// `sqrt(sum_cells dx sum_nodes q |f|^2)`.
pub fn l2_norm(grid: &VelocityGrid, f: &DistributionField) -> f64 {
    let mut acc = CompensatedSum::default();
    for c in f.cells() {
        acc.add(f.cell_width() * grid.inner(c, c));
    }
    acc.value().max(0.0).sqrt()
}

/// Least-squares fit of `value ~ C exp(-lambda t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub lambda: f64,
    pub c: f64,
    pub r2: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub n_points: usize,
    /// Points in the window dropped because their value was not positive.
    pub excluded: usize,
}

pub const MIN_FIT_POINTS: usize = 10;

pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (t_lo, t_hi) = window;
    let mut excluded = 0;
    let mut pts = Vec::new();
    for &(t, v) in series {
        if t < t_lo || t > t_hi {
            continue;
        }
        if v > 0.0 && v.is_finite() {
            pts.push((t, v.ln()));
        } else {
            excluded += 1;
        }
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(BgkError::Fit(format!(
            "{} usable points in [{t_lo}, {t_hi}], need {MIN_FIT_POINTS} ({excluded} nonpositive excluded)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    if stt == 0.0 {
        return Err(BgkError::Fit("all samples at one time".into()));
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - ym).powi(2)).sum();
    // a flat series is fitted exactly by lambda = 0
    let r2 = if ss_tot <= f64::EPSILON * n * ym.abs().max(1.0) { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(DecayFit { lambda: -slope, c: intercept.exp(), r2, t_lo, t_hi, n_points: pts.len(), excluded })
}

/// `Theta_ij(f) = <(v_i v_j - delta_ij) sqrt(mu), f>`.
pub fn theta_moment(grid: &VelocityGrid, f: &[f64], i: usize, j: usize) -> f64 {
    let d = if i == j { 1.0 } else { 0.0 };
    let mut acc = CompensatedSum::default();
    for ((v, q), (s, x)) in grid.nodes().iter().zip(grid.weights()).zip(grid.sqrt_mu().iter().zip(f)) {
        acc.add(q * (v[i] * v[j] - d) * s * x);
    }
    acc.value()
}

/// `Lambda_j(f) = <(|v|^2 - 5) v_j sqrt(mu), f> / 10`.
pub fn lambda_moment(grid: &VelocityGrid, f: &[f64], j: usize) -> f64 {
    let mut acc = CompensatedSum::default();
    for ((v, q), (s, x)) in grid.nodes().iter().zip(grid.weights()).zip(grid.sqrt_mu().iter().zip(f)) {
        acc.add(q * (crate::dot3(v, v) - 5.0) * v[j] * s * x);
    }
    acc.value() / 10.0
}

/// Per-cell moments of a perturbation field needed by the slab
/// conservation laws.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroSnapshot {
    pub t: f64,
    pub dx: f64,
    pub a: Vec<f64>,
    pub b1: Vec<f64>,
    pub c: Vec<f64>,
    /// `Theta_11((I - P) f)`
    pub theta11: Vec<f64>,
    /// `Lambda_1((I - P) f)`
    pub lambda1: Vec<f64>,
}

impl MacroSnapshot {
    pub fn from_field(t: f64, f: &DistributionField) -> Result<Self> {
        let pert;
        let f = match f.representation() {
            Representation::Perturbation => f,
            Representation::Absolute => {
                pert = f.to_perturbation()?;
                &pert
            }
        };
        let g = f.grid();
        let n = f.n_cells();
        let mut s = MacroSnapshot {
            t,
            dx: f.cell_width(),
            a: Vec::with_capacity(n),
            b1: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            theta11: Vec::with_capacity(n),
            lambda1: Vec::with_capacity(n),
        };
        for cell in f.cells() {
            let (pf, coeff) = project_p(g, cell);
            let micro: Vec<f64> = cell.iter().zip(&pf).map(|(x, p)| x - p).collect();
            s.a.push(coeff[0]);
            s.b1.push(coeff[1]);
            s.c.push(coeff[4]);
            s.theta11.push(theta_moment(g, &micro, 0, 0));
            s.lambda1.push(lambda_moment(g, &micro, 0));
        }
        Ok(s)
    }
}

/// Residuals of the three slab conservation laws at interior cells
/// `1..N_x-1`, centred at the half time level between two snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationResiduals {
    pub mass: Vec<f64>,
    pub momentum: Vec<f64>,
    pub energy: Vec<f64>,
    pub dx: f64,
}

impl ConservationResiduals {
    /// `sqrt(dx sum r^2)` for each law.
    pub fn norms(&self) -> [f64; 3] {
        let n = |r: &[f64]| (self.dx * r.iter().map(|x| x * x).sum::<f64>()).sqrt();
        [n(&self.mass), n(&self.momentum), n(&self.energy)]
    }
}

/// Mass `d_t a + d_1 b1`, momentum `d_t b1 + d_1 (a + 2c/d + Theta_11)` and
/// energy `d_t c + d_1 (2 b1 / d + 10 Lambda_1 / d)`, where `d` is the
/// normalisation of `chi_4`.
pub fn conservation_residuals(s0: &MacroSnapshot, s1: &MacroSnapshot) -> Result<ConservationResiduals> {
    let n = s0.a.len();
    if s1.a.len() != n || n < 3 {
        return Err(BgkError::Precondition("snapshots need matching cell counts >= 3".into()));
    }
    let dt = s1.t - s0.t;
    if !(dt > 0.0) {
        return Err(BgkError::Precondition("snapshots must be in increasing time order".into()));
    }
    let dx = s0.dx;
    let d = CHI4_DENOM;
    let avg = |x0: &[f64], x1: &[f64], i: usize| 0.5 * (x0[i] + x1[i]);
    let ddx = |x0: &[f64], x1: &[f64], i: usize| (avg(x0, x1, i + 1) - avg(x0, x1, i - 1)) / (2.0 * dx);

    let mom_flux = |s: &MacroSnapshot| -> Vec<f64> { (0..n).map(|i| s.a[i] + 2.0 * s.c[i] / d + s.theta11[i]).collect() };
    let en_flux = |s: &MacroSnapshot| -> Vec<f64> { (0..n).map(|i| 2.0 * s.b1[i] / d + 10.0 * s.lambda1[i] / d).collect() };
    let (m0, m1) = (mom_flux(s0), mom_flux(s1));
    let (e0, e1) = (en_flux(s0), en_flux(s1));

    let mut r = ConservationResiduals { mass: vec![], momentum: vec![], energy: vec![], dx };
    for i in 1..n - 1 {
        r.mass.push((s1.a[i] - s0.a[i]) / dt + ddx(&s0.b1, &s1.b1, i));
        r.momentum.push((s1.b1[i] - s0.b1[i]) / dt + ddx(&m0, &m1, i));
        r.energy.push((s1.c[i] - s0.c[i]) / dt + ddx(&e0, &e1, i));
    }
    Ok(r)
}
