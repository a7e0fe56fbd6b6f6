//! Local Maxwellian, collision frequency, projection onto the collision
//! invariants and the exact relaxation substep.

use nalgebra::{Matrix5, Vector5};

use crate::velocity::{Macro, VelocityGrid, DEGENERATE_FLOOR, TWO_PI};
use crate::{BgkError, Result};

/// Exponents of the collision frequency `nu = rho^eta T^omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionParams {
    pub eta: f64,
    pub omega: f64,
}

impl Default for CollisionParams {
    fn default() -> Self {
        CollisionParams { eta: 0.0, omega: 0.0 }
    }
}

impl CollisionParams {
    pub fn new(eta: f64, omega: f64) -> Result<Self> {
        if !eta.is_finite() || !omega.is_finite() {
            return Err(BgkError::Config(format!("collision exponents must be finite, got eta={eta}, omega={omega}")));
        }
        Ok(CollisionParams { eta, omega })
    }

    /// Named presets: `constant` (0, 0), `density` (1, 0), `density-temperature` (1, 0.5).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "constant" => Ok(CollisionParams { eta: 0.0, omega: 0.0 }),
            "density" => Ok(CollisionParams { eta: 1.0, omega: 0.0 }),
            "density-temperature" => Ok(CollisionParams { eta: 1.0, omega: 0.5 }),
            other => Err(BgkError::Config(format!("unknown collision preset '{other}'"))),
        }
    }

    pub const PRESETS: [&'static str; 3] = ["constant", "density", "density-temperature"];
}

/// `M(v) = rho (2 pi T)^{-3/2} exp(-|v-U|^2 / (2T))` at every node.
pub fn local_maxwellian(grid: &VelocityGrid, m: &Macro) -> Result<Vec<f64>> {
    m.validate()?;
    let pref = m.rho / (TWO_PI * m.temp).powf(1.5);
    Ok(grid
        .nodes()
        .iter()
        .map(|v| {
            let c = [v[0] - m.u[0], v[1] - m.u[1], v[2] - m.u[2]];
            pref * (-crate::dot3(&c, &c) / (2.0 * m.temp)).exp()
        })
        .collect())
}

pub fn collision_frequency(params: &CollisionParams, m: &Macro) -> f64 {
    if params.eta == 0.0 && params.omega == 0.0 {
        return 1.0;
    }
    m.rho.powf(params.eta) * m.temp.powf(params.omega)
}

/// Macroscopic state read off the raw conserved sums.
fn macro_from_sums(s: &[f64; 5]) -> Result<Macro> {
    let rho = s[0];
    if !(rho > DEGENERATE_FLOOR) {
        return Err(BgkError::Degenerate(format!("density {rho} below floor")));
    }
    let u = [s[1] / rho, s[2] / rho, s[3] / rho];
    let temp = (s[4] / rho - crate::dot3(&u, &u)) / 3.0;
    if !(temp > DEGENERATE_FLOOR) {
        return Err(BgkError::Degenerate(format!("temperature {temp} below floor")));
    }
    Ok(Macro { rho, u, temp })
}

/// Member `exp(a + b.v + c|v|^2)` of the exponential family on the lattice.
#[derive(Debug, Clone, Copy)]
struct ExpFamily {
    a: f64,
    b: [f64; 3],
    c: f64,
}

impl ExpFamily {
    fn from_macro(m: &Macro) -> Self {
        let t = m.temp;
        ExpFamily {
            a: m.rho.ln() - 1.5 * (TWO_PI * t).ln() - crate::dot3(&m.u, &m.u) / (2.0 * t),
            b: [m.u[0] / t, m.u[1] / t, m.u[2] / t],
            c: -0.5 / t,
        }
    }

    fn axis_factors(&self, grid: &VelocityGrid) -> [Vec<f64>; 3] {
        std::array::from_fn(|k| grid.axis_nodes().iter().map(|&s| (self.b[k] * s + self.c * s * s).exp()).collect())
    }

    /// Discrete moments `(sum q M, sum q M v, sum q M |v|^2)` and the matrix
    /// of second moments `sum q M phi_i phi_j`, `phi = (1, v, |v|^2)`,
    /// from one-dimensional sums.
    fn moments(&self, grid: &VelocityGrid) -> (Vector5<f64>, Matrix5<f64>) {
        let factors = self.axis_factors(grid);
        let mut z = self.a.exp();
        // normalized axis moments E[s^p], p = 0..4
        let mut e = [[0.0; 5]; 3];
        for k in 0..3 {
            let mut s = [0.0; 5];
            for (&x, (&q, &g)) in grid.axis_nodes().iter().zip(grid.axis_weights().iter().zip(&factors[k])) {
                let mut p = q * g;
                for sp in s.iter_mut() {
                    *sp += p;
                    p *= x;
                }
            }
            z *= s[0];
            for p in 0..5 {
                e[k][p] = s[p] / s[0];
            }
        }
        let m1 = [e[0][1], e[1][1], e[2][1]];
        let m2 = [e[0][2], e[1][2], e[2][2]];
        let sum2: f64 = m2.iter().sum();

        let mut mom = Vector5::zeros();
        mom[0] = 1.0;
        mom[1] = m1[0];
        mom[2] = m1[1];
        mom[3] = m1[2];
        mom[4] = sum2;

        let mut jac = Matrix5::zeros();
        for i in 0..5 {
            jac[(0, i)] = mom[i];
            jac[(i, 0)] = mom[i];
        }
        for k in 0..3 {
            for l in 0..3 {
                jac[(k + 1, l + 1)] = if k == l { m2[k] } else { m1[k] * m1[l] };
            }
            // E[v_k |v|^2]
            let v_e2 = e[k][3] + m1[k] * (sum2 - m2[k]);
            jac[(k + 1, 4)] = v_e2;
            jac[(4, k + 1)] = v_e2;
        }
        let mut e4 = 0.0;
        for k in 0..3 {
            e4 += e[k][4];
            for l in 0..3 {
                if k != l {
                    e4 += m2[k] * m2[l];
                }
            }
        }
        jac[(4, 4)] = e4;
        (mom * z, jac * z)
    }

    fn evaluate(&self, grid: &VelocityGrid) -> Vec<f64> {
        let n = grid.n_axis();
        let f = self.axis_factors(grid);
        let scale = self.a.exp();
        let mut out = Vec::with_capacity(grid.len());
        for i1 in 0..n {
            let x1 = scale * f[0][i1];
            for i2 in 0..n {
                let x12 = x1 * f[1][i2];
                for i3 in 0..n {
                    out.push(x12 * f[2][i3]);
                }
            }
        }
        out
    }
}

/// Maxwellian-shaped field `exp(a + b.v + c|v|^2)` whose discrete mass,
/// momentum and energy equal those of `f`.
///
/// Nodal values of the analytic `M(F)` lose mass to the velocity cutoff;
/// this variant is the one used by the relaxation so that it conserves
/// exactly on the lattice.
pub fn discrete_maxwellian(grid: &VelocityGrid, f: &[f64]) -> Result<Vec<f64>> {
    let sums = grid.conserved_sums(f);
    let m = macro_from_sums(&sums)?;
    Ok(fit_exp_family(grid, &sums, &m)?.evaluate(grid))
}

fn fit_exp_family(grid: &VelocityGrid, sums: &[f64; 5], m: &Macro) -> Result<ExpFamily> {
    let target = Vector5::from_column_slice(sums);
    let mut fam = ExpFamily::from_macro(m);
    for _ in 0..40 {
        let (mom, jac) = fam.moments(grid);
        let r = target - mom;
        let step = jac
            .lu()
            .solve(&r)
            .ok_or_else(|| BgkError::Degenerate("singular moment matrix in Maxwellian fit".into()))?;
        fam.a += step[0];
        fam.b[0] += step[1];
        fam.b[1] += step[2];
        fam.b[2] += step[3];
        fam.c += step[4];
        if step.amax() < 1e-15 {
            return Ok(fam);
        }
    }
    let (mom, _) = fam.moments(grid);
    if (target - mom).amax() <= 1e-13 * m.rho.max(1.0) {
        Ok(fam)
    } else {
        Err(BgkError::Degenerate(format!("Maxwellian fit did not converge for {m:?}")))
    }
}

/// `nu (M(F) - F)` for one cell of an absolute field.
pub fn bgk_rhs(params: &CollisionParams, grid: &VelocityGrid, f: &[f64]) -> Result<Vec<f64>> {
    let sums = grid.conserved_sums(f);
    let m = macro_from_sums(&sums)?;
    let nu = collision_frequency(params, &m);
    let maxw = fit_exp_family(grid, &sums, &m)?.evaluate(grid);
    Ok(maxw.iter().zip(f).map(|(mx, x)| nu * (mx - x)).collect())
}

/// Exact solution of `dF/dt = nu (M(F) - F)` over `dt`, in place. Returns
/// the collision frequency used.
pub fn relax_in_place(params: &CollisionParams, grid: &VelocityGrid, f: &mut [f64], dt: f64) -> Result<f64> {
    if !(dt >= 0.0) {
        return Err(BgkError::Precondition(format!("negative relaxation time {dt}")));
    }
    let sums = grid.conserved_sums(f);
    let m = macro_from_sums(&sums)?;
    let nu = collision_frequency(params, &m);
    if dt == 0.0 {
        return Ok(nu);
    }
    let maxw = fit_exp_family(grid, &sums, &m)?.evaluate(grid);
    let keep = (-nu * dt).exp();
    let gain = -(-nu * dt).exp_m1();
    for (x, mx) in f.iter_mut().zip(&maxw) {
        *x = keep * *x + gain * mx;
    }
    Ok(nu)
}

/// `F' = e^{-nu dt} F + (1 - e^{-nu dt}) M(F)`.
pub fn relax_exact(params: &CollisionParams, grid: &VelocityGrid, f: &[f64], dt: f64) -> Result<Vec<f64>> {
    let mut out = f.to_vec();
    relax_in_place(params, grid, &mut out, dt)?;
    Ok(out)
}

/// Linearized relaxation `f' = e^{-dt} f + (1 - e^{-dt}) P f`, in place.
pub fn relax_linearized_in_place(grid: &VelocityGrid, f: &mut [f64], dt: f64) {
    let (pf, _) = project_p(grid, f);
    let keep = (-dt).exp();
    let gain = -(-dt).exp_m1();
    for (x, p) in f.iter_mut().zip(&pf) {
        *x = keep * *x + gain * p;
    }
}

/// `Pf = sum_i <f, chi_i> chi_i` and the coefficients `(a, b1, b2, b3, c)`.
pub fn project_p(grid: &VelocityGrid, f: &[f64]) -> (Vec<f64>, [f64; 5]) {
    let coeff = grid.basis_coefficients(f);
    let mut pf = vec![0.0; f.len()];
    for (i, &ci) in coeff.iter().enumerate() {
        for (p, x) in pf.iter_mut().zip(grid.chi(i)) {
            *p += ci * x;
        }
    }
    (pf, coeff)
}

/// `Lf = (I - P) f`.
pub fn linearized_l(grid: &VelocityGrid, f: &[f64]) -> Vec<f64> {
    let (pf, _) = project_p(grid, f);
    f.iter().zip(&pf).map(|(x, p)| x - p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::WeightParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> VelocityGrid {
        VelocityGrid::new(16, 7.0, WeightParams::default()).unwrap()
    }

    fn random_state(g: &VelocityGrid, rng: &mut ChaCha8Rng, amp: f64) -> Vec<f64> {
        g.mu().iter().map(|m| m * (1.0 + amp * (2.0 * rng.random::<f64>() - 1.0))).collect()
    }

    fn norm1(g: &VelocityGrid, f: &[f64]) -> f64 {
        g.weights().iter().zip(f).map(|(q, x)| q * x.abs()).sum()
    }

    #[test]
    fn maxwellian_examples() {
        let g = grid();
        let m = local_maxwellian(&g, &Macro::EQUILIBRIUM).unwrap();
        for (x, mu) in m.iter().zip(g.mu()) {
            assert!((x - mu).abs() <= 1e-15 * mu);
        }
        let m2 = local_maxwellian(&g, &Macro::new(2.0, [0.0; 3], 1.0)).unwrap();
        for (x, mu) in m2.iter().zip(g.mu()) {
            assert!((x - 2.0 * mu).abs() <= 1e-15 * mu);
        }
        assert!(local_maxwellian(&g, &Macro::new(1.0, [0.0; 3], 0.0)).is_err());
        assert!(local_maxwellian(&g, &Macro::new(-1.0, [0.0; 3], 1.0)).is_err());
    }

    #[test]
    fn maxwellian_moments_recovered() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = Macro::new(
                1.0 + 0.1 * (rng.random::<f64>() - 0.5),
                [0.1 * (rng.random::<f64>() - 0.5), 0.1 * (rng.random::<f64>() - 0.5), 0.1 * (rng.random::<f64>() - 0.5)],
                1.0 + 0.1 * (rng.random::<f64>() - 0.5),
            );
            let back = g.moments(&local_maxwellian(&g, &m).unwrap()).unwrap();
            assert!((back.rho - m.rho).abs() < 1e-7);
            assert!((back.temp - m.temp).abs() < 1e-7);
            for k in 0..3 {
                assert!((back.u[k] - m.u[k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn frequency_examples() {
        let m = Macro::new(4.0, [0.3, 0.0, 0.0], 0.25);
        assert_eq!(collision_frequency(&CollisionParams::default(), &m), 1.0);
        let p = CollisionParams::new(1.0, 0.5).unwrap();
        assert!((collision_frequency(&p, &m) - 2.0).abs() < 1e-15);
        assert_eq!(collision_frequency(&p, &Macro::EQUILIBRIUM), 1.0);
        assert_eq!(CollisionParams::preset("density-temperature").unwrap(), p);
        assert!(CollisionParams::preset("hard-sphere").is_err());
        assert!(CollisionParams::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn rhs_vanishes_on_maxwellians() {
        let g = grid();
        let p = CollisionParams::new(1.0, 0.5).unwrap();
        let r = bgk_rhs(&p, &g, g.mu()).unwrap();
        assert!(r.iter().zip(g.mu()).all(|(x, m)| x.abs() <= 1e-13 * m.max(1e-300) + 1e-300));
        let m = local_maxwellian(&g, &Macro::new(1.2, [0.1, -0.05, 0.0], 0.9)).unwrap();
        let r = bgk_rhs(&p, &g, &m).unwrap();
        assert!(r.iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-12);
    }

    #[test]
    fn rhs_collision_invariants() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in CollisionParams::PRESETS.map(|n| CollisionParams::preset(n).unwrap()) {
            for _ in 0..10 {
                let f = random_state(&g, &mut rng, 0.3);
                let r = bgk_rhs(&p, &g, &f).unwrap();
                let s = g.conserved_sums(&r);
                let scale = norm1(&g, &f);
                assert!(s.iter().all(|x| x.abs() <= 1e-8 * scale), "{s:?}");
            }
        }
    }

    #[test]
    fn relaxation_limits_and_conservation() {
        let g = grid();
        let p = CollisionParams::new(1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_state(&g, &mut rng, 0.5);
        assert_eq!(relax_exact(&p, &g, &f, 0.0).unwrap(), f);

        let m = discrete_maxwellian(&g, &f).unwrap();
        let long = relax_exact(&p, &g, &f, 100.0).unwrap();
        for (x, y) in long.iter().zip(&m) {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1e-300) + 1e-300);
        }

        let s0 = g.conserved_sums(&f);
        let out = relax_exact(&p, &g, &f, 0.3).unwrap();
        let s1 = g.conserved_sums(&out);
        for (a, b) in s0.iter().zip(&s1) {
            assert!((a - b).abs() <= 1e-12 * s0[0]);
        }
        assert!(out.iter().all(|&x| x >= 0.0));
        assert!(relax_exact(&p, &g, &f, -1.0).is_err());
    }

    #[test]
    fn relaxation_matches_rk4() {
        let g = VelocityGrid::new(10, 6.0, WeightParams::default()).unwrap();
        let p = CollisionParams::new(1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_state(&g, &mut rng, 0.4);
        let dt = 0.7;
        let exact = relax_exact(&p, &g, &f, dt).unwrap();

        // classical RK4 with M and nu recomputed from the current state
        let rhs = |y: &[f64]| bgk_rhs(&p, &g, y).unwrap();
        let mut y = f.clone();
        let steps = 400;
        let h = dt / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(&y);
            let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
            let k2 = rhs(&y2);
            let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
            let k3 = rhs(&y3);
            let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
            let k4 = rhs(&y4);
            for i in 0..y.len() {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let gap = y.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-8, "{gap}");
    }

    #[test]
    fn relaxation_rate_is_nu() {
        let g = grid();
        let p = CollisionParams::new(1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f = random_state(&g, &mut rng, 0.3);
        for x in f.iter_mut() {
            *x *= 1.5;
        }
        let m = discrete_maxwellian(&g, &f).unwrap();
        let nu = collision_frequency(&p, &g.moments(&f).unwrap());
        let dist = |y: &[f64]| y.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let (d0, d1) = (dist(&f), dist(&relax_exact(&p, &g, &f, 2.0).unwrap()));
        let rate = (d0 / d1).ln() / 2.0;
        assert!((rate / nu - 1.0).abs() < 5e-3, "{rate} vs {nu}");
    }

    #[test]
    fn projection_examples() {
        let g = grid();
        let (pf, c) = project_p(&g, g.chi(2));
        assert!((c[2] - 1.0).abs() < 1e-8);
        assert!(c.iter().enumerate().all(|(i, x)| i == 2 || x.abs() < 1e-8));
        assert!(pf.iter().zip(g.chi(2)).all(|(a, b)| (a - b).abs() < 1e-8));

        let f: Vec<f64> = g.nodes().iter().zip(g.sqrt_mu()).map(|(v, s)| v[0] * v[1] * s).collect();
        let (pf, _) = project_p(&g, &f);
        assert!(pf.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn projection_idempotent_and_l_orthogonal() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = g.sqrt_mu().iter().map(|s| s * (rng.random::<f64>() - 0.5) * 4.0).collect();
        let (pf, _) = project_p(&g, &f);
        let (ppf, _) = project_p(&g, &pf);
        assert!(pf.iter().zip(&ppf).all(|(a, b)| (a - b).abs() < 1e-12));

        let lf = linearized_l(&g, &f);
        let c = g.basis_coefficients(&lf);
        assert!(c.iter().all(|x| x.abs() < 1e-10));
        let llf = linearized_l(&g, &lf);
        assert!(lf.iter().zip(&llf).all(|(a, b)| (a - b).abs() < 1e-12));
        let lhs = g.inner(&lf, &f);
        let rhs = g.inner(&lf, &lf);
        assert!(rhs >= 0.0 && (lhs - rhs).abs() < 1e-10 * (1.0 + rhs));

        let kernel = linearized_l(&g, g.chi(4));
        assert!(kernel.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn linearized_relaxation_keeps_projection() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut f: Vec<f64> = g.sqrt_mu().iter().map(|s| s * (rng.random::<f64>() - 0.5)).collect();
        let c0 = g.basis_coefficients(&f);
        relax_linearized_in_place(&g, &mut f, 0.5);
        let c1 = g.basis_coefficients(&f);
        for (a, b) in c0.iter().zip(&c1) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
