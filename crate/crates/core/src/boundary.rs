//! Diffuse-reflection wall operator on the velocity lattice.

use crate::velocity::VelocityGrid;
use crate::{BgkError, Result, Vec3};

/// Nodes with `|n.v|` below this are grazing and belong to neither half-space.
pub const GRAZING_TOL: f64 = 1e-14;

/// Node partition and normalisation for one wall with outward normal `n`.
#[derive(Debug, Clone)]
pub struct WallQuadrature {
    normal: Vec3,
    outgoing: Vec<usize>,
    incoming: Vec<usize>,
    /// `q_j (n.v_j)` at outgoing nodes.
    out_flux_weight: Vec<f64>,
    /// `mu(v_j)` and `sqrt(mu(v_j))` at incoming nodes.
    in_mu: Vec<f64>,
    in_sqrt_mu: Vec<f64>,
    /// `sqrt(mu)` at outgoing nodes.
    out_sqrt_mu: Vec<f64>,
    c_mu: f64,
}

/// Builds the wall quadrature. The discrete constant `c_mu` makes the
/// incoming half-space Maxwellian flux exactly one.
pub fn build_wall(grid: &VelocityGrid, n: Vec3) -> Result<WallQuadrature> {
    if !((crate::norm3(&n) - 1.0).abs() < 1e-12) {
        return Err(BgkError::Config(format!("wall normal {n:?} is not a unit vector")));
    }
    let mut outgoing = Vec::new();
    let mut incoming = Vec::new();
    for (j, v) in grid.nodes().iter().enumerate() {
        let nv = crate::dot3(&n, v);
        if nv > GRAZING_TOL {
            outgoing.push(j);
        } else if nv < -GRAZING_TOL {
            incoming.push(j);
        }
    }
    if outgoing.is_empty() || incoming.is_empty() {
        return Err(BgkError::Config("wall has an empty half-space".into()));
    }
    let (q, mu, smu, nodes) = (grid.weights(), grid.mu(), grid.sqrt_mu(), grid.nodes());
    let out_flux_weight = outgoing.iter().map(|&j| q[j] * crate::dot3(&n, &nodes[j])).collect();
    let mut acc = crate::velocity::CompensatedSum::default();
    for &j in &incoming {
        acc.add(q[j] * mu[j] * crate::dot3(&n, &nodes[j]).abs());
    }
    let c_mu = 1.0 / acc.value();
    Ok(WallQuadrature {
        normal: n,
        in_mu: incoming.iter().map(|&j| mu[j]).collect(),
        in_sqrt_mu: incoming.iter().map(|&j| smu[j]).collect(),
        out_sqrt_mu: outgoing.iter().map(|&j| smu[j]).collect(),
        outgoing,
        incoming,
        out_flux_weight,
        c_mu,
    })
}

impl WallQuadrature {
    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    /// Node indices with `n.v > 0`.
    pub fn outgoing(&self) -> &[usize] {
        &self.outgoing
    }

    /// Node indices with `n.v < 0`.
    pub fn incoming(&self) -> &[usize] {
        &self.incoming
    }

    pub fn c_mu(&self) -> f64 {
        self.c_mu
    }

    /// Outgoing flux `sum_{n.v > 0} q (n.v) F` from values listed in
    /// [`outgoing`](Self::outgoing) order.
    pub fn outgoing_flux(&self, f_out: &[f64]) -> f64 {
        debug_assert_eq!(f_out.len(), self.outgoing.len());
        let mut acc = crate::velocity::CompensatedSum::default();
        for (w, x) in self.out_flux_weight.iter().zip(f_out) {
            acc.add(w * x);
        }
        acc.value()
    }

    /// Flux of the perturbation weighted by `sqrt(mu)`.
    fn outgoing_flux_perturbation(&self, f_out: &[f64]) -> f64 {
        let mut acc = crate::velocity::CompensatedSum::default();
        for ((w, s), x) in self.out_flux_weight.iter().zip(&self.out_sqrt_mu).zip(f_out) {
            acc.add(w * s * x);
        }
        acc.value()
    }

    /// Gathers outgoing values from a full node vector.
    pub fn gather_outgoing(&self, f: &[f64]) -> Vec<f64> {
        self.outgoing.iter().map(|&j| f[j]).collect()
    }

    /// Overwrites the incoming entries of a full node vector (absolute form).
    pub fn reflect_in_place(&self, f: &mut [f64]) {
        let incoming = diffuse_reflect(self, &self.gather_outgoing(f));
        for (&j, x) in self.incoming.iter().zip(incoming) {
            f[j] = x;
        }
    }

    /// Overwrites the incoming entries of a full node vector (perturbation form).
    pub fn reflect_perturbation_in_place(&self, f: &mut [f64]) {
        let incoming = diffuse_reflect_perturbation(self, &self.gather_outgoing(f));
        for (&j, x) in self.incoming.iter().zip(incoming) {
            f[j] = x;
        }
    }

    /// Net mass flux `sum_j q_j (n.v_j) F_j` through the wall.
    pub fn mass_flux(&self, grid: &VelocityGrid, f: &[f64]) -> f64 {
        let mut acc = crate::velocity::CompensatedSum::default();
        for ((v, q), x) in grid.nodes().iter().zip(grid.weights()).zip(f) {
            acc.add(q * crate::dot3(&self.normal, v) * x);
        }
        acc.value()
    }
}

/// `F(v) = c_mu mu(v) sum_{n.u > 0} F(u) (n.u) q_u` at incoming nodes.
pub fn diffuse_reflect(wall: &WallQuadrature, f_out: &[f64]) -> Vec<f64> {
    let s = wall.c_mu * wall.outgoing_flux(f_out);
    wall.in_mu.iter().map(|m| s * m).collect()
}

/// `f(v) = c_mu sqrt(mu(v)) sum_{n.u > 0} f(u) sqrt(mu(u)) (n.u) q_u` at
/// incoming nodes.
pub fn diffuse_reflect_perturbation(wall: &WallQuadrature, f_out: &[f64]) -> Vec<f64> {
    let s = wall.c_mu * wall.outgoing_flux_perturbation(f_out);
    wall.in_sqrt_mu.iter().map(|m| s * m).collect()
}

/// Both sides of `sum_j f_j^2 (n.v_j) q_j = sum_{n.v > 0} |f - P_gamma f|^2 (n.v) q`
/// for a perturbation trace satisfying the diffuse condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coercivity {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

pub fn coercivity_identity(wall: &WallQuadrature, grid: &VelocityGrid, f: &[f64]) -> Result<Coercivity> {
    let f_out = wall.gather_outgoing(f);
    let reflected = diffuse_reflect_perturbation(wall, &f_out);
    let scale = 1.0 + f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for (&j, r) in wall.incoming.iter().zip(&reflected) {
        if (f[j] - r).abs() > 1e-12 * scale {
            return Err(BgkError::Precondition(format!(
                "trace violates the diffuse condition at node {j}: {} vs {r}",
                f[j]
            )));
        }
    }
    let mut lhs = crate::velocity::CompensatedSum::default();
    for ((v, q), x) in grid.nodes().iter().zip(grid.weights()).zip(f) {
        lhs.add(q * crate::dot3(&wall.normal, v) * x * x);
    }
    let s = wall.c_mu * wall.outgoing_flux_perturbation(&f_out);
    let mut rhs = crate::velocity::CompensatedSum::default();
    for ((w, sm), x) in wall.out_flux_weight.iter().zip(&wall.out_sqrt_mu).zip(&f_out) {
        let d = x - s * sm;
        rhs.add(w * d * d);
    }
    let (lhs, rhs) = (lhs.value(), rhs.value());
    Ok(Coercivity { lhs, rhs, gap: (lhs - rhs).abs() })
}

/// Walls of the slab `[0, L]`: `x = 0` with `n = -e1` and `x = L` with `n = +e1`.
pub fn slab_walls(grid: &VelocityGrid) -> Result<(WallQuadrature, WallQuadrature)> {
    Ok((build_wall(grid, [-1.0, 0.0, 0.0])?, build_wall(grid, [1.0, 0.0, 0.0])?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::{WeightParams, TWO_PI};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> VelocityGrid {
        VelocityGrid::new(12, 6.0, WeightParams::default()).unwrap()
    }

    #[test]
    fn partition_and_constant() {
        let g = grid();
        let w = build_wall(&g, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.outgoing().len(), w.incoming().len());
        assert_eq!(w.outgoing().len() + w.incoming().len(), g.len());
        assert!((w.c_mu() - TWO_PI.sqrt()).abs() < 1e-10);
        let fine = VelocityGrid::new(24, 7.0, WeightParams::default()).unwrap();
        assert!((build_wall(&fine, [0.0, 0.0, -1.0]).unwrap().c_mu() - TWO_PI.sqrt()).abs() < 1e-6);
        assert!(build_wall(&g, [1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn grazing_nodes_excluded() {
        let g = grid();
        let s = 0.5f64.sqrt();
        let w = build_wall(&g, [s, -s, 0.0]).unwrap();
        // nodes with v1 = v2 lie on the wall plane
        let grazing = g.nodes().iter().filter(|v| v[0] == v[1]).count();
        assert!(grazing > 0);
        assert_eq!(w.outgoing().len() + w.incoming().len() + grazing, g.len());
        assert_eq!(w.outgoing().len(), w.incoming().len());
    }

    #[test]
    fn equilibrium_fixed_points() {
        let g = grid();
        let w = build_wall(&g, [-1.0, 0.0, 0.0]).unwrap();
        let mu_out = w.gather_outgoing(g.mu());
        for (&j, x) in w.incoming().iter().zip(diffuse_reflect(&w, &mu_out)) {
            assert!((x - g.mu()[j]).abs() <= 1e-14 * g.mu()[j]);
        }
        let s_out = w.gather_outgoing(g.sqrt_mu());
        for (&j, x) in w.incoming().iter().zip(diffuse_reflect_perturbation(&w, &s_out)) {
            assert!((x - g.sqrt_mu()[j]).abs() <= 1e-14 * g.sqrt_mu()[j]);
        }
        assert!(diffuse_reflect(&w, &vec![0.0; w.outgoing().len()]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_mass_flux_and_positivity() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0]] {
            let w = build_wall(&g, n).unwrap();
            let mut f: Vec<f64> = g.mu().iter().map(|m| m * 3.0 * rng.random::<f64>()).collect();
            w.reflect_in_place(&mut f);
            assert!(f.iter().all(|&x| x >= 0.0));
            let norm: f64 = g.weights().iter().zip(&f).map(|(q, x)| q * x.abs()).sum();
            assert!(w.mass_flux(&g, &f).abs() <= 1e-14 * norm);
        }
    }

    #[test]
    fn perturbation_consistent_with_absolute() {
        let g = grid();
        let w = build_wall(&g, [1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<f64> = g.sqrt_mu().iter().map(|s| s * (rng.random::<f64>() - 0.5)).collect();
        let big: Vec<f64> = g.mu().iter().zip(g.sqrt_mu()).zip(&f).map(|((m, s), x)| m + s * x).collect();
        let abs_in = diffuse_reflect(&w, &w.gather_outgoing(&big));
        let pert_in = diffuse_reflect_perturbation(&w, &w.gather_outgoing(&f));
        for ((&j, a), p) in w.incoming().iter().zip(&abs_in).zip(&pert_in) {
            let via = g.mu()[j] + g.sqrt_mu()[j] * p;
            assert!((a - via).abs() <= 1e-12);
        }
    }

    #[test]
    fn coercivity_examples() {
        let g = grid();
        let w = build_wall(&g, [1.0, 0.0, 0.0]).unwrap();
        let c = coercivity_identity(&w, &g, g.sqrt_mu()).unwrap();
        assert!(c.lhs.abs() < 1e-14 && c.rhs.abs() < 1e-14);
        let z = coercivity_identity(&w, &g, &vec![0.0; g.len()]).unwrap();
        assert_eq!((z.lhs, z.rhs, z.gap), (0.0, 0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f: Vec<f64> = g.sqrt_mu().iter().map(|s| s * (rng.random::<f64>() - 0.3)).collect();
        assert!(coercivity_identity(&w, &g, &f).is_err());
        w.reflect_perturbation_in_place(&mut f);
        let c = coercivity_identity(&w, &g, &f).unwrap();
        assert!(c.rhs > 0.0);
        assert!(c.gap <= 1e-10 * (1.0 + c.rhs));
    }
}
