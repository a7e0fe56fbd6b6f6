//! Independent finite-difference and scaling oracles for the linearization.

use bgk_core::collision::CollisionParams;
use bgk_core::linearization::{
    chart_jacobian, gamma_expansion, gamma_stability_probe, macroscopic_control_probe, q_i_eval, q_ij_eval, weighted_part_norms,
    ThetaQuadrature, ThetaState,
};
use bgk_core::state::{DistributionField, Representation};
use bgk_core::velocity::{Macro, VelocityGrid, WeightParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

// (rho, m, G) -> (rho, U, T), written out independently of the crate
fn prim(c: &[f64; 5]) -> (f64, [f64; 3], f64) {
    let rho = c[0];
    let u = [c[1] / rho, c[2] / rho, c[3] / rho];
    let m2 = c[1] * c[1] + c[2] * c[2] + c[3] * c[3];
    let t = 1.0 + (6f64.sqrt() * c[4] - m2 / rho) / (3.0 * rho);
    (rho, u, t)
}

fn chart(m: &Macro) -> [f64; 5] {
    let u2: f64 = m.u.iter().map(|x| x * x).sum();
    [m.rho, m.rho * m.u[0], m.rho * m.u[1], m.rho * m.u[2], m.rho * (u2 + 3.0 * m.temp - 3.0) / 6f64.sqrt()]
}

fn maxwell(c: &[f64; 5], v: &[f64; 3]) -> f64 {
    let (rho, u, t) = prim(c);
    let d2: f64 = (0..3).map(|k| (v[k] - u[k]).powi(2)).sum();
    rho / (2.0 * std::f64::consts::PI * t).powf(1.5) * (-d2 / (2.0 * t)).exp()
}

fn nu(p: &CollisionParams, c: &[f64; 5]) -> f64 {
    let (rho, _, t) = prim(c);
    rho.powf(p.eta) * t.powf(p.omega)
}

fn bump(c: &[f64; 5], i: usize, h: f64) -> [f64; 5] {
    let mut d = *c;
    d[i] += h;
    d
}

fn random_state(rng: &mut ChaCha8Rng) -> ThetaState {
    let m = Macro::new(
        rng.random_range(0.8..1.2),
        [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
        rng.random_range(0.8..1.2),
    );
    ThetaState::from_macro(&m, rng.random_range(0.0..1.0)).unwrap()
}

fn max_abs(m: &[[f64; 5]; 5]) -> f64 {
    m.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()))
}

#[test]
fn jacobian_matches_chart_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    for _ in 0..50 {
        let ts = random_state(&mut rng);
        let m = ts.macro_state();
        let j = chart_jacobian(&m).unwrap();
        let c = chart(&m);
        for i in 0..5 {
            let (rp, up, tp) = prim(&bump(&c, i, h));
            let (rm, um, tm) = prim(&bump(&c, i, -h));
            let fd = [(rp - rm), up[0] - um[0], up[1] - um[1], up[2] - um[2], tp - tm].map(|x| x / (2.0 * h));
            for k in 0..5 {
                assert!((j[i][k] - fd[k]).abs() <= 1e-6 * (1.0 + fd[k].abs()), "J[{i}][{k}] {} vs {}", j[i][k], fd[k]);
            }
        }
    }
}

#[test]
fn jacobian_at_equilibrium() {
    let j = chart_jacobian(&Macro::EQUILIBRIUM).unwrap();
    assert_eq!([j[0][0], j[1][0], j[2][0], j[3][0], j[4][0]], [1.0, 0.0, 0.0, 0.0, 0.0]);
    assert!((j[4][4] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn q_i_at_equilibrium() {
    let eq = ThetaState::from_macro(&Macro::EQUILIBRIUM, 0.5).unwrap();
    let q = q_i_eval(&CollisionParams::new(1.0, 0.0).unwrap(), &eq).unwrap();
    for (a, b) in q.iter().zip([1.0, 0.0, 0.0, 0.0, 0.0]) {
        assert!((a - b).abs() < 1e-15);
    }
    let q = q_i_eval(&CollisionParams::new(0.0, 1.0).unwrap(), &eq).unwrap();
    for (a, b) in q.iter().zip([0.0, 0.0, 0.0, 0.0, (2.0f64 / 3.0).sqrt()]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn q_i_and_q_ij_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = CollisionParams::new(1.0, 0.5).unwrap();
    let h = 1e-4;
    for _ in 0..100 {
        let ts = random_state(&mut rng);
        let c = chart(&ts.macro_state());
        let q = q_i_eval(&params, &ts).unwrap();
        for i in 0..5 {
            let fd = (nu(&params, &bump(&c, i, h)) - nu(&params, &bump(&c, i, -h))) / (2.0 * h);
            assert!((q[i] - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "Q_{i}: {} vs {fd}", q[i]);
        }
        for _ in 0..20 {
            let v = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let qij = q_ij_eval(&ts, &v).unwrap();
            let mut fd = [[0.0; 5]; 5];
            for i in 0..5 {
                for j in 0..5 {
                    fd[i][j] = if i == j {
                        (maxwell(&bump(&c, i, h), &v) - 2.0 * maxwell(&c, &v) + maxwell(&bump(&c, i, -h), &v)) / (h * h)
                    } else {
                        let pp = maxwell(&bump(&bump(&c, i, h), j, h), &v);
                        let pm = maxwell(&bump(&bump(&c, i, h), j, -h), &v);
                        let mp = maxwell(&bump(&bump(&c, i, -h), j, h), &v);
                        let mm = maxwell(&bump(&bump(&c, i, -h), j, -h), &v);
                        (pp - pm - mp + mm) / (4.0 * h * h)
                    };
                }
            }
            let scale = max_abs(&fd).max(maxwell(&c, &v));
            for i in 0..5 {
                for j in 0..5 {
                    assert!((qij[i][j] - fd[i][j]).abs() <= 1e-5 * scale, "Q_{i}{j} at {v:?}: {} vs {}", qij[i][j], fd[i][j]);
                    assert!((qij[i][j] - qij[j][i]).abs() <= 1e-8 * scale);
                }
            }
        }
    }
}

fn grid() -> Arc<VelocityGrid> {
    Arc::new(VelocityGrid::new(16, 7.0, WeightParams::default()).unwrap())
}

#[test]
fn remainder_is_quadratic_along_chi0() {
    let g = grid();
    let tq = ThetaQuadrature::default();
    let params = CollisionParams::new(1.0, 0.5).unwrap();
    let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let f: Vec<f64> = g.chi(0).iter().map(|x| eps * x).collect();
            let total = gamma_expansion(&params, &g, &f, &tq).unwrap().total();
            let wp = g.weight_params();
            let n = g.nodes().iter().zip(&total).map(|(v, x)| wp.value(v) * x.abs()).fold(0.0, f64::max);
            n / (eps * eps)
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi > 0.0 && hi / lo < 2.0, "{ratios:?}");
}

#[test]
fn control_probe_on_density_mode() {
    let g = grid();
    for delta in [1e-2, 1e-3, 1e-4] {
        let f = DistributionField::from_cells(g.clone(), 1, 1.0, Representation::Perturbation, |_, c| {
            c.iter_mut().zip(g.chi(0)).for_each(|(y, s)| *y = delta * s)
        });
        let m = f.to_absolute().unwrap().macro_fields().unwrap();
        assert!((m.rho[0] - 1.0 - delta).abs() < 1e-12);
        assert!(m.u[0].iter().all(|u| u.abs() < 1e-14));
        assert!((m.temp[0] - 1.0).abs() < 2.0 * delta * delta);
        let p = macroscopic_control_probe(&g, &f, &g.weight_params()).unwrap();
        assert!(p.ratio > 0.0 && p.ratio.is_finite());
    }
}

#[test]
fn stability_probe_reduces_to_single_field() {
    let g = grid();
    let tq = ThetaQuadrature::default();
    let params = CollisionParams::new(1.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f1 = bgk_core::linearization::random_perturbation(&g, &mut rng, 1e-2);
    let zero = vec![0.0; g.len()];
    let r = gamma_stability_probe(&params, &g, &f1, &zero, &tq).unwrap();
    let parts = gamma_expansion(&params, &g, &f1, &tq).unwrap();
    let wp = g.weight_params();
    let wmax = |x: &[f64]| g.nodes().iter().zip(x).map(|(v, y)| wp.value(v) * y.abs()).fold(0.0, f64::max);
    let expect = wmax(&parts.total()) / (1e-2 * wmax(&f1));
    assert!((r - expect).abs() <= 1e-12 * expect);
    let norms = weighted_part_norms(&g, &parts);
    assert!(r <= norms.iter().sum::<f64>() / (1e-2 * 1e-2) + 1e-12);
}

#[test]
fn stability_ratio_stable_over_random_pairs() {
    let g = grid();
    let tq = ThetaQuadrature::new(16).unwrap();
    let params = CollisionParams::new(1.0, 0.5).unwrap();
    let mut maxima = Vec::new();
    for delta in [1e-2, 1e-3] {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let f1 = bgk_core::linearization::random_perturbation(&g, &mut rng, delta);
            let f2 = bgk_core::linearization::random_perturbation(&g, &mut rng, delta);
            worst = worst.max(gamma_stability_probe(&params, &g, &f1, &f2, &tq).unwrap());
        }
        assert!(worst.is_finite() && worst > 0.0);
        maxima.push(worst);
    }
    assert!(maxima[0] / maxima[1] < 2.0 && maxima[1] / maxima[0] < 2.0, "{maxima:?}");
}
