//! Backward stochastic cycles under the diffuse-wall measure
//! `d sigma = c_mu mu(v) (n.v) dv` on `{n.v > 0}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::geometry::{Domain, Exit};
use crate::{dot3, BgkError, Result, Vec3};

/// Independent stream for sample `index` under `seed`.
pub fn sample_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Two unit vectors completing `n` to an orthonormal frame.
fn tangent_frame(n: &Vec3) -> (Vec3, Vec3) {
    let a = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = dot3(&a, n);
    let mut t1 = [a[0] - d * n[0], a[1] - d * n[1], a[2] - d * n[2]];
    let l = dot3(&t1, &t1).sqrt();
    t1.iter_mut().for_each(|x| *x /= l);
    let t2 = [n[1] * t1[2] - n[2] * t1[1], n[2] * t1[0] - n[0] * t1[2], n[0] * t1[1] - n[1] * t1[0]];
    (t1, t2)
}

/// Wall-normal speed with density `s exp(-s^2/2)` on `s > 0`.
pub fn sample_normal_speed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    // 1 - u lies in (0, 1]; guard the single value that would give s = 0
    let s = (-2.0 * (-u).ln_1p()).sqrt();
    if s > 0.0 { s } else { f64::MIN_POSITIVE }
}

/// Exact draw from `d sigma` at a wall with outward normal `n`.
pub fn sample_wall_velocity<R: Rng + ?Sized>(rng: &mut R, n: &Vec3) -> Result<Vec3> {
    if (dot3(n, n).sqrt() - 1.0).abs() > 1e-12 {
        return Err(BgkError::Precondition(format!("normal {n:?} is not a unit vector")));
    }
    let s = sample_normal_speed(rng);
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    let (t1, t2) = tangent_frame(n);
    // the backward ray x - t v enters the domain, so v points along n
    Ok([0, 1, 2].map(|k| s * n[k] + a * t1[k] + b * t2[k]))
}

/// Draw from the global Maxwellian `mu`.
pub fn sample_maxwellian<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounce {
    /// `t_k > 0`
    pub t: f64,
    /// `x_k` on the boundary
    pub x: Vec3,
    /// velocity `v_k` drawn from `d sigma` at `x_k`
    pub v: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleStatus {
    /// Time zero is crossed before the bounce with this index.
    ReachedZero { bounce: usize },
    /// All `k_max` bounces happen at positive times.
    Survived { bounces: usize },
    /// First leg never reaches a wall.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleSample {
    pub t0: f64,
    pub x: Vec3,
    pub v: Vec3,
    pub bounces: Vec<Bounce>,
    pub status: CycleStatus,
}

impl CycleSample {
    /// `t_k > 0`, with `t_0 > 0` always counting as survival.
    pub fn survives(&self, k: usize) -> bool {
        self.status != CycleStatus::Degenerate && (k == 0 || self.bounces.len() >= k)
    }
}

/// One backward cycle from `(t0, x, v)`, stopping at time zero or after
/// `k_max` bounces.
pub fn sample_cycle<R: Rng + ?Sized>(domain: &Domain, start: (f64, Vec3, Vec3), k_max: usize, rng: &mut R) -> Result<CycleSample> {
    let (t0, x, v) = start;
    if k_max == 0 {
        return Err(BgkError::Precondition("k_max must be >= 1".into()));
    }
    if !domain.contains(&x) {
        return Err(BgkError::Precondition(format!("start {x:?} is not interior")));
    }
    let mut sample = CycleSample { t0, x, v, bounces: Vec::new(), status: CycleStatus::Degenerate };
    let (mut t, mut pos, mut vel) = (t0, x, v);
    for k in 1..=k_max {
        let (tb, xb) = match domain.backward_exit(&pos, &vel) {
            Exit::Hit { time, point } => (time, point),
            Exit::NoExit if k == 1 => return Ok(sample),
            Exit::NoExit => {
                return Err(BgkError::Domain(format!("wall-sampled velocity {vel:?} does not leave {pos:?}")));
            }
        };
        let tk = t - tb;
        if tk <= 0.0 {
            sample.status = CycleStatus::ReachedZero { bounce: k };
            return Ok(sample);
        }
        let n = domain.outward_normal(&xb)?;
        // backward rays from a wall go inward, against the outward normal
        let inward = n.map(|c| -c);
        let vk = sample_wall_velocity(rng, &inward)?;
        let vk = vk.map(|c| -c);
        sample.bounces.push(Bounce { t: tk, x: xb, v: vk });
        t = tk;
        pos = xb;
        vel = vk;
    }
    sample.status = CycleStatus::Survived { bounces: k_max };
    Ok(sample)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalEstimate {
    pub k: usize,
    pub t0: f64,
    /// Samples used, degenerate ones excluded.
    pub n_samples: usize,
    pub degenerate: usize,
    pub p_hat: f64,
    /// `1.96 sqrt(p (1 - p) / n)`
    pub half_width: f64,
    pub seed: u64,
}

impl SurvivalEstimate {
    fn new(k: usize, t0: f64, hits: usize, n: usize, degenerate: usize, seed: u64) -> Self {
        let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let half_width = if n == 0 { 0.0 } else { 1.96 * (p * (1.0 - p) / n as f64).sqrt() };
        SurvivalEstimate { k, t0, n_samples: n, degenerate, p_hat: p, half_width, seed }
    }
}

pub const MIN_SAMPLES: usize = 1000;

/// Bounce counts reached at positive time, per sample, in index order.
/// `None` marks a degenerate sample.
fn bounce_counts(domain: &Domain, t0: f64, k_max: usize, n: usize, seed: u64, start: Option<(Vec3, Vec3)>) -> Result<Vec<Option<usize>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_stream(seed, i);
            let (x, v) = match start {
                Some(s) => s,
                None => {
                    let u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
                    (domain.uniform_point(u), sample_maxwellian(&mut rng))
                }
            };
            let s = sample_cycle(domain, (t0, x, v), k_max.max(1), &mut rng)?;
            Ok(match s.status {
                CycleStatus::Degenerate => None,
                _ => Some(s.bounces.len()),
            })
        })
        .collect()
}

fn sweep_from_counts(counts: &[Option<usize>], t0: f64, k_max: usize, seed: u64) -> Vec<SurvivalEstimate> {
    let degenerate = counts.iter().filter(|c| c.is_none()).count();
    let n = counts.len() - degenerate;
    (0..=k_max)
        .map(|k| {
            let hits = counts.iter().flatten().filter(|&&c| k == 0 || c >= k).count();
            SurvivalEstimate::new(k, t0, hits, n, degenerate, seed)
        })
        .collect()
}

/// Estimates of `P(t_k > 0)` for `k = 0..=k_max` from one set of cycles,
/// starts uniform in the domain with `v ~ mu`. The events are nested, so
/// the sequence is non-increasing sample by sample.
pub fn survival_sweep(domain: &Domain, t0: f64, k_max: usize, n_samples: usize, seed: u64) -> Result<Vec<SurvivalEstimate>> {
    if n_samples < MIN_SAMPLES {
        return Err(BgkError::Precondition(format!("n_samples = {n_samples} < {MIN_SAMPLES}")));
    }
    let counts = bounce_counts(domain, t0, k_max, n_samples, seed, None)?;
    Ok(sweep_from_counts(&counts, t0, k_max, seed))
}

/// `mu`-averaged estimate of `P(t_k > 0)`.
pub fn estimate_survival(domain: &Domain, t0: f64, k: usize, n_samples: usize, seed: u64) -> Result<SurvivalEstimate> {
    Ok(survival_sweep(domain, t0, k, n_samples, seed)?[k])
}

/// Estimate for a fixed start `(x, v)`.
pub fn estimate_survival_from(domain: &Domain, start: (Vec3, Vec3), t0: f64, k: usize, n_samples: usize, seed: u64) -> Result<SurvivalEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(BgkError::Precondition(format!("n_samples = {n_samples} < {MIN_SAMPLES}")));
    }
    let counts = bounce_counts(domain, t0, k, n_samples, seed, Some(start))?;
    Ok(sweep_from_counts(&counts, t0, k, seed)[k])
}

/// Start grid: points on the segment from the centre towards the first
/// axis, each with velocities `+-s e_1` and `s (e_1 + e_2)/sqrt 2`.
pub fn start_grid(domain: &Domain, points: usize, speeds: &[f64]) -> Vec<(Vec3, Vec3)> {
    let (centre, extent) = match *domain {
        Domain::Slab { length } => (0.5 * length, 0.5 * length),
        Domain::Disk { radius } | Domain::Ball { radius } => (0.0, radius),
    };
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for p in 0..points {
        let x = [centre + extent * 0.9 * p as f64 / points.max(1) as f64, 0.0, 0.0];
        for &s in speeds {
            for d in [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [r, r, 0.0]] {
                out.push((x, d.map(|c: f64| s * c)));
            }
        }
    }
    out
}

/// Largest fixed-start estimate over `starts`; the sup over starting
/// points is what the decay bound controls.
pub fn worst_start_survival(domain: &Domain, starts: &[(Vec3, Vec3)], t0: f64, k: usize, n_samples: usize, seed: u64) -> Result<SurvivalEstimate> {
    let mut worst: Option<SurvivalEstimate> = None;
    for (i, &s) in starts.iter().enumerate() {
        let e = estimate_survival_from(domain, s, t0, k, n_samples, seed.wrapping_add(i as u64))?;
        if worst.is_none_or(|w| e.p_hat > w.p_hat) {
            worst = Some(e);
        }
    }
    worst.ok_or_else(|| BgkError::Precondition("empty start grid".into()))
}

/// `k = ceil(c T0^{5/4})`
pub fn bounce_budget(c: f64, t0: f64) -> usize {
    (c * t0.powf(1.25)).ceil() as usize
}

/// Kolmogorov-Smirnov statistic and asymptotic p-value of `samples`
/// against the continuous CDF `cdf`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test of `n` wall-normal speeds from stream `(seed, 0)` against
/// `1 - exp(-s^2/2)`.
pub fn normal_speed_ks(n: usize, seed: u64) -> (f64, f64) {
    let mut rng = sample_stream(seed, 0);
    let s: Vec<f64> = (0..n).map(|_| sample_normal_speed(&mut rng)).collect();
    ks_test(&s, |x| -(-0.5 * x * x).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_velocity_moments() {
        let mut rng = sample_stream(7, 0);
        let n = [0.0, 0.6, 0.8];
        let m = 200_000;
        let (mut s1, mut s2, mut t) = (0.0, 0.0, 0.0);
        for _ in 0..m {
            let v = sample_wall_velocity(&mut rng, &n).unwrap();
            let vn = dot3(&v, &n);
            assert!(vn > 0.0);
            s1 += vn;
            s2 += vn * vn;
            t += v[0];
        }
        let mean = s1 / m as f64;
        let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
        assert!((mean - (std::f64::consts::PI / 2.0).sqrt()).abs() < 3.0 * se);
        assert!((t / m as f64).abs() < 3.0 / (m as f64).sqrt());
        assert!(sample_wall_velocity(&mut rng, &[1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn ks_accepts_exact_and_rejects_wrong_law() {
        let (_, p) = normal_speed_ks(20_000, 3);
        assert!(p > 0.01);
        let mut rng = sample_stream(3, 1);
        let s: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>() * 3.0).collect();
        let (_, p) = ks_test(&s, |x| -(-0.5 * x * x).exp_m1());
        assert!(p < 1e-6);
    }

    #[test]
    fn short_horizon_has_no_bounce() {
        let d = Domain::slab(1.0).unwrap();
        let mut rng = sample_stream(1, 0);
        let s = sample_cycle(&d, (0.1, [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]), 5, &mut rng).unwrap();
        assert!(s.bounces.is_empty());
        assert_eq!(s.status, CycleStatus::ReachedZero { bounce: 1 });
        assert!(s.survives(0) && !s.survives(1));
    }

    #[test]
    fn tangential_start_is_degenerate() {
        let d = Domain::slab(1.0).unwrap();
        let mut rng = sample_stream(1, 0);
        let s = sample_cycle(&d, (1.0, [0.5, 0.0, 0.0], [0.0, 1.0, 0.0]), 5, &mut rng).unwrap();
        assert_eq!(s.status, CycleStatus::Degenerate);
        assert!(!s.survives(0));
    }

    #[test]
    fn cycles_decrease_in_time_and_sit_on_walls() {
        for d in [Domain::slab(1.0).unwrap(), Domain::disk(1.0).unwrap(), Domain::ball(1.0).unwrap()] {
            for i in 0..2000 {
                let mut rng = sample_stream(11, i);
                let x = d.uniform_point([rng.random(), rng.random(), rng.random()]);
                let v = sample_maxwellian(&mut rng);
                let s = sample_cycle(&d, (20.0, x, v), 30, &mut rng).unwrap();
                let mut prev = s.t0;
                for b in &s.bounces {
                    assert!(b.t < prev);
                    prev = b.t;
                    assert!(d.level(&b.x).abs() < 1e-9);
                    let n = d.outward_normal(&b.x).unwrap();
                    assert!(dot3(&n, &b.v) > 0.0);
                }
            }
        }
    }

    #[test]
    fn huge_horizon_survives_one_bounce() {
        let d = Domain::slab(1.0).unwrap();
        let e = estimate_survival(&d, 1e6, 1, 2000, 5).unwrap();
        assert!(e.p_hat > 0.99);
        assert_eq!(estimate_survival(&d, 1.0, 0, 2000, 5).unwrap().p_hat, 1.0);
        assert!(estimate_survival(&d, 1.0, 1, 10, 5).is_err());
    }

    #[test]
    fn sweep_is_monotone_and_reproducible() {
        let d = Domain::ball(1.0).unwrap();
        let a = survival_sweep(&d, 5.0, 10, 4000, 9).unwrap();
        let b = survival_sweep(&d, 5.0, 10, 4000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[1].p_hat <= w[0].p_hat));
        let single = estimate_survival(&d, 5.0, 6, 4000, 9).unwrap();
        assert_eq!(single.p_hat, a[6].p_hat);
        for e in &a {
            assert!((e.half_width - 1.96 * (e.p_hat * (1.0 - e.p_hat) / e.n_samples as f64).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn worst_start_dominates_a_member() {
        let d = Domain::ball(1.0).unwrap();
        let starts = start_grid(&d, 2, &[1.0]);
        assert_eq!(starts.len(), 6);
        let w = worst_start_survival(&d, &starts, 3.0, 3, 1000, 2).unwrap();
        let one = estimate_survival_from(&d, starts[0], 3.0, 3, 1000, 2).unwrap();
        assert!(w.p_hat >= one.p_hat);
        assert_eq!(bounce_budget(0.5, 10.0), 9);
    }
}
