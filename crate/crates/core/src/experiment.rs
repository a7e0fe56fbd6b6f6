//! Experiment orchestration and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::boundary::{coercivity_identity, slab_walls};
use crate::config::{ExperimentKind, ExperimentSpec};
use crate::cycles::{bounce_budget, normal_speed_ks, sample_stream, start_grid, survival_sweep, worst_start_survival, SurvivalEstimate};
use crate::diagnostics::{conservation_residuals, fit_decay};
use crate::linearization::{
    gamma_direct, gamma_expansion, gamma_stability_probe, macroscopic_control_probe, random_perturbation, weighted_part_norms, ThetaQuadrature,
};
use crate::solver::{Mode, RunRecord, Solver, SolverConfig};
use crate::state::{DistributionField, DumpHeader, Representation};
use crate::velocity::VelocityGrid;
use crate::{BgkError, Result};

/// Files written and invariant failures seen by one experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

struct Csv {
    path: PathBuf,
    w: csv::Writer<File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        Ok(Csv { path, w })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.w.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self, out: &mut ExperimentOutcome) -> Result<()> {
        self.w.flush()?;
        out.files.push(self.path);
        Ok(())
    }
}

/// `timeseries.csv` rows of a run record.
pub fn write_timeseries(dir: &Path, rec: &RunRecord, out: &mut ExperimentOutcome) -> Result<()> {
    let mut c = Csv::create(dir, "timeseries.csv", &["t", "linf_w", "l2", "mass", "min_F", "flux_residual"])?;
    for r in &rec.rows {
        c.row(&[num(r.t), num(r.linf_w), num(r.l2), num(r.mass), num(r.min_f), num(r.flux_residual)])?;
    }
    c.finish(out)
}

fn write_survival(dir: &Path, name: &str, rows: &[SurvivalEstimate], out: &mut ExperimentOutcome) -> Result<()> {
    let mut c = Csv::create(dir, name, &["T0", "k", "n", "p_hat", "ci", "seed"])?;
    for e in rows {
        c.row(&[num(e.t0), e.k.to_string(), e.n_samples.to_string(), num(e.p_hat), num(e.half_width), e.seed.to_string()])?;
    }
    c.finish(out)
}

fn write_manifest(dir: &Path, spec: &ExperimentSpec, out: &mut ExperimentOutcome) -> Result<()> {
    let path = dir.join("manifest.txt");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "# bgk-lab {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# resolved configuration; parses back with --config")?;
    w.write_all(spec.to_config_text().as_bytes())?;
    let names: Vec<String> = out.files.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
    writeln!(w, "\n# outputs: {}", names.join(", "))?;
    if !out.failures.is_empty() {
        for f in &out.failures {
            writeln!(w, "# FAILED: {f}")?;
        }
    }
    w.flush()?;
    out.files.push(path);
    Ok(())
}

/// Runs `spec`, writing CSV files and `manifest.txt` into `dir`.
///
/// Solver invariant violations abort the run after writing
/// `failure_dump.bin` and are returned as errors; softer checks are
/// collected in [`ExperimentOutcome::failures`].
pub fn run_experiment(spec: &ExperimentSpec, dir: &Path) -> Result<ExperimentOutcome> {
    spec.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut out = ExperimentOutcome::default();
    match spec.kind {
        ExperimentKind::DecayRun => decay_run(spec, dir, &mut out)?,
        ExperimentKind::OperatorProbe => operator_probe(spec, dir, &mut out)?,
        ExperimentKind::StabilityProbe => stability_probe(spec, dir, &mut out)?,
        ExperimentKind::CycleStudy => cycle_study(spec, dir, &mut out)?,
        ExperimentKind::CoercivityCheck => coercivity_check(spec, dir, &mut out)?,
        ExperimentKind::ConservationStudy => conservation_study(spec, dir, &mut out)?,
    }
    write_manifest(dir, spec, &mut out)?;
    Ok(out)
}

fn dump_on_failure(solver: &mut Solver, dir: &Path, err: BgkError) -> BgkError {
    let header = DumpHeader { eta: solver.config().collision.eta, omega: solver.config().collision.omega };
    let path = dir.join("failure_dump.bin");
    let written = solver
        .state()
        .and_then(|s| {
            let f = File::create(&path)?;
            s.write_dump(BufWriter::new(f), &header)
        })
        .is_ok();
    let t = solver.time();
    if written {
        BgkError::Scheme(format!("{err} (t = {t}, state dumped to {})", path.display()))
    } else {
        err
    }
}

fn decay_run(spec: &ExperimentSpec, dir: &Path, out: &mut ExperimentOutcome) -> Result<()> {
    let mut solver = Solver::new(spec.solver.clone())?;
    let rec = match solver.run() {
        Ok(r) => r,
        Err(e) => return Err(dump_on_failure(&mut solver, dir, e)),
    };
    out.failures.extend(rec.warnings.iter().map(|w| format!("warning: {w}")));
    write_timeseries(dir, &rec, out)?;
    let mut c = Csv::create(dir, "decayfit.csv", &["norm_kind", "lambda", "C", "r2", "t_lo", "t_hi"])?;
    let window = (spec.fit.t_lo, spec.fit.t_hi);
    for (name, series) in [("linf_w", rec.series(|r| r.linf_w)), ("l2", rec.series(|r| r.l2))] {
        let fit = fit_decay(&series, window)?;
        c.row(&[name.to_string(), num(fit.lambda), num(fit.c), num(fit.r2), num(fit.t_lo), num(fit.t_hi)])?;
    }
    c.finish(out)
}

fn probe_grid(spec: &ExperimentSpec) -> Result<VelocityGrid> {
    VelocityGrid::new(spec.solver.n_v, spec.solver.v_max, spec.solver.weight)
}

fn weighted_max(grid: &VelocityGrid, f: &[f64]) -> f64 {
    let wp = grid.weight_params();
    grid.nodes().iter().zip(f).map(|(v, x)| wp.value(v) * x.abs()).fold(0.0, f64::max)
}

fn operator_probe(spec: &ExperimentSpec, dir: &Path, out: &mut ExperimentOutcome) -> Result<()> {
    let grid = probe_grid(spec)?;
    let tq = ThetaQuadrature::new(spec.probe.theta_nodes)?;
    let params = spec.solver.collision;
    let mut c = Csv::create(dir, "gamma_oracle.csv", &["delta", "max_gap", "gamma1", "gamma2", "gamma3", "gamma4"])?;
    for (di, &delta) in spec.probe.deltas.iter().enumerate() {
        let mut gap = 0.0f64;
        let mut parts = [0.0f64; 4];
        for s in 0..spec.probe.samples {
            let mut rng = sample_stream(spec.seed, (di * spec.probe.samples + s) as u64);
            let f = random_perturbation(&grid, &mut rng, delta);
            let exp = gamma_expansion(&params, &grid, &f, &tq)?;
            let direct = gamma_direct(&params, &grid, &f)?;
            let total = exp.total();
            let g = total.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / weighted_max(&grid, &f);
            gap = gap.max(g);
            for (p, n) in parts.iter_mut().zip(weighted_part_norms(&grid, &exp)) {
                *p = p.max(n);
            }
            let moments = grid.basis_coefficients(&direct);
            let pg = moments.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if pg > 1e-8 {
                out.failures.push(format!("P(Gamma) moment {pg:e} > 1e-8 at delta = {delta:e}"));
            }
        }
        if gap > spec.probe.gap_tol {
            out.failures.push(format!("expansion gap {gap:e} > {:e} at delta = {delta:e}", spec.probe.gap_tol));
        }
        c.row(&[num(delta), num(gap), num(parts[0]), num(parts[1]), num(parts[2]), num(parts[3])])?;
    }
    c.finish(out)
}

/// Measured smallness ratios at one amplitude, maximised over samples:
/// `[Gamma_1/d^2, Gamma_2/d^2, Gamma_3/d^2, Gamma_4/d^3, control, stability]`.
pub fn smallness_ratios(spec: &ExperimentSpec, grid: &VelocityGrid, delta: f64, stream: u64) -> Result<[f64; 6]> {
    let tq = ThetaQuadrature::new(spec.probe.theta_nodes)?;
    let params = spec.solver.collision;
    let mut r = [0.0f64; 6];
    for s in 0..spec.probe.samples {
        let mut rng = sample_stream(spec.seed, stream + s as u64);
        let f1 = random_perturbation(grid, &mut rng, delta);
        let f2 = random_perturbation(grid, &mut rng, delta);
        let parts = weighted_part_norms(grid, &gamma_expansion(&params, grid, &f1, &tq)?);
        let d2 = delta * delta;
        let vals = [parts[0] / d2, parts[1] / d2, parts[2] / d2, parts[3] / (d2 * delta)];
        for (x, v) in r.iter_mut().zip(vals) {
            *x = x.max(v);
        }
        let g = std::sync::Arc::new(grid.clone());
        let field = DistributionField::new(g, 1, 1.0, Representation::Perturbation, f1.clone())?;
        r[4] = r[4].max(macroscopic_control_probe(grid, &field, &grid.weight_params())?.ratio);
        r[5] = r[5].max(gamma_stability_probe(&params, grid, &f1, &f2, &tq)?);
    }
    Ok(r)
}

fn stability_probe(spec: &ExperimentSpec, dir: &Path, out: &mut ExperimentOutcome) -> Result<()> {
    let grid = probe_grid(spec)?;
    let mut c = Csv::create(
        dir,
        "stability.csv",
        &["delta", "gamma1_ratio", "gamma2_ratio", "gamma3_ratio", "gamma4_ratio", "control_ratio", "stability_ratio"],
    )?;
    for (di, &delta) in spec.probe.deltas.iter().enumerate() {
        let r = smallness_ratios(spec, &grid, delta, (di * spec.probe.samples) as u64)?;
        let mut row = vec![num(delta)];
        row.extend(r.iter().map(|&x| num(x)));
        c.row(&row)?;
    }
    c.finish(out)
}

fn cycle_study(spec: &ExperimentSpec, dir: &Path, out: &mut ExperimentOutcome) -> Result<()> {
    let cp = &spec.cycles;
    let mut sweep_rows = Vec::new();
    let mut worst_rows = Vec::new();
    let starts = start_grid(&cp.domain, cp.start_points, &cp.start_speeds);
    for &t0 in &cp.horizons {
        let k = bounce_budget(cp.k_coeff, t0);
        sweep_rows.extend(survival_sweep(&cp.domain, t0, k, cp.samples, spec.seed)?);
        if !starts.is_empty() {
            worst_rows.push(worst_start_survival(&cp.domain, &starts, t0, k, cp.start_samples, spec.seed)?);
        }
    }
    write_survival(dir, "survival.csv", &sweep_rows, out)?;
    write_survival(dir, "survival_worst.csv", &worst_rows, out)?;
    let (d, p) = normal_speed_ks(cp.ks_samples, spec.seed);
    let mut c = Csv::create(dir, "ks.csv", &["n", "statistic", "p_value"])?;
    c.row(&[cp.ks_samples.to_string(), num(d), num(p)])?;
    c.finish(out)?;
    if p < 0.01 {
        out.failures.push(format!("wall-normal speed KS test rejected (p = {p:e})"));
    }
    Ok(())
}

/// Random nonnegative trace `mu (1 + u/2)`, `u` uniform in `[-1, 1]`.
pub fn random_trace<R: Rng + ?Sized>(grid: &VelocityGrid, rng: &mut R) -> Vec<f64> {
    grid.mu().iter().map(|m| m * (1.0 + 0.5 * (2.0 * rng.random::<f64>() - 1.0))).collect()
}

/// Per trial and wall: `[lhs, rhs, gap / (1 + |lhs|), |mass flux| / ||F||_1]`.
pub fn coercivity_trials(grid: &VelocityGrid, trials: usize, seed: u64) -> Result<Vec<[f64; 4]>> {
    let walls = slab_walls(grid)?;
    let mut rows = Vec::with_capacity(2 * trials);
    for t in 0..trials {
        let mut rng = sample_stream(seed, t as u64);
        let trace = random_trace(grid, &mut rng);
        let f: Vec<f64> = trace.iter().zip(grid.mu()).zip(grid.sqrt_mu()).map(|((x, m), s)| (x - m) / s).collect();
        for wall in [&walls.0, &walls.1] {
            let mut big = trace.clone();
            wall.reflect_in_place(&mut big);
            let norm = grid.sum(&big);
            let flux = wall.mass_flux(grid, &big).abs() / norm;
            let mut p = f.clone();
            wall.reflect_perturbation_in_place(&mut p);
            let c = coercivity_identity(wall, grid, &p)?;
            rows.push([c.lhs, c.rhs, c.gap / (1.0 + c.lhs.abs()), flux]);
        }
    }
    Ok(rows)
}

/// Largest deviation of `mu` (absolute) and `sqrt(mu)` (perturbation) from
/// themselves after reflection at either wall, relative to the node value.
pub fn wall_fixed_point_error(grid: &VelocityGrid) -> Result<f64> {
    let walls = slab_walls(grid)?;
    let mut err = 0.0f64;
    for wall in [&walls.0, &walls.1] {
        let mut m = grid.mu().to_vec();
        wall.reflect_in_place(&mut m);
        let mut s = grid.sqrt_mu().to_vec();
        wall.reflect_perturbation_in_place(&mut s);
        for j in 0..grid.len() {
            err = err.max((m[j] - grid.mu()[j]).abs() / grid.mu()[j]);
            err = err.max((s[j] - grid.sqrt_mu()[j]).abs() / grid.sqrt_mu()[j]);
        }
    }
    Ok(err)
}

fn coercivity_check(spec: &ExperimentSpec, dir: &Path, out: &mut ExperimentOutcome) -> Result<()> {
    let grid = probe_grid(spec)?;
    let rows = coercivity_trials(&grid, spec.coercivity.trials, spec.seed)?;
    let mut c = Csv::create(dir, "coercivity.csv", &["trial", "wall", "lhs", "rhs", "rel_gap", "mass_flux"])?;
    for (i, r) in rows.iter().enumerate() {
        c.row(&[(i / 2).to_string(), if i % 2 == 0 { "left" } else { "right" }.to_string(), num(r[0]), num(r[1]), num(r[2]), num(r[3])])?;
        if r[2] > 1e-10 {
            out.failures.push(format!("coercivity gap {:e} in trial {}", r[2], i / 2));
        }
        if r[3] > 1e-14 {
            out.failures.push(format!("wall mass flux {:e} in trial {}", r[3], i / 2));
        }
    }
    c.finish(out)?;
    let fp = wall_fixed_point_error(&grid)?;
    if fp > 1e-14 {
        out.failures.push(format!("wall fixed points off by {fp:e}"));
    }
    Ok(())
}

/// Residual norms `[mass, momentum, energy]` of a linearized run at the
/// given resolution, from the step starting at `t_snapshot`.
pub fn conservation_residual_norms(base: &SolverConfig, t_snapshot: f64) -> Result<(f64, [f64; 3])> {
    let mut solver = Solver::new(base.clone())?;
    let steps = (t_snapshot / solver.dt()).round() as usize;
    solver.advance(steps)?;
    let s0 = solver.snapshot()?;
    solver.step()?;
    let s1 = solver.snapshot()?;
    Ok((solver.dt(), conservation_residuals(&s0, &s1)?.norms()))
}

/// Level `r` of a refinement study: `N_x 2^r` cells and the level-0 step
/// divided by `2^r`, always in linearized mode.
pub fn refined_config(base: &SolverConfig, level: usize) -> SolverConfig {
    let mut c = base.clone();
    c.mode = Mode::Linearized;
    let (dt0, _) = base.time_step();
    let scale = 1usize << level;
    c.n_cells = base.n_cells * scale;
    c.dt = Some(dt0 / scale as f64);
    c
}

fn conservation_study(spec: &ExperimentSpec, dir: &Path, out: &mut ExperimentOutcome) -> Result<()> {
    if spec.solver.delta == 0.0 {
        return Err(BgkError::Config("conservation study needs delta > 0".into()));
    }
    let mut c = Csv::create(dir, "conservation.csv", &["n_x", "dt", "mass", "momentum", "energy"])?;
    for level in 0..spec.conservation.levels {
        let cfg = refined_config(&spec.solver, level);
        let (dt, r) = conservation_residual_norms(&cfg, spec.conservation.t_snapshot)?;
        c.row(&[cfg.n_cells.to_string(), num(dt), num(r[0]), num(r[1]), num(r[2])])?;
    }
    c.finish(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn quick(kind: &str, extra: &str) -> ExperimentSpec {
        parse_config(&format!("kind = {kind}\n[grid]\nn_v = 8\nv_max = 6\n{extra}")).unwrap()
    }

    #[test]
    fn coercivity_experiment_passes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick("coercivity-check", "[coercivity]\ntrials = 5\n");
        let out = run_experiment(&spec, dir.path()).unwrap();
        assert!(out.passed(), "{:?}", out.failures);
        let text = std::fs::read_to_string(dir.path().join("coercivity.csv")).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(dir.path().join("manifest.txt").exists());
    }

    #[test]
    fn decay_run_writes_schema() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick("decay-run", "[solver]\nn_x = 8\ndelta = 1e-2\nt_final = 2\n[fit]\nt_lo = 0.5\nt_hi = 2\n");
        run_experiment(&spec, dir.path()).unwrap();
        let ts = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
        assert_eq!(ts.lines().next().unwrap(), "t,linf_w,l2,mass,min_F,flux_residual");
        assert_eq!(ts.lines().count(), 22);
        let fit = std::fs::read_to_string(dir.path().join("decayfit.csv")).unwrap();
        assert_eq!(fit.lines().next().unwrap(), "norm_kind,lambda,C,r2,t_lo,t_hi");
        let lambda: f64 = fit.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert!(lambda > 0.0);
    }

    #[test]
    fn refined_config_halves_step() {
        let base = SolverConfig { n_cells: 16, ..Default::default() };
        let a = refined_config(&base, 0);
        let b = refined_config(&base, 1);
        assert_eq!(b.n_cells, 32);
        assert_eq!(a.time_step().0, 2.0 * b.time_step().0);
    }
}
