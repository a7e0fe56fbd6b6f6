//! Operator-split time stepping on the slab `[0, L]` and the two iteration
//! schemes (linear approximating sequence, positivity sequence).

use std::sync::Arc;

use rayon::prelude::*;

use crate::boundary::{diffuse_reflect, diffuse_reflect_perturbation, slab_walls, WallQuadrature};
use crate::collision::{discrete_maxwellian, project_p, relax_in_place, relax_linearized_in_place, CollisionParams};
use crate::diagnostics::{l2_norm, weighted_linf, MacroSnapshot};
use crate::state::{DistributionField, Representation};
use crate::velocity::{CompensatedSum, VelocityGrid, WeightParams};
use crate::{BgkError, Result};

/// Run-level tolerance on `min F`.
pub const POSITIVITY_TOL: f64 = -1e-13;
/// Run-level tolerance on relative mass drift.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportOrder {
    /// Donor-cell upwind; keeps `F >= 0`.
    First,
    /// Minmod-limited reconstruction; positivity is only monitored.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    Strang,
    Lie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Full BGK relaxation of the absolute field `F`.
    Nonlinear,
    /// `f_t + v_1 f_x + (I - P) f = 0` for the perturbation `f`.
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    Equilibrium,
    /// `f0 = delta cos(2 pi x / L) chi_0`, zero total mass.
    CosineDensity,
    /// `F0 = mu (1 + delta (v1^2 - 1))` in every cell.
    Homogeneous,
    /// `f0 = delta exp(-(x - L/2)^2 / (2 (L/10)^2)) chi_0`.
    Bump,
}

impl InitialCondition {
    pub const NAMES: [&'static str; 4] = ["equilibrium", "cosine-density", "homogeneous", "bump"];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "equilibrium" => Ok(InitialCondition::Equilibrium),
            "cosine-density" => Ok(InitialCondition::CosineDensity),
            "homogeneous" => Ok(InitialCondition::Homogeneous),
            "bump" => Ok(InitialCondition::Bump),
            other => Err(BgkError::Config(format!("unknown initial condition '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitialCondition::Equilibrium => "equilibrium",
            InitialCondition::CosineDensity => "cosine-density",
            InitialCondition::Homogeneous => "homogeneous",
            InitialCondition::Bump => "bump",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n_cells: usize,
    pub length: f64,
    pub n_v: usize,
    pub v_max: f64,
    pub weight: WeightParams,
    pub collision: CollisionParams,
    /// Requested step; `None` picks `cfl dx / V_max`. The step is shortened
    /// so that an integer number of steps fits each output interval.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_final: f64,
    pub output_every: f64,
    pub delta: f64,
    pub initial: InitialCondition,
    pub order: TransportOrder,
    pub splitting: Splitting,
    pub mode: Mode,
    /// Boundary damping parameter `j` of the linear approximating sequence.
    pub damping_j: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_cells: 64,
            length: 1.0,
            n_v: 24,
            v_max: 7.0,
            weight: WeightParams::default(),
            collision: CollisionParams::default(),
            dt: None,
            cfl: 0.9,
            t_final: 10.0,
            output_every: 0.1,
            delta: 0.0,
            initial: InitialCondition::CosineDensity,
            order: TransportOrder::First,
            splitting: Splitting::Strang,
            mode: Mode::Nonlinear,
            damping_j: 2.0,
        }
    }
}

impl SolverConfig {
    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    /// Largest step allowed by the CFL bound `dt <= cfl dx / V_max`.
    pub fn max_stable_dt(&self) -> f64 {
        self.cfl * self.dx() / self.v_max
    }

    pub fn validate(&self) -> Result<()> {
        WeightParams::new(self.weight.beta, self.weight.theta)?;
        CollisionParams::new(self.collision.eta, self.collision.omega)?;
        if self.n_cells < 3 {
            return Err(BgkError::Config(format!("N_x = {} must be >= 3", self.n_cells)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(BgkError::Config(format!("slab length {} must be positive", self.length)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(BgkError::Config(format!("CFL number {} must lie in (0, 1]", self.cfl)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(BgkError::Config(format!("time step {dt} must be positive")));
            }
            if dt > self.max_stable_dt() * (1.0 + 1e-12) {
                return Err(BgkError::Config(format!(
                    "time step {dt} violates CFL bound {} = cfl dx / V_max",
                    self.max_stable_dt()
                )));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(BgkError::Config(format!("perturbation amplitude {} must be >= 0", self.delta)));
        }
        if !(self.t_final >= 0.0 && self.output_every > 0.0) {
            return Err(BgkError::Config("t_final must be >= 0 and output_every > 0".into()));
        }
        if !(self.damping_j >= 2.0) {
            return Err(BgkError::Config(format!("damping parameter j = {} must be >= 2", self.damping_j)));
        }
        if self.mode == Mode::Linearized && self.initial == InitialCondition::Homogeneous && self.delta > 1.0 {
            return Err(BgkError::Config("homogeneous preset needs delta <= 1".into()));
        }
        Ok(())
    }

    /// `(dt, steps per output interval)`.
    pub fn time_step(&self) -> (f64, usize) {
        let target = self.dt.unwrap_or_else(|| self.max_stable_dt());
        let per_output = (self.output_every / target * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (self.output_every / per_output as f64, per_output)
    }

    pub fn build_grid(&self) -> Result<Arc<VelocityGrid>> {
        Ok(Arc::new(VelocityGrid::new(self.n_v, self.v_max, self.weight)?))
    }

    /// Initial state in the representation the mode evolves.
    pub fn initial_state(&self, grid: &Arc<VelocityGrid>) -> DistributionField {
        let (n, dx, l, delta) = (self.n_cells, self.dx(), self.length, self.delta);
        let shape = self.initial;
        let pert = DistributionField::from_cells(grid.clone(), n, dx, Representation::Perturbation, |i, c| {
            let x = (i as f64 + 0.5) * dx;
            match shape {
                InitialCondition::Equilibrium => c.fill(0.0),
                InitialCondition::CosineDensity => {
                    let a = delta * (std::f64::consts::TAU * x / l).cos();
                    c.iter_mut().zip(grid.chi(0)).for_each(|(y, s)| *y = a * s);
                }
                InitialCondition::Bump => {
                    let s2 = (0.1 * l).powi(2);
                    let a = delta * (-(x - 0.5 * l).powi(2) / (2.0 * s2)).exp();
                    c.iter_mut().zip(grid.chi(0)).for_each(|(y, s)| *y = a * s);
                }
                InitialCondition::Homogeneous => {
                    for ((y, v), s) in c.iter_mut().zip(grid.nodes()).zip(grid.sqrt_mu()) {
                        *y = delta * (v[0] * v[0] - 1.0) * s;
                    }
                }
            }
        });
        match self.mode {
            Mode::Linearized => pert,
            Mode::Nonlinear => pert.to_absolute().expect("perturbation field"),
        }
    }
}

/// One output row of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub t: f64,
    /// `||w f||_inf`
    pub linf_w: f64,
    /// `||f||_2`
    pub l2: f64,
    /// `int int F dv dx`
    pub mass: f64,
    pub min_f: f64,
    /// Largest `|net wall mass flux|` over the steps since the previous row.
    pub flux_residual: f64,
    /// `int int sqrt(mu) f dv dx`
    pub perturbation_mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub dt: f64,
    pub steps: u64,
    /// Warnings raised instead of errors (second-order positivity).
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn series(&self, pick: impl Fn(&RunRow) -> f64) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, pick(r))).collect()
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Courant numbers `v1 dt / dx` per velocity node.
fn courant(grid: &VelocityGrid, dt: f64, dx: f64) -> Vec<f64> {
    grid.nodes().iter().map(|v| v[0] * dt / dx).collect()
}

/// Face values `faces[f * nv + j]` for faces `f = 0..=N` (face `f` sits at
/// `x = f dx`), upwinded per node, without the wall inflow entries.
fn interior_faces(data: &[f64], n: usize, nv: usize, cour: &[f64], order: TransportOrder) -> Vec<f64> {
    let mut faces = vec![0.0; (n + 1) * nv];
    let cell = |i: usize| &data[i * nv..(i + 1) * nv];
    for f in 0..=n {
        let face = &mut faces[f * nv..(f + 1) * nv];
        for (j, y) in face.iter_mut().enumerate() {
            let c = cour[j];
            // upwind cell and the sign of the reconstruction offset
            let (i, side) = if c > 0.0 {
                if f == 0 {
                    continue;
                }
                (f - 1, 0.5 * (1.0 - c))
            } else {
                if f == n {
                    continue;
                }
                (f, -0.5 * (1.0 + c))
            };
            let mut x = cell(i)[j];
            if order == TransportOrder::Second && i > 0 && i + 1 < n {
                x += side * minmod(x - cell(i - 1)[j], cell(i + 1)[j] - x);
            }
            *y = x;
        }
    }
    faces
}

/// Finite-volume transport substep with diffuse walls. Returns the largest
/// `|net mass flux|` through either wall, which is zero up to roundoff.
pub fn transport_step(
    grid: &VelocityGrid,
    walls: &(WallQuadrature, WallQuadrature),
    field: &mut DistributionField,
    dt: f64,
    order: TransportOrder,
) -> Result<f64> {
    let dx = field.cell_width();
    let n = field.n_cells();
    let nv = grid.len();
    let max_v = grid.max_abs_v1();
    if dt * max_v > dx * (1.0 + 1e-12) {
        return Err(BgkError::Config(format!("CFL violated: dt = {dt}, dx = {dx}, max|v1| = {max_v}")));
    }
    let cour = courant(grid, dt, dx);
    let data = field.data();
    let mut faces = interior_faces(data, n, nv, &cour, order);

    // wall inflow from the outgoing face values
    let (left, right) = walls;
    let perturbation = field.representation() == Representation::Perturbation;
    for (wall, f) in [(left, 0usize), (right, n)] {
        let out: Vec<f64> = wall.outgoing().iter().map(|&j| faces[f * nv + j]).collect();
        let inflow = if perturbation { diffuse_reflect_perturbation(wall, &out) } else { diffuse_reflect(wall, &out) };
        for (&j, x) in wall.incoming().iter().zip(inflow) {
            faces[f * nv + j] = x;
        }
    }

    let mut flux_residual = 0.0f64;
    for f in [0, n] {
        let mut acc = CompensatedSum::default();
        for j in 0..nv {
            let face = if perturbation { grid.mu()[j] + grid.sqrt_mu()[j] * faces[f * nv + j] } else { faces[f * nv + j] };
            acc.add(grid.weights()[j] * grid.nodes()[j][0] * face);
        }
        // the mu part cancels exactly by symmetry; only the f part is meaningful in perturbation form
        flux_residual = flux_residual.max(acc.value().abs());
    }

    let data = field.data_mut();
    for i in 0..n {
        for j in 0..nv {
            data[i * nv + j] -= cour[j] * (faces[(i + 1) * nv + j] - faces[i * nv + j]);
        }
    }
    Ok(flux_residual)
}

/// Per-cell collision substep over `dt`. Returns the smallest collision
/// frequency seen.
fn relax_all(params: &CollisionParams, mode: Mode, field: &mut DistributionField, dt: f64) -> Result<f64> {
    let grid = field.grid().clone();
    let nv = grid.len();
    match mode {
        Mode::Linearized => {
            field.data_mut().par_chunks_mut(nv).for_each(|c| relax_linearized_in_place(&grid, c, dt));
            Ok(1.0)
        }
        Mode::Nonlinear => {
            let nus: Vec<Result<f64>> = field
                .data_mut()
                .par_chunks_mut(nv)
                .enumerate()
                .map(|(i, c)| relax_in_place(params, &grid, c, dt).map_err(|e| BgkError::Degenerate(format!("cell {i}: {e}"))))
                .collect();
            let mut min_nu = f64::INFINITY;
            for nu in nus {
                min_nu = min_nu.min(nu?);
            }
            Ok(min_nu)
        }
    }
}

/// Time stepper owning the state.
#[derive(Debug, Clone)]
pub struct Solver {
    config: SolverConfig,
    grid: Arc<VelocityGrid>,
    walls: (WallQuadrature, WallQuadrature),
    state: DistributionField,
    t: f64,
    dt: f64,
    steps_per_output: usize,
    steps: u64,
    initial_mass: f64,
    flux_residual: f64,
    /// The trailing half relaxation of the last Strang step is still owed.
    pending_half: bool,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.build_grid()?;
        let state = config.initial_state(&grid);
        Self::with_state(config, state)
    }

    pub fn with_state(config: SolverConfig, state: DistributionField) -> Result<Self> {
        config.validate()?;
        let grid = state.grid().clone();
        let expected = match config.mode {
            Mode::Nonlinear => Representation::Absolute,
            Mode::Linearized => Representation::Perturbation,
        };
        if state.representation() != expected {
            return Err(BgkError::Precondition(format!("{:?} mode evolves a {:?} field", config.mode, expected)));
        }
        if state.n_cells() != config.n_cells || (state.cell_width() - config.dx()).abs() > 1e-15 * config.length {
            return Err(BgkError::Precondition("state does not match the configured spatial grid".into()));
        }
        let walls = slab_walls(&grid)?;
        let (dt, steps_per_output) = config.time_step();
        let mut s = Solver {
            config,
            grid,
            walls,
            state,
            t: 0.0,
            dt,
            steps_per_output,
            steps: 0,
            initial_mass: 0.0,
            flux_residual: 0.0,
            pending_half: false,
        };
        s.initial_mass = s.absolute_mass();
        Ok(s)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    pub fn walls(&self) -> &(WallQuadrature, WallQuadrature) {
        &self.walls
    }

    /// Current state. Under Strang splitting with pending work the state
    /// is synchronised first, so this takes `&mut self`.
    pub fn state(&mut self) -> Result<&DistributionField> {
        self.sync()?;
        Ok(&self.state)
    }

    pub fn into_state(mut self) -> Result<DistributionField> {
        self.sync()?;
        Ok(self.state)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn absolute_mass(&self) -> f64 {
        match self.state.representation() {
            Representation::Absolute => self.state.total_mass(),
            Representation::Perturbation => {
                let mu_mass = self.grid.sum(self.grid.mu()) * self.config.length;
                mu_mass + self.state.total_perturbation_mass()
            }
        }
    }

    fn sync(&mut self) -> Result<()> {
        if self.pending_half {
            relax_all(&self.config.collision, self.config.mode, &mut self.state, 0.5 * self.dt)?;
            self.pending_half = false;
        }
        Ok(())
    }

    fn transport(&mut self) -> Result<()> {
        let r = transport_step(&self.grid, &self.walls, &mut self.state, self.dt, self.config.order)?;
        self.flux_residual = self.flux_residual.max(r);
        Ok(())
    }

    /// One full step: `T R` (Lie) or `R/2 T R/2` (Strang).
    pub fn step(&mut self) -> Result<()> {
        self.advance(1)
    }

    /// `n` steps. Under Strang splitting adjacent half relaxations are
    /// fused into one full relaxation, which is exact because `M(F)` and
    /// `nu` are invariant under relaxation.
    pub fn advance(&mut self, n: usize) -> Result<()> {
        let (params, mode, dt) = (self.config.collision, self.config.mode, self.dt);
        for _ in 0..n {
            match self.config.splitting {
                Splitting::Lie => {
                    self.transport()?;
                    relax_all(&params, mode, &mut self.state, dt)?;
                }
                Splitting::Strang => {
                    let lead = if self.pending_half { dt } else { 0.5 * dt };
                    relax_all(&params, mode, &mut self.state, lead)?;
                    self.transport()?;
                    self.pending_half = true;
                }
            }
            self.steps += 1;
            self.t = self.steps as f64 * dt;
        }
        self.sync()
    }

    /// Diagnostics of the current (synchronised) state.
    pub fn row(&mut self) -> Result<RunRow> {
        self.sync()?;
        let g = &self.grid;
        let wp = self.config.weight;
        let (pert, min_f) = match self.state.representation() {
            Representation::Absolute => (self.state.to_perturbation()?, self.state.min_value()),
            Representation::Perturbation => {
                let abs = self.state.to_absolute()?;
                (self.state.clone(), abs.min_value())
            }
        };
        let row = RunRow {
            t: self.t,
            linf_w: weighted_linf(g, &wp, &pert),
            l2: l2_norm(g, &pert),
            mass: self.absolute_mass(),
            min_f,
            flux_residual: self.flux_residual,
            perturbation_mass: pert.total_perturbation_mass(),
        };
        self.flux_residual = 0.0;
        Ok(row)
    }

    /// Snapshot of the macroscopic moments for the conservation residuals.
    pub fn snapshot(&mut self) -> Result<MacroSnapshot> {
        self.sync()?;
        MacroSnapshot::from_field(self.t, &self.state)
    }

    fn check(&self, row: &RunRow, record: &mut RunRecord) -> Result<()> {
        let drift = (row.mass - self.initial_mass).abs() / self.initial_mass.abs().max(f64::MIN_POSITIVE);
        if drift > MASS_DRIFT_TOL {
            return Err(BgkError::Scheme(format!("relative mass drift {drift:e} at t = {}", row.t)));
        }
        if row.min_f < POSITIVITY_TOL {
            let msg = format!("min F = {:e} at t = {}", row.min_f, row.t);
            if self.config.order == TransportOrder::First {
                return Err(BgkError::Scheme(msg));
            }
            record.warnings.push(msg);
        }
        Ok(())
    }

    /// Runs to `t_final`, recording a row every output interval.
    pub fn run(&mut self) -> Result<RunRecord> {
        let mut record = RunRecord { dt: self.dt, ..Default::default() };
        let first = self.row()?;
        self.check(&first, &mut record)?;
        record.rows.push(first);
        let outputs = (self.config.t_final / self.config.output_every).round() as usize;
        for _ in 0..outputs {
            self.advance(self.steps_per_output)?;
            let row = self.row()?;
            self.check(&row, &mut record)?;
            record.rows.push(row);
        }
        record.steps = self.steps;
        Ok(record)
    }
}

/// Builds a solver from `config` and runs it.
pub fn run(config: SolverConfig) -> Result<RunRecord> {
    Solver::new(config)?.run()
}

/// Time histories of one iterate: `levels[n]` is the field at `t = n dt`.
type History = Vec<DistributionField>;

fn weighted_perturbation_gap(grid: &VelocityGrid, wp: &WeightParams, a: &[f64], b: &[f64], absolute: bool) -> f64 {
    let nv = grid.len();
    let w: Vec<f64> = grid.nodes().iter().zip(grid.sqrt_mu()).map(|(v, s)| if absolute { wp.value(v) / s } else { wp.value(v) }).collect();
    a.iter().zip(b).enumerate().map(|(k, (x, y))| w[k % nv] * (x - y).abs()).fold(0.0, f64::max)
}

/// Successive differences of an iteration and their summary.
#[derive(Debug, Clone, Default)]
pub struct IterationReport {
    /// `||w (f^{l+1} - f^l)||_inf` over all time levels, `l = 0, 1, ...`.
    pub differences: Vec<f64>,
    /// Final-time field of every iterate, starting with `f^0`.
    pub iterates: Vec<DistributionField>,
    /// Successive-difference ratios decrease below one after the burn-in
    /// and never rise again.
    pub contracting: bool,
    /// Five consecutive ratios `>= 1`.
    pub diverged: bool,
    /// Smallest absolute value seen (positivity sequence only).
    pub min_value: f64,
    /// Smallest collision frequency seen (positivity sequence only).
    pub min_nu: f64,
}

impl IterationReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.differences.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect()
    }

    fn summarise(&mut self, burn_in: usize) {
        let ratios = self.ratios();
        let mut run = 0;
        for &r in &ratios {
            run = if r >= 1.0 { run + 1 } else { 0 };
            if run >= 5 {
                self.diverged = true;
            }
        }
        let tail: Vec<f64> = ratios.iter().skip(burn_in).copied().collect();
        let all_zero = self.differences.iter().all(|&d| d == 0.0);
        self.contracting = all_zero || (!tail.is_empty() && tail.iter().all(|&r| r < 1.0) && !self.diverged);
    }
}

fn levels_of(config: &SolverConfig, t_end: f64) -> (f64, usize) {
    let dt_max = config.dt.unwrap_or_else(|| config.max_stable_dt());
    let n = (t_end / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (t_end / n as f64, n)
}

/// Transport of `field` over `dt` with wall inflow taken from `source`'s
/// outgoing traces, damped by `damping`.
fn transport_with_inflow(
    grid: &VelocityGrid,
    walls: &(WallQuadrature, WallQuadrature),
    field: &mut DistributionField,
    source: &DistributionField,
    dt: f64,
    damping: f64,
) {
    let n = field.n_cells();
    let nv = grid.len();
    let cour = courant(grid, dt, field.cell_width());
    let mut faces = interior_faces(field.data(), n, nv, &cour, TransportOrder::First);
    let src_faces = interior_faces(source.data(), n, nv, &cour, TransportOrder::First);
    let perturbation = field.representation() == Representation::Perturbation;
    for (wall, f) in [(&walls.0, 0usize), (&walls.1, n)] {
        let out: Vec<f64> = wall.outgoing().iter().map(|&j| src_faces[f * nv + j]).collect();
        let inflow = if perturbation { diffuse_reflect_perturbation(wall, &out) } else { diffuse_reflect(wall, &out) };
        for (&j, x) in wall.incoming().iter().zip(inflow) {
            faces[f * nv + j] = damping * x;
        }
    }
    let data = field.data_mut();
    for i in 0..n {
        for j in 0..nv {
            data[i * nv + j] -= cour[j] * (faces[(i + 1) * nv + j] - faces[i * nv + j]);
        }
    }
}

/// Linear approximating sequence on `[0, t_final]`:
/// `f^{l+1}_t + v_1 f^{l+1}_x + f^{l+1} = P f^l + g`, with inflow
/// `(1 - 1/j) P_gamma f^l` and `f^{l+1}(0) = f0`; `f^0(t) = f0`.
pub fn linear_picard_solve(config: &SolverConfig, f0: &DistributionField, g: &DistributionField, iterations: usize) -> Result<IterationReport> {
    config.validate()?;
    if f0.representation() != Representation::Perturbation || g.representation() != Representation::Perturbation {
        return Err(BgkError::Precondition("linear iteration works on perturbation fields".into()));
    }
    let grid = f0.grid().clone();
    for (i, c) in g.cells().enumerate() {
        let coeff = grid.basis_coefficients(c);
        let scale = 1.0 + grid.inner(c, c).sqrt();
        if coeff.iter().any(|x| x.abs() > 1e-10 * scale) {
            return Err(BgkError::Precondition(format!("source has a macroscopic part in cell {i}")));
        }
    }
    let walls = slab_walls(&grid)?;
    let (dt, levels) = levels_of(config, config.t_final);
    let damping = 1.0 - 1.0 / config.damping_j;
    let wp = config.weight;
    let nv = grid.len();
    let keep = (-dt).exp();
    let gain = -(-dt).exp_m1();

    let mut prev: History = vec![f0.clone(); levels + 1];
    let mut report = IterationReport { iterates: vec![f0.clone()], min_value: f64::NAN, min_nu: f64::NAN, ..Default::default() };
    for _ in 0..iterations {
        let mut next: History = Vec::with_capacity(levels + 1);
        next.push(f0.clone());
        for n in 0..levels {
            let mut cur = next[n].clone();
            transport_with_inflow(&grid, &walls, &mut cur, &prev[n], dt, damping);
            // exact damping towards the frozen source P f^l + g over the step
            let src = &prev[n + 1];
            for (i, c) in cur.data_mut().chunks_mut(nv).enumerate() {
                let (pf, _) = project_p(&grid, src.cell(i));
                for ((x, p), s) in c.iter_mut().zip(&pf).zip(g.cell(i)) {
                    *x = keep * *x + gain * (p + s);
                }
            }
            next.push(cur);
        }
        let gap = next.iter().zip(&prev).map(|(a, b)| weighted_perturbation_gap(&grid, &wp, a.data(), b.data(), false)).fold(0.0, f64::max);
        report.differences.push(gap);
        report.iterates.push(next[levels].clone());
        prev = next;
    }
    report.summarise(2);
    Ok(report)
}

/// Positivity sequence on `[0, t_star]`:
/// `F^{l+1}_t + v_1 F^{l+1}_x = nu^l (M(F^l) - F^{l+1})`, inflow
/// `c_mu mu int F^l (n.u) du`, `F^{l+1}(0) = F0`; `F^0(t) = F0`.
///
/// Every iterate is checked for `F >= -1e-13`, and the collision frequency
/// of every iterate for `nu > 1/2`.
pub fn positivity_iteration(config: &SolverConfig, f0: &DistributionField, t_star: f64, iterations: usize) -> Result<IterationReport> {
    config.validate()?;
    if f0.representation() != Representation::Absolute {
        return Err(BgkError::Precondition("positivity iteration works on absolute fields".into()));
    }
    if f0.min_value() < 0.0 {
        return Err(BgkError::Precondition("initial field must be nonnegative".into()));
    }
    let grid = f0.grid().clone();
    let walls = slab_walls(&grid)?;
    let (dt, levels) = levels_of(config, t_star);
    let wp = config.weight;
    let nv = grid.len();
    let params = config.collision;

    let mut prev: History = vec![f0.clone(); levels + 1];
    let mut report = IterationReport { iterates: vec![f0.clone()], min_value: f0.min_value(), min_nu: f64::INFINITY, ..Default::default() };
    for l in 0..iterations {
        // per-level collision data of the previous iterate
        let mut maxw: Vec<Vec<f64>> = Vec::with_capacity(levels + 1);
        let mut nus: Vec<Vec<f64>> = Vec::with_capacity(levels + 1);
        for level in &prev {
            let mut mlev = Vec::with_capacity(level.data().len());
            let mut nlev = Vec::with_capacity(level.n_cells());
            for (i, c) in level.cells().enumerate() {
                let m = grid.moments(c).map_err(|e| BgkError::Degenerate(format!("iterate {l}, cell {i}: {e}")))?;
                let nu = crate::collision::collision_frequency(&params, &m);
                if !(nu > 0.5) {
                    return Err(BgkError::Scheme(format!("collision frequency {nu} <= 1/2 in iterate {l}, cell {i}")));
                }
                report.min_nu = report.min_nu.min(nu);
                nlev.push(nu);
                mlev.extend(discrete_maxwellian(&grid, c)?);
            }
            maxw.push(mlev);
            nus.push(nlev);
        }

        let mut next: History = Vec::with_capacity(levels + 1);
        next.push(f0.clone());
        for n in 0..levels {
            let mut cur = next[n].clone();
            transport_with_inflow(&grid, &walls, &mut cur, &prev[n], dt, 1.0);
            for (i, c) in cur.data_mut().chunks_mut(nv).enumerate() {
                let nu = nus[n + 1][i];
                let keep = (-nu * dt).exp();
                let gain = -(-nu * dt).exp_m1();
                for (x, m) in c.iter_mut().zip(&maxw[n + 1][i * nv..(i + 1) * nv]) {
                    *x = keep * *x + gain * m;
                }
            }
            let min = cur.min_value();
            report.min_value = report.min_value.min(min);
            if min < POSITIVITY_TOL {
                return Err(BgkError::Scheme(format!("iterate {} negative ({min:e}) at level {}", l + 1, n + 1)));
            }
            next.push(cur);
        }
        let gap = next.iter().zip(&prev).map(|(a, b)| weighted_perturbation_gap(&grid, &wp, a.data(), b.data(), true)).fold(0.0, f64::max);
        report.differences.push(gap);
        report.iterates.push(next[levels].clone());
        prev = next;
    }
    report.summarise(1);
    Ok(report)
}
