//! Flat `key = value` configuration with `[section]` headers.
//!
//! Keys before the first header belong to `[experiment]`. `#` starts a
//! comment. Lists are comma separated. Every key has a default except
//! `experiment.kind`.
//!
//! ```text
//! kind = decay-run
//! [solver]
//! delta = 1e-2
//! ```
//!
//! Environment variables `BGK_<SECTION>_<KEY>` (upper case, e.g.
//! `BGK_SOLVER_DELTA`, `BGK_EXPERIMENT_SEED`) override file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::collision::CollisionParams;
use crate::geometry::Domain;
use crate::solver::{InitialCondition, Mode, SolverConfig, Splitting, TransportOrder};
use crate::velocity::WeightParams;
use crate::{BgkError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    DecayRun,
    OperatorProbe,
    StabilityProbe,
    CycleStudy,
    CoercivityCheck,
    ConservationStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::DecayRun,
        ExperimentKind::OperatorProbe,
        ExperimentKind::StabilityProbe,
        ExperimentKind::CycleStudy,
        ExperimentKind::CoercivityCheck,
        ExperimentKind::ConservationStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DecayRun => "decay-run",
            ExperimentKind::OperatorProbe => "operator-probe",
            ExperimentKind::StabilityProbe => "stability-probe",
            ExperimentKind::CycleStudy => "cycle-study",
            ExperimentKind::CoercivityCheck => "coercivity-check",
            ExperimentKind::ConservationStudy => "conservation-study",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::DecayRun => "nonlinear slab run, norm time series and fitted decay rates",
            ExperimentKind::OperatorProbe => "Taylor expansion of the nonlinear remainder against direct evaluation",
            ExperimentKind::StabilityProbe => "smallness scalings of the remainder parts, macroscopic control and stability ratios",
            ExperimentKind::CycleStudy => "Monte Carlo survival of backward stochastic cycles",
            ExperimentKind::CoercivityCheck => "wall flux and boundary coercivity identity on random traces",
            ExperimentKind::ConservationStudy => "macroscopic conservation-law residuals under refinement",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub t_lo: f64,
    pub t_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    pub deltas: Vec<f64>,
    pub theta_nodes: usize,
    /// Random probe fields per amplitude.
    pub samples: usize,
    /// Largest admissible expansion gap relative to `||w f||_inf`.
    pub gap_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleParams {
    pub domain: Domain,
    pub horizons: Vec<f64>,
    /// `k = ceil(k_coeff T0^{5/4})`
    pub k_coeff: f64,
    pub samples: usize,
    pub start_points: usize,
    pub start_speeds: Vec<f64>,
    /// Samples per start in the worst-start estimate.
    pub start_samples: usize,
    pub ks_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationParams {
    pub t_snapshot: f64,
    /// Refinement levels; level `r` uses `N_x 2^r` cells.
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityParams {
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub solver: SolverConfig,
    pub fit: FitParams,
    pub probe: ProbeParams,
    pub cycles: CycleParams,
    pub conservation: ConservationParams,
    pub coercivity: CoercivityParams,
}

impl ExperimentSpec {
    pub fn with_kind(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            seed: 0,
            out_dir: None,
            solver: SolverConfig::default(),
            fit: FitParams { t_lo: 2.0, t_hi: 10.0 },
            probe: ProbeParams { deltas: vec![1e-2, 1e-3, 1e-4], theta_nodes: 32, samples: 4, gap_tol: 1e-6 },
            cycles: CycleParams {
                domain: Domain::Ball { radius: 1.0 },
                horizons: vec![10.0, 20.0, 40.0],
                k_coeff: 0.5,
                samples: 100_000,
                start_points: 3,
                start_speeds: vec![0.5, 1.0, 2.0],
                start_samples: 2000,
                ks_samples: 100_000,
            },
            conservation: ConservationParams { t_snapshot: 0.1, levels: 2 },
            coercivity: CoercivityParams { trials: 100 },
        }
    }

    /// Checks cross-field rules that the parser cannot see line by line.
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.fit.t_lo < self.fit.t_hi) {
            return Err(BgkError::Config("fit window needs t_lo < t_hi".into()));
        }
        if self.probe.deltas.is_empty() || self.probe.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(BgkError::Config("probe deltas must be positive".into()));
        }
        if self.cycles.horizons.iter().any(|t| !(*t > 0.0)) || self.cycles.samples < crate::cycles::MIN_SAMPLES {
            return Err(BgkError::Config("cycle horizons must be positive and samples >= 1000".into()));
        }
        if self.conservation.levels < 2 {
            return Err(BgkError::Config("conservation study needs >= 2 refinement levels".into()));
        }
        Ok(())
    }

    /// Resolved configuration in the input grammar; parses back to `self`.
    pub fn to_config_text(&self) -> String {
        let s = &self.solver;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let (domain, size) = match self.cycles.domain {
            Domain::Slab { length } => ("slab", length),
            Domain::Disk { radius } => ("disk", radius),
            Domain::Ball { radius } => ("ball", radius),
        };
        let mut t = String::new();
        let _ = writeln!(t, "kind = {}", self.kind.name());
        let _ = writeln!(t, "seed = {}", self.seed);
        let _ = writeln!(t, "\n[grid]\nn_v = {}\nv_max = {:?}", s.n_v, s.v_max);
        let _ = writeln!(t, "\n[weight]\nbeta = {:?}\ntheta = {:?}", s.weight.beta, s.weight.theta);
        let _ = writeln!(t, "\n[collision]\neta = {:?}\nomega = {:?}", s.collision.eta, s.collision.omega);
        let _ = writeln!(t, "\n[solver]");
        let _ = writeln!(t, "n_x = {}\nlength = {:?}", s.n_cells, s.length);
        match s.dt {
            Some(dt) => {
                let _ = writeln!(t, "dt = {dt:?}");
            }
            None => {
                let _ = writeln!(t, "dt = auto");
            }
        }
        let _ = writeln!(t, "cfl = {:?}\nt_final = {:?}\noutput_every = {:?}", s.cfl, s.t_final, s.output_every);
        let _ = writeln!(t, "delta = {:?}\ninitial = {}", s.delta, s.initial.name());
        let _ = writeln!(t, "order = {}", if s.order == TransportOrder::First { 1 } else { 2 });
        let _ = writeln!(t, "splitting = {}", if s.splitting == Splitting::Strang { "strang" } else { "lie" });
        let _ = writeln!(t, "mode = {}", if s.mode == Mode::Nonlinear { "nonlinear" } else { "linearized" });
        let _ = writeln!(t, "damping_j = {:?}", s.damping_j);
        let _ = writeln!(t, "\n[fit]\nt_lo = {:?}\nt_hi = {:?}", self.fit.t_lo, self.fit.t_hi);
        let p = &self.probe;
        let _ = writeln!(t, "\n[probe]\ndeltas = {}\ntheta_nodes = {}\nsamples = {}\ngap_tol = {:?}", list(&p.deltas), p.theta_nodes, p.samples, p.gap_tol);
        let c = &self.cycles;
        let _ = writeln!(t, "\n[cycles]\ndomain = {domain}\nsize = {size:?}\nhorizons = {}\nk_coeff = {:?}", list(&c.horizons), c.k_coeff);
        let _ = writeln!(t, "samples = {}\nstart_points = {}\nstart_speeds = {}", c.samples, c.start_points, list(&c.start_speeds));
        let _ = writeln!(t, "start_samples = {}\nks_samples = {}", c.start_samples, c.ks_samples);
        let _ = writeln!(t, "\n[conservation]\nt_snapshot = {:?}\nlevels = {}", self.conservation.t_snapshot, self.conservation.levels);
        let _ = writeln!(t, "\n[coercivity]\ntrials = {}", self.coercivity.trials);
        t
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "seed"]),
    ("grid", &["n_v", "v_max"]),
    ("weight", &["beta", "theta"]),
    ("collision", &["eta", "omega", "preset"]),
    ("solver", &["n_x", "length", "dt", "cfl", "t_final", "output_every", "delta", "initial", "order", "splitting", "mode", "damping_j"]),
    ("fit", &["t_lo", "t_hi"]),
    ("probe", &["deltas", "theta_nodes", "samples", "gap_tol"]),
    ("cycles", &["domain", "size", "horizons", "k_coeff", "samples", "start_points", "start_speeds", "start_samples", "ks_samples"]),
    ("conservation", &["t_snapshot", "levels"]),
    ("coercivity", &["trials"]),
];

/// `(section, key) -> (value, line)`; line 0 marks an environment value.
type Raw = BTreeMap<(String, String), (String, usize)>;

fn known(section: &str, key: &str) -> bool {
    KEYS.iter().any(|(s, ks)| *s == section && ks.contains(&key))
}

fn parse_raw(text: &str) -> Result<Raw> {
    let mut raw = Raw::new();
    let mut section = "experiment".to_string();
    for (idx, line) in text.lines().enumerate() {
        let n = idx + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| BgkError::Parse { line: n, message: "unterminated section header".into() })?.trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(BgkError::Parse { line: n, message: format!("unknown section [{name}]") });
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| BgkError::Parse { line: n, message: format!("expected key = value, got '{body}'") })?;
        let (k, v) = (k.trim(), v.trim());
        if !known(&section, k) {
            return Err(BgkError::Parse { line: n, message: format!("unknown key '{k}' in [{section}]") });
        }
        if raw.insert((section.clone(), k.to_string()), (v.to_string(), n)).is_some() {
            return Err(BgkError::Parse { line: n, message: format!("duplicate key '{k}' in [{section}]") });
        }
    }
    Ok(raw)
}

fn apply_env<I: IntoIterator<Item = (String, String)>>(raw: &mut Raw, vars: I) -> Result<()> {
    for (name, value) in vars {
        let Some(rest) = name.strip_prefix("BGK_") else { continue };
        let rest = rest.to_ascii_lowercase();
        let hit = KEYS.iter().find_map(|(s, ks)| {
            let k = rest.strip_prefix(s)?.strip_prefix('_')?;
            ks.contains(&k).then(|| (s.to_string(), k.to_string()))
        });
        match hit {
            Some(key) => {
                raw.insert(key, (value, 0));
            }
            None => return Err(BgkError::Parse { line: 0, message: format!("environment variable {name} does not name a config key") }),
        }
    }
    Ok(())
}

struct Reader {
    raw: Raw,
}

impl Reader {
    fn get(&self, s: &str, k: &str) -> Option<&(String, usize)> {
        self.raw.get(&(s.to_string(), k.to_string()))
    }

    fn err(&self, s: &str, k: &str, msg: impl std::fmt::Display) -> BgkError {
        let line = self.get(s, k).map_or(0, |v| v.1);
        BgkError::Parse { line, message: format!("{s}.{k}: {msg}") }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, k: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(s, k) {
            None => Ok(default),
            Some((v, _)) => v.parse().map_err(|e| self.err(s, k, format!("cannot parse '{v}': {e}"))),
        }
    }

    fn list(&self, s: &str, k: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        match self.get(s, k) {
            None => Ok(default),
            Some((v, _)) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| self.err(s, k, format!("cannot parse '{x}': {e}"))))
                .collect(),
        }
    }

    fn text(&self, s: &str, k: &str) -> Option<&str> {
        self.get(s, k).map(|v| v.0.as_str())
    }
}

/// Parses a config file and applies no environment overrides.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    parse_config_with_env(text, std::iter::empty())
}

/// Parses `text`, applies `BGK_*` overrides from `vars`, fills defaults
/// and validates.
pub fn parse_config_with_env<I: IntoIterator<Item = (String, String)>>(text: &str, vars: I) -> Result<ExperimentSpec> {
    let mut raw = parse_raw(text)?;
    apply_env(&mut raw, vars)?;
    let r = Reader { raw };

    let kind_text = r.text("experiment", "kind").ok_or(BgkError::Parse { line: 0, message: "missing required key experiment.kind".into() })?;
    let kind = ExperimentKind::from_name(kind_text).ok_or_else(|| r.err("experiment", "kind", format!("unknown experiment '{kind_text}'")))?;
    let mut spec = ExperimentSpec::with_kind(kind);
    spec.seed = r.parse("experiment", "seed", 0u64)?;

    let s = &mut spec.solver;
    s.n_v = r.parse("grid", "n_v", s.n_v)?;
    s.v_max = r.parse("grid", "v_max", s.v_max)?;
    let beta = r.parse("weight", "beta", s.weight.beta)?;
    let theta = r.parse("weight", "theta", s.weight.theta)?;
    s.weight = WeightParams::new(beta, theta).map_err(|e| {
        let key = if (0.0..0.25).contains(&theta) { "beta" } else { "theta" };
        r.err("weight", key, e)
    })?;
    let base = match r.text("collision", "preset") {
        Some(p) => CollisionParams::preset(p).map_err(|e| r.err("collision", "preset", e))?,
        None => CollisionParams::default(),
    };
    let eta = r.parse("collision", "eta", base.eta)?;
    let omega = r.parse("collision", "omega", base.omega)?;
    s.collision = CollisionParams::new(eta, omega).map_err(|e| r.err("collision", "eta", e))?;
    s.n_cells = r.parse("solver", "n_x", s.n_cells)?;
    s.length = r.parse("solver", "length", s.length)?;
    s.dt = match r.text("solver", "dt") {
        None | Some("auto") => None,
        Some(_) => Some(r.parse("solver", "dt", 0.0)?),
    };
    s.cfl = r.parse("solver", "cfl", s.cfl)?;
    s.t_final = r.parse("solver", "t_final", s.t_final)?;
    s.output_every = r.parse("solver", "output_every", s.output_every)?;
    s.delta = r.parse("solver", "delta", s.delta)?;
    if let Some(name) = r.text("solver", "initial") {
        s.initial = InitialCondition::from_name(name).map_err(|e| r.err("solver", "initial", e))?;
    }
    s.order = match r.parse("solver", "order", 1u8)? {
        1 => TransportOrder::First,
        2 => TransportOrder::Second,
        o => return Err(r.err("solver", "order", format!("transport order {o} must be 1 or 2"))),
    };
    s.splitting = match r.text("solver", "splitting").unwrap_or("strang") {
        "strang" => Splitting::Strang,
        "lie" => Splitting::Lie,
        o => return Err(r.err("solver", "splitting", format!("unknown splitting '{o}'"))),
    };
    s.mode = match r.text("solver", "mode").unwrap_or("nonlinear") {
        "nonlinear" => Mode::Nonlinear,
        "linearized" => Mode::Linearized,
        o => return Err(r.err("solver", "mode", format!("unknown mode '{o}'"))),
    };
    s.damping_j = r.parse("solver", "damping_j", s.damping_j)?;
    if let Err(e) = s.validate() {
        let key = if matches!(&e, BgkError::Config(m) if m.contains("CFL")) { "dt" } else { "delta" };
        let line = r.get("solver", key).map_or(0, |v| v.1);
        return Err(BgkError::Parse { line, message: e.to_string() });
    }

    spec.fit.t_lo = r.parse("fit", "t_lo", spec.fit.t_lo)?;
    spec.fit.t_hi = r.parse("fit", "t_hi", spec.fit.t_hi)?;

    let p = &mut spec.probe;
    p.deltas = r.list("probe", "deltas", p.deltas.clone())?;
    p.theta_nodes = r.parse("probe", "theta_nodes", p.theta_nodes)?;
    p.samples = r.parse("probe", "samples", p.samples)?;
    p.gap_tol = r.parse("probe", "gap_tol", p.gap_tol)?;

    let c = &mut spec.cycles;
    let size = r.parse("cycles", "size", 1.0)?;
    c.domain = match r.text("cycles", "domain").unwrap_or("ball") {
        "slab" => Domain::slab(size),
        "disk" => Domain::disk(size),
        "ball" => Domain::ball(size),
        o => return Err(r.err("cycles", "domain", format!("unknown domain '{o}'"))),
    }
    .map_err(|e| r.err("cycles", "size", e))?;
    c.horizons = r.list("cycles", "horizons", c.horizons.clone())?;
    c.k_coeff = r.parse("cycles", "k_coeff", c.k_coeff)?;
    c.samples = r.parse("cycles", "samples", c.samples)?;
    c.start_points = r.parse("cycles", "start_points", c.start_points)?;
    c.start_speeds = r.list("cycles", "start_speeds", c.start_speeds.clone())?;
    c.start_samples = r.parse("cycles", "start_samples", c.start_samples)?;
    c.ks_samples = r.parse("cycles", "ks_samples", c.ks_samples)?;

    spec.conservation.t_snapshot = r.parse("conservation", "t_snapshot", spec.conservation.t_snapshot)?;
    spec.conservation.levels = r.parse("conservation", "levels", spec.conservation.levels)?;
    spec.coercivity.trials = r.parse("coercivity", "trials", spec.coercivity.trials)?;

    spec.validate().map_err(|e| BgkError::Parse { line: 0, message: e.to_string() })?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_decay_config_fills_defaults() {
        let s = parse_config("kind = decay-run\n[solver]\ndelta = 1e-2\n").unwrap();
        assert_eq!(s.kind, ExperimentKind::DecayRun);
        assert_eq!(s.solver.n_cells, 64);
        assert_eq!(s.solver.n_v, 24);
        assert_eq!(s.solver.v_max, 7.0);
        assert_eq!(s.solver.weight, WeightParams { beta: 0.0, theta: 0.1 });
        assert_eq!(s.solver.collision, CollisionParams { eta: 0.0, omega: 0.0 });
        assert_eq!(s.solver.delta, 1e-2);
    }

    #[test]
    fn theta_above_quarter_rejected_with_line() {
        let e = parse_config("kind = decay-run\n[weight]\ntheta = 0.3\n").unwrap_err();
        match e {
            BgkError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("1/4"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let e = parse_config("kind = decay-run\n[solver]\ndt = 0.5\n").unwrap_err();
        assert!(matches!(e, BgkError::Parse { line: 3, ref message } if message.contains("CFL")), "{e:?}");
    }

    #[test]
    fn unknown_and_missing_keys() {
        assert!(matches!(parse_config("kind = decay-run\nfoo = 1\n"), Err(BgkError::Parse { line: 2, .. })));
        assert!(matches!(parse_config("kind = decay-run\n[nope]\n"), Err(BgkError::Parse { line: 2, .. })));
        assert!(matches!(parse_config("[solver]\ndelta = 1\n"), Err(BgkError::Parse { message, .. }) if message.contains("kind")));
        assert!(matches!(parse_config("kind = decay-run\nkind = decay-run\n"), Err(BgkError::Parse { line: 2, .. })));
        assert!(parse_config("kind = bogus\n").is_err());
    }

    #[test]
    fn env_overrides_file() {
        let vars = vec![("BGK_SOLVER_DELTA".to_string(), "0.05".to_string()), ("BGK_SOLVER_T_FINAL".into(), "3".into()), ("PATH".into(), "/bin".into())];
        let s = parse_config_with_env("kind = decay-run\n[solver]\ndelta = 1e-2\n", vars).unwrap();
        assert_eq!(s.solver.delta, 0.05);
        assert_eq!(s.solver.t_final, 3.0);
        let bad = vec![("BGK_SOLVER_NOPE".to_string(), "1".to_string())];
        assert!(parse_config_with_env("kind = decay-run\n", bad).is_err());
    }

    #[test]
    fn manifest_round_trips() {
        let text = "kind = cycle-study\nseed = 9\n[cycles]\ndomain = slab\nsize = 2\nhorizons = 5, 7\n[collision]\npreset = density\n[solver]\ndt = 1e-3\norder = 2\nmode = linearized\n";
        let s = parse_config(text).unwrap();
        assert_eq!(s.solver.collision.eta, 1.0);
        let back = parse_config(&s.to_config_text()).unwrap();
        assert_eq!(s, back);
        for kind in ExperimentKind::ALL {
            let d = ExperimentSpec::with_kind(kind);
            assert_eq!(parse_config(&d.to_config_text()).unwrap(), d);
        }
    }
}
