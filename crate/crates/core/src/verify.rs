//! Built-in verification suites: each measures one group of discrete
//! identities or properties and compares it with a pinned tolerance.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::composite::StructureModel;
use crate::config::{Config, InitialData};
use crate::diagnostics::subgraph_monitor;
use crate::error::{Error, Result};
use crate::fluid::{assembly, FluidGrid, FluidParams, FluidSolver, WallCondition};
use crate::geometry::{AleSlabMap, BoundaryField, CylinderRef};
use crate::net::{NetModel, NetTopology};
use crate::shell::{coercivity, l2_projection, ShellModel, ShellParams};
use crate::splitting::{energy_report, run, EnergyReport, Problem, RunResult};
use crate::weak::{WeakResidual, WeakRow};

/// The named suites of `meshshell verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Geometry,
    Shell,
    Net,
    StructureEnergy,
    FluidPoiseuille,
    CoupledEnergy,
    Refinement,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Geometry,
        Suite::Shell,
        Suite::Net,
        Suite::StructureEnergy,
        Suite::FluidPoiseuille,
        Suite::CoupledEnergy,
        Suite::Refinement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Geometry => "geometry",
            Suite::Shell => "shell",
            Suite::Net => "net",
            Suite::StructureEnergy => "structure-energy",
            Suite::FluidPoiseuille => "fluid-poiseuille",
            Suite::CoupledEnergy => "coupled-energy",
            Suite::Refinement => "refinement",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

/// One pass/fail comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `<= 1e-12`.
    pub condition: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: format!("<= {limit:e}"),
            passed: value <= limit,
        }
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: format!("> {limit:e}"),
            passed: value > limit,
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }

    pub fn at_least_zero(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: ">= 0".into(),
            passed: value >= 0.0,
        }
    }

    /// A boolean property; `value` is 1 when it holds.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            condition: "holds".into(),
            passed: ok,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {:.6e} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.condition
        )
    }
}

/// Checks of one suite with its wall-clock time.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

// ---------------------------------------------------------------------------
// Geometry

/// Largest deviations found by [`ale_identities`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AleIdentityReport {
    pub pairs: usize,
    /// `max |S − (1 − Δη)²| / S` over grid points and random points.
    pub max_jacobian_identity: f64,
    /// `max |A⁻¹(A(p)) − p| / R` over random points.
    pub max_roundtrip: f64,
}

fn random_boundary(cyl: CylinderRef, rng: &mut ChaCha8Rng) -> BoundaryField {
    let mut f = BoundaryField::zeros(cyl);
    for i in 1..cyl.n_z {
        for k in 0..cyl.n_theta {
            f.values[i * cyl.n_theta + k] = rng.gen_range(-0.4..0.4) * cyl.r;
        }
    }
    f
}

/// Checks the Jacobian identity `S = (1 − Δη)²` and `A⁻¹ ∘ A = id` of the
/// slab map on `pairs` random boundary pairs over an `n × n` interface grid.
pub fn ale_identities(pairs: usize, n: usize, seed: u64) -> Result<AleIdentityReport> {
    let cyl = CylinderRef::new(0.5, 3.0, n, 4, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = AleIdentityReport {
        pairs,
        max_jacobian_identity: 0.0,
        max_roundtrip: 0.0,
    };
    for _ in 0..pairs {
        let source = random_boundary(cyl, &mut rng);
        let target = random_boundary(cyl, &mut rng);
        let m = AleSlabMap::new(&source, &target, 0.01)?;
        let inv = m.inverse();
        for i in 0..cyl.n_z_nodes() {
            for k in 0..cyl.n_theta {
                let s = m.jacobian_node(i, k);
                let d = 1.0 - m.delta_eta_node(i, k);
                rep.max_jacobian_identity = rep.max_jacobian_identity.max((s - d * d).abs() / s);
            }
        }
        for _ in 0..cyl.n_z_nodes() * cyl.n_theta {
            let z = rng.gen_range(0.0..=cyl.l);
            let t = rng.gen_range(0.0..TAU);
            let s = m.jacobian(z, t);
            let d = 1.0 - m.delta_eta(z, t);
            rep.max_jacobian_identity = rep.max_jacobian_identity.max((s - d * d).abs() / s);
            let r = rng.gen_range(0.0..=1.0) * source.radius(z, t);
            let back = inv.map(m.map([z, r, t])?)?;
            let err = (back[0] - z).abs().max((back[1] - r).abs()).max((back[2] - t).abs());
            rep.max_roundtrip = rep.max_roundtrip.max(err / cyl.r);
        }
    }
    Ok(rep)
}

/// Outcome of presenting a folded wall displacement to the simulator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldingReport {
    /// Minimum injectivity determinant of the displacement.
    pub injectivity: f64,
    /// Whether state construction failed with a subgraph violation.
    pub tripped: bool,
    pub message: String,
}

/// Builds a shell displacement whose angular component folds the wall
/// (`η_θ = 0.5 sin²(πz/L) sin 4θ`, so `1 + ∂_θ η_θ` turns negative) and
/// hands it to the simulator as initial data.
pub fn folding_check() -> Result<FoldingReport> {
    let cyl = CylinderRef::new(0.5, 3.0, 8, 4, 16)?;
    let params = ShellParams {
        h: 0.05,
        lambda: 1e5,
        mu: 1e5,
        rho_k: 1.1,
        eps_k: ShellParams::default_eps(1e5, 0.05),
        r: cyl.r,
        l: cyl.l,
    };
    let shell = ShellModel::new(params, 8, 16)?;
    let eta = l2_projection(&shell.basis, cyl.r, |z, t| {
        [0.0, 0.0, 0.5 * (PI * z / cyl.l).sin().powi(2) * (4.0 * t).sin()]
    })?;
    let injectivity = subgraph_monitor(&shell.view(&eta), &cyl).injectivity;
    let problem = Problem {
        cyl,
        structure: StructureModel::new(shell, None),
        fluid: None,
        lipschitz_cap: 10.0,
    };
    let (tripped, message) = match problem.initial_state(Some(eta), None) {
        Err(e @ Error::SubgraphViolation(_)) => (true, e.to_string()),
        Err(e) => (false, e.to_string()),
        Ok(_) => (false, "state accepted".into()),
    };
    Ok(FoldingReport {
        injectivity,
        tripped,
        message,
    })
}

// ---------------------------------------------------------------------------
// Shell and net

/// Parameter sets for the coercivity check: thin and stiff, thick and soft,
/// and a strongly compressible-looking Lamé pair on a slender tube.
pub fn coercivity_parameter_sets() -> [ShellParams; 3] {
    let p = |h: f64, lambda: f64, mu: f64, r: f64, l: f64| ShellParams {
        h,
        lambda,
        mu,
        rho_k: 1.1,
        eps_k: ShellParams::default_eps(mu, h),
        r,
        l,
    };
    [p(0.05, 1e5, 1e5, 0.5, 3.0), p(0.2, 10.0, 3.0, 1.0, 2.0), p(0.01, 1e3, 1.0, 0.3, 5.0)]
}

/// Smallest eigenvalue of the clamped shell stiffness for each parameter set.
pub fn shell_coercivity(n_z: usize, n_theta: usize) -> Result<Vec<f64>> {
    coercivity_parameter_sets()
        .into_iter()
        .map(|p| Ok(coercivity(&ShellModel::new(p, n_z, n_theta)?)?.min_eigenvalue))
        .collect()
}

/// `a_S(w, w)` and the largest constraint residual of a rigid translation
/// (`d` constant, `w = 0`) of a net.
pub fn net_rigid_translation(net: &NetModel, shift: [f64; 3]) -> (f64, f64) {
    let d: Vec<f64> = (0..net.n_nodes()).flat_map(|_| shift).collect();
    let w = vec![0.0; net.n_dof()];
    let a = net.elastic_energy(&w);
    let r = net
        .constraint_residual(&d, &w)
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    (a, r)
}

/// The demo net on its cylinder.
pub fn demo_net() -> Result<NetModel> {
    let cfg = Config::demo();
    let (top, rho_s): &(NetTopology, f64) = cfg
        .net
        .as_ref()
        .ok_or_else(|| Error::Config("demo configuration has no net".into()))?;
    NetModel::new(top, cfg.cyl.r, cfg.cyl.l, *rho_s)
}

// ---------------------------------------------------------------------------
// Fluid

/// Steady Poiseuille flow on a rigid pipe (`R = 1`, `L = 2`, `μ = 0.1`,
/// `ΔP = 1`): max-norm nodal error of `u_z` for each radial resolution.
pub fn poiseuille_errors(n_rhos: &[usize]) -> Result<Vec<f64>> {
    let (r, l, mu, dp) = (1.0, 2.0, 0.1, 1.0);
    n_rhos
        .iter()
        .map(|&n_rho| {
            let cyl = CylinderRef::new(r, l, 2, n_rho, 16)?;
            let grid = FluidGrid::new(BoundaryField::zeros(cyl));
            let mut solver = FluidSolver::new(FluidParams {
                mu,
                convection: false,
                ..Default::default()
            })?;
            let st = solver.steady_stokes(&grid, WallCondition::Rigid, dp, 0.0)?;
            let mut err: f64 = 0.0;
            for m in 0..grid.n_nodes() {
                let (_, rr, _) = grid.cylindrical(m);
                let exact = dp * (r * r - rr * rr) / (4.0 * mu * l);
                err = err.max((st.u[3 * m + 2] - exact).abs());
            }
            Ok(err)
        })
        .collect()
}

/// Observed orders `log₂(e_k / e_{k+1})` of successive halvings.
pub fn halving_rates(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// `max |uᵀ C u| / ‖u‖²` of the assembled convection block over `trials`
/// random advecting fields and test vectors on a deformed grid.
pub fn convection_skew(trials: usize, seed: u64) -> Result<f64> {
    let cyl = CylinderRef::new(0.5, 3.0, 8, 4, 8)?;
    let grid = FluidGrid::new(BoundaryField::from_fn(cyl, |z, t| {
        0.1 * (PI * z / cyl.l).sin().powi(2) * (1.0 + 0.5 * t.cos())
    }));
    let cells = assembly::cell_data(&grid);
    let n = grid.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let beta: Vec<f64> = (0..3 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = assembly::convection_matrix(&cells, n, &beta, 1.0);
        let u: Vec<f64> = (0..3 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max(c.quad(&u).abs() / crate::linalg::dot(&u, &u));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Runs

/// Summary of a full run with the monitors evaluated along the trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    /// Wall-clock time; not serialized so that summaries are reproducible.
    #[serde(skip)]
    pub seconds: f64,
    pub energy: EnergyReport,
    /// Largest `|structure residual|` relative to `max(E⁰, max E)` (the
    /// initial energy unless the run starts from rest).
    pub max_structure_residual_rel: f64,
    /// Smallest logged numerical-dissipation term.
    pub min_numdiss: f64,
    pub min_subgraph_margin: f64,
    pub max_lipschitz: f64,
    pub lipschitz_cap: f64,
    pub error: Option<String>,
}

impl RunSummary {
    pub fn monitors_hold(&self) -> bool {
        self.error.is_none() && self.min_subgraph_margin > 0.0 && self.max_lipschitz <= self.lipschitz_cap
    }
}

/// Condenses a run result.
pub fn summarize(problem: &Problem, cfg: &Config, res: &RunResult, seconds: f64) -> RunSummary {
    let dt = cfg.dt();
    let energy = energy_report(&res.ledger, res.initial_energy, res.pressure_constant, dt);
    let e0 = res.initial_energy.max(energy.max_energy).max(1e-300);
    RunSummary {
        steps: res.ledger.len(),
        dt,
        seconds,
        energy,
        max_structure_residual_rel: energy.max_structure_residual / e0,
        min_numdiss: res
            .ledger
            .iter()
            .flat_map(|e| [e.numdiss_fluid, e.numdiss_shell, e.numdiss_net_k, e.numdiss_net_z, e.numdiss_coupling, e.numdiss_stab])
            .fold(f64::INFINITY, f64::min),
        min_subgraph_margin: res.ledger.iter().map(|e| e.subgraph_margin).fold(res.initial_margin, f64::min),
        max_lipschitz: res.ledger.iter().map(|e| e.lipschitz_norm).fold(res.initial_lipschitz, f64::max),
        lipschitz_cap: problem.lipschitz_cap,
        error: res.error.clone(),
    }
}

/// Runs a configuration without output files.
pub fn run_config(cfg: &Config) -> Result<RunSummary> {
    let problem = cfg.build_problem()?;
    let initial = cfg.initial_state(&problem)?;
    let mut opts = cfg.run_options();
    opts.out_dir = None;
    let clock = Instant::now();
    let res = run(&problem, initial, &opts, |_, _| Ok(()))?;
    Ok(summarize(&problem, cfg, &res, clock.elapsed().as_secs_f64()))
}

/// The demo structure alone: fluid switched off, shell released from a
/// radial bulge, `steps` steps.
pub fn structure_only_demo(steps: usize) -> Config {
    let mut cfg = Config::demo();
    cfg.fluid = None;
    cfg.steps = steps;
    cfg.init = InitialData::Bulge { amplitude: 0.02 };
    cfg
}

/// One level of a time-step refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub run: RunSummary,
    pub weak: Vec<WeakRow>,
}

/// Runs `cfg` at `Δt, Δt/2, …` (`levels` levels) and accumulates the weak
/// residuals along each trajectory.
pub fn convergence(cfg: &Config, levels: usize, mut on_level: impl FnMut(&LevelReport)) -> Result<Vec<LevelReport>> {
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut c = cfg.refined(1 << level);
        c.out_dir = None;
        let problem = c.build_problem()?;
        let initial = c.initial_state(&problem)?;
        let mut weak = if problem.fluid.is_some() { Some(WeakResidual::new(&problem, c.t_end, true)?) } else { None };
        let clock = Instant::now();
        let res = run(&problem, initial, &c.run_options(), |old, step| match weak.as_mut() {
            Some(w) => w.observe(old, &step.state, step.entry.p_in, step.entry.p_out),
            None => Ok(()),
        })?;
        let report = LevelReport {
            run: summarize(&problem, &c, &res, clock.elapsed().as_secs_f64()),
            weak: weak.map(|w| w.rows()).unwrap_or_default(),
        };
        on_level(&report);
        out.push(report);
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Relative spread `(max − min) / max` of the peak energies across levels.
pub fn max_energy_spread(levels: &[LevelReport]) -> f64 {
    let e: Vec<f64> = levels.iter().map(|l| l.run.energy.max_energy).collect();
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    (hi - lo) / hi
}

/// Slope of the kinematic mismatch integral against `Δt`.
pub fn mismatch_slope(levels: &[LevelReport]) -> f64 {
    let dt: Vec<f64> = levels.iter().map(|l| l.run.dt).collect();
    let m: Vec<f64> = levels.iter().map(|l| l.run.energy.kin_mismatch_integral).collect();
    loglog_slope(&dt, &m)
}

/// Number of weak-residual tests whose `|R|` decreases strictly from level to
/// level.
pub fn weak_monotone_count(levels: &[LevelReport]) -> usize {
    let n = levels.first().map_or(0, |l| l.weak.len());
    (0..n)
        .filter(|&i| levels.windows(2).all(|w| w[1].weak[i].residual.abs() < w[0].weak[i].residual.abs()))
        .count()
}

/// Pass/fail checks of a refinement study.
pub fn convergence_checks(levels: &[LevelReport]) -> Vec<Check> {
    let mut checks = Vec::new();
    for (i, l) in levels.iter().enumerate() {
        checks.push(Check::holds(&format!("level {i}: run completed, monitors hold"), l.run.monitors_hold()));
        checks.push(Check::at_most(
            &format!("level {i}: max energy / K"),
            l.run.energy.max_energy / l.run.energy.k_bound,
            1.0 + 1e-9,
        ));
    }
    if levels.len() >= 2 {
        checks.push(Check::at_most("max energy spread across levels", max_energy_spread(levels), 0.05));
        checks.push(Check::within("kinematic mismatch slope", mismatch_slope(levels), 0.7, 1.3));
        let n = levels[0].weak.len();
        if n > 0 {
            checks.push(Check::within(
                "weak residuals decreasing",
                weak_monotone_count(levels) as f64,
                n as f64,
                n as f64,
            ));
        }
    }
    checks
}

// ---------------------------------------------------------------------------
// Suites

/// Runs a named suite with its pinned tolerances.
pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let clock = Instant::now();
    let mut checks = Vec::new();
    match suite {
        Suite::Geometry => {
            let rep = ale_identities(100, 32, 7)?;
            checks.push(Check::at_most("jacobian identity S = (1 - d_eta)^2", rep.max_jacobian_identity, 1e-12));
            checks.push(Check::at_most("map o inverse = id", rep.max_roundtrip, 1e-12));
            let fold = folding_check()?;
            checks.push(Check::holds("folded wall trips the subgraph monitor", fold.injectivity < 0.0 && fold.tripped));
        }
        Suite::Shell => {
            for (i, lo) in shell_coercivity(12, 12)?.into_iter().enumerate() {
                checks.push(Check::above(&format!("parameter set {i}: min eigenvalue of K_sh"), lo, 0.0));
            }
        }
        Suite::Net => {
            let net = demo_net()?;
            let (a, r) = net_rigid_translation(&net, [0.3, -0.2, 0.7]);
            checks.push(Check::at_most("rigid translation: a_S", a, 0.0));
            checks.push(Check::at_most("rigid translation: constraint residual", r, 1e-14));
        }
        Suite::StructureEnergy => {
            let s = run_config(&structure_only_demo(200))?;
            checks.push(Check::holds("run completed", s.error.is_none()));
            checks.push(Check::at_most("max |residual| / E0", s.max_structure_residual_rel, 1e-9));
        }
        Suite::FluidPoiseuille => {
            let errs = poiseuille_errors(&[8, 16, 32])?;
            for (i, rate) in halving_rates(&errs).into_iter().enumerate() {
                checks.push(Check::within(&format!("max-norm rate {}->{}", 8 << i, 16 << i), rate, 1.6, 2.4));
            }
            checks.push(Check::at_most("convection skew max|u'Cu|/|u|^2", convection_skew(20, 3)?, 1e-12));
        }
        Suite::CoupledEnergy => {
            let s = run_config(&Config::demo())?;
            checks.push(Check::holds("run completed, monitors hold", s.monitors_hold()));
            checks.push(Check::at_most("max fluid excess / E", s.energy.max_fluid_excess, 1e-9));
            checks.push(Check::at_least_zero("min numerical dissipation", s.min_numdiss));
            checks.push(Check::at_most("max energy / K", s.energy.max_energy / s.energy.k_bound, 1.0 + 1e-9));
        }
        Suite::Refinement => {
            let levels = convergence(&Config::demo(), 3, |_| {})?;
            checks = convergence_checks(&levels);
        }
    }
    Ok(SuiteReport {
        suite,
        checks,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.5, 0.25];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert!((loglog_slope(&x, &y) - 1.7).abs() < 1e-12);
        assert_eq!(halving_rates(&[4.0, 1.0]), vec![2.0]);
    }

    #[test]
    fn ale_identities_hold() {
        let r = ale_identities(3, 8, 1).unwrap();
        assert!(r.max_jacobian_identity < 1e-12 && r.max_roundtrip < 1e-12, "{r:?}");
    }

    #[test]
    fn folded_wall_is_rejected() {
        let f = folding_check().unwrap();
        assert!(f.injectivity < 0.0 && f.tripped, "{f:?}");
    }

    #[test]
    fn net_translation_is_a_kernel_mode() {
        let (a, r) = net_rigid_translation(&demo_net().unwrap(), [1.0, 2.0, -1.0]);
        assert_eq!(a, 0.0);
        assert!(r < 1e-12);
    }
}
