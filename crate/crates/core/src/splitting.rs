//! Lie splitting time loop: a structure substep with the fluid frozen,
//! reparameterization of the new wall, then a fluid substep on the new domain
//! with the structure positions frozen and the shell inertia on the shared
//! wall unknowns. Every step appends one row to the energy ledger.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::composite::{interface_trace, StructureModel, StructureState, StructureSystem};
use crate::diagnostics::{subgraph_monitor, LipschitzMonitor};
use crate::error::{Error, Result};
use crate::fluid::{self, FluidGrid, FluidParams, FluidSolver, FluidState, NodeKind, WallCondition};
use crate::geometry::{reparameterize_with_preimages, BoundaryField, CylinderRef};
use crate::linalg::{self, SparseMatrix};
use crate::pressure::PressureData;

/// Everything that stays fixed during a run.
#[derive(Debug, Clone)]
pub struct Problem {
    /// Fluid grid and interface grid (`R`, `L`, `N_z`, `N_ρ`, `N_θ`).
    pub cyl: CylinderRef,
    pub structure: StructureModel,
    /// `None` runs the structure alone.
    pub fluid: Option<FluidParams>,
    /// Cap of the `W^{1,∞}` monitor.
    pub lipschitz_cap: f64,
}

/// State at a time level.
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub n: usize,
    pub t: f64,
    pub structure: StructureState,
    pub fluid: FluidState,
    /// Radial boundary function `η̃` of the current domain.
    pub boundary: BoundaryField,
    /// Material preimages of the interface grid points.
    pub preimages: Vec<(f64, f64)>,
}

/// Serializable part of a [`CoupledState`]; the geometry is recomputed on
/// load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub n: usize,
    pub t: f64,
    pub structure: StructureState,
    pub fluid: FluidState,
}

impl CoupledState {
    pub fn grid(&self) -> FluidGrid {
        FluidGrid::new(self.boundary.clone())
    }

    pub fn to_file(&self) -> StateFile {
        StateFile {
            n: self.n,
            t: self.t,
            structure: self.structure.clone(),
            fluid: self.fluid.clone(),
        }
    }
}

/// One ledger row. The first fourteen columns are the standard ones; the
/// rest are the remaining energy terms and solver diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub n: usize,
    pub t: f64,
    #[serde(rename = "E_half")]
    pub e_half: f64,
    #[serde(rename = "E_full")]
    pub e_full: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub numdiss_fluid: f64,
    pub numdiss_shell: f64,
    pub numdiss_net_k: f64,
    pub numdiss_net_z: f64,
    /// `‖v^{n+1} − v^{n+1/2}‖²` in `L²(ω; R)`.
    pub kin_mismatch: f64,
    #[serde(rename = "P_in")]
    pub p_in: f64,
    #[serde(rename = "P_out")]
    pub p_out: f64,
    pub subgraph_margin: f64,
    pub lipschitz_norm: f64,
    /// `ρ_K h · kin_mismatch`.
    pub numdiss_coupling: f64,
    /// `2Δt pᵀ S p` of the pressure stabilization.
    pub numdiss_stab: f64,
    /// `C Δt (P_in² + P_out²)`.
    pub pressure_bound: f64,
    /// `E_half + structure dissipation − E^n` (zero up to round-off).
    pub structure_residual: f64,
    /// `E_full + fluid dissipation terms − E_half − pressure_bound`
    /// (must be ≤ 0).
    pub fluid_excess: f64,
    /// Residual of the exact fluid energy identity.
    pub fluid_identity_residual: f64,
    pub gmres_iterations: usize,
    pub divergence_residual: f64,
}

impl LedgerEntry {
    pub fn numdiss_structure(&self) -> f64 {
        self.numdiss_shell + self.numdiss_net_k + self.numdiss_net_z
    }

    pub fn numdiss_fluid_total(&self) -> f64 {
        self.numdiss_fluid + self.numdiss_coupling + self.numdiss_stab
    }
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = &self.fluid {
            f.validate()?;
        }
        let s = &self.structure.shell.params;
        if (s.r - self.cyl.r).abs() > 1e-12 * s.r || (s.l - self.cyl.l).abs() > 1e-12 * s.l {
            return Err(Error::Config("shell and fluid domain disagree on R or L".into()));
        }
        if !(self.lipschitz_cap > 0.0) {
            return Err(Error::Config("lipschitz_cap must be positive".into()));
        }
        Ok(())
    }

    /// Interface trace of the shell velocity onto the wall nodes of the
    /// domain bounded by `boundary`.
    pub fn wall_trace(&self, boundary: &BoundaryField, preimages: &[(f64, f64)]) -> SparseMatrix {
        let c = &self.cyl;
        let mut theta = Vec::with_capacity(preimages.len());
        let mut radius = Vec::with_capacity(preimages.len());
        for i in 0..c.n_z_nodes() {
            for k in 0..c.n_theta {
                theta.push(c.theta_at(k));
                radius.push(boundary.radius_at(i, k));
            }
        }
        interface_trace(&self.structure.shell, preimages, &theta, &radius)
    }

    /// Builds the coupled state for a structure state and a fluid velocity,
    /// checking the compatibility conditions.
    pub fn make_state(&self, n: usize, t: f64, structure: StructureState, fluid: Option<FluidState>) -> Result<CoupledState> {
        self.structure.check_state(&structure)?;
        let view = self.structure.shell.view(&structure.eta);
        let margin = subgraph_monitor(&view, &self.cyl);
        if !margin.holds() {
            return Err(Error::SubgraphViolation(format!(
                "injectivity margin {:.3e}, min radius {:.3e}",
                margin.injectivity, margin.radius
            )));
        }
        let (boundary, preimages) = reparameterize_with_preimages(&view, &self.cyl)?;
        let grid = FluidGrid::new(boundary.clone());
        let fluid = fluid.unwrap_or_else(|| FluidState::zeros(&grid));
        if fluid.u.len() != 3 * grid.n_nodes() || fluid.p.len() != grid.n_nodes() {
            return Err(Error::Dimension("fluid state does not match the grid".into()));
        }
        if let Some(fp) = &self.fluid {
            self.check_compatibility(&grid, &boundary, &preimages, &structure, &fluid, fp)?;
        }
        Ok(CoupledState {
            n,
            t,
            structure,
            fluid,
            boundary,
            preimages,
        })
    }

    /// Rest state with an optional initial shell displacement and velocity.
    pub fn initial_state(&self, eta: Option<Vec<f64>>, v: Option<Vec<f64>>) -> Result<CoupledState> {
        let mut s = self.structure.zero_state();
        if let Some(e) = eta {
            s.eta = e;
        }
        if let Some(v) = v {
            s.k = if self.structure.net.is_some() { self.structure.trace.mul_vec(&v) } else { Vec::new() };
            s.v = v;
        }
        self.make_state(0, 0.0, s, None)
    }

    fn check_compatibility(
        &self,
        grid: &FluidGrid,
        boundary: &BoundaryField,
        preimages: &[(f64, f64)],
        s: &StructureState,
        f: &FluidState,
        fp: &FluidParams,
    ) -> Result<()> {
        let scale = linalg::norm_inf(&f.u).max(linalg::norm_inf(&s.v)).max(1e-300);
        for node in 0..grid.n_nodes() {
            if grid.kind(node) == NodeKind::Face && (f.u[3 * node].abs() > 1e-10 * scale || f.u[3 * node + 1].abs() > 1e-10 * scale) {
                return Err(Error::State(format!("initial velocity violates u x e_z = 0 at inlet/outlet node {node}")));
            }
        }
        let wall = self.wall_trace(boundary, preimages).mul_vec(&s.v);
        for (w, node) in grid.wall_nodes().iter().enumerate() {
            for c in 0..3 {
                if (f.u[3 * node + c] - wall[3 * w + c]).abs() > 1e-10 * scale {
                    return Err(Error::State(format!(
                        "initial fluid velocity does not match the shell velocity at wall node {node}"
                    )));
                }
            }
        }
        if linalg::norm_inf(&f.u) > 0.0 {
            let cells = fluid::cell_data(grid);
            let b = fluid::assembly::divergence_matrix(&cells, grid.n_nodes());
            let st = fluid::assembly::stabilization_matrix(&cells, grid.n_nodes(), fp.c_stab);
            let r = linalg::add(&b.mul_vec(&f.u), &st.mul_vec(&f.p));
            if linalg::norm(&r) > 1e-8 * linalg::norm(&f.u) {
                return Err(Error::State(format!(
                    "initial fluid velocity is not discretely divergence-free (residual {:.3e})",
                    linalg::norm(&r)
                )));
            }
        }
        Ok(())
    }

    /// Fluid kinetic energy of a state.
    pub fn fluid_energy(&self, s: &CoupledState) -> f64 {
        match &self.fluid {
            Some(fp) => s.fluid.kinetic_energy(&s.grid(), fp.rho),
            None => 0.0,
        }
    }

    /// Total discrete energy.
    pub fn energy(&self, s: &CoupledState) -> f64 {
        self.structure.energy(&s.structure).total() + self.fluid_energy(s)
    }
}

/// Advances a [`CoupledState`] by one splitting step.
pub struct Stepper<'p> {
    pub problem: &'p Problem,
    pub dt: f64,
    sys: StructureSystem,
    solver: Option<FluidSolver>,
    /// Constant of the pressure-work bound (zero without fluid).
    pub pressure_constant: f64,
    lipschitz: LipschitzMonitor,
    l2: SparseMatrix,
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: CoupledState,
    pub entry: LedgerEntry,
    /// Shell velocity after the structure substep.
    pub v_half: Vec<f64>,
}

impl<'p> Stepper<'p> {
    pub fn new(problem: &'p Problem, dt: f64) -> Result<Self> {
        problem.validate()?;
        let sys = problem.structure.build_system(dt)?;
        let (solver, c) = match &problem.fluid {
            Some(fp) => (Some(FluidSolver::new(*fp)?), fluid::pressure_work_constant(&problem.cyl, fp.mu)?),
            None => (None, 0.0),
        };
        log::info!("pressure-work constant C = {c:.6e}");
        Ok(Self {
            problem,
            dt,
            sys,
            solver,
            pressure_constant: c,
            lipschitz: LipschitzMonitor::new(problem.lipschitz_cap),
            l2: crate::shell::l2_gram(&problem.structure.shell.basis, problem.structure.shell.params.r),
        })
    }

    pub fn lipschitz(&self) -> &LipschitzMonitor {
        &self.lipschitz
    }

    /// Records the monitors for the initial state.
    pub fn observe_initial(&mut self, s: &CoupledState) -> Result<(f64, f64)> {
        let p = self.problem;
        let view = p.structure.shell.view(&s.structure.eta);
        let margin = subgraph_monitor(&view, &p.cyl);
        if !margin.holds() {
            return Err(Error::SubgraphViolation(format!(
                "initial displacement: injectivity margin {:.3e}, min radius {:.3e}",
                margin.injectivity, margin.radius
            )));
        }
        let lip = self.lipschitz.observe(&view, &p.cyl);
        if !self.lipschitz.holds() {
            return Err(Error::LipschitzViolation(format!("initial W^1,inf norm {lip:.3e} exceeds cap {:.3e}", self.lipschitz.cap)));
        }
        Ok((margin.normalized(p.cyl.r), lip))
    }

    pub fn step(&mut self, s: &CoupledState, p_in: f64, p_out: f64) -> Result<StepOutcome> {
        let p = self.problem;
        let st = &p.structure;
        let dt = self.dt;
        let fluid_old = p.fluid_energy(s);
        let e_old = st.energy(&s.structure).total() + fluid_old;

        // (i) Structure substep, fluid frozen.
        let half = st.substep(&self.sys, &s.structure, None, None)?;
        let diss = st.dissipation(&s.structure, &half);
        let e_half = st.energy(&half).total() + fluid_old;
        let structure_residual = e_half + diss.total() - e_old;

        // (ii) Monitors and the new domain.
        let view = st.shell.view(&half.eta);
        let margin = subgraph_monitor(&view, &p.cyl);
        if !margin.holds() {
            return Err(Error::SubgraphViolation(format!(
                "step {}: injectivity margin {:.3e}, min radius {:.3e}",
                s.n + 1,
                margin.injectivity,
                margin.radius
            )));
        }
        let lip = self.lipschitz.observe(&view, &p.cyl);
        if !self.lipschitz.holds() {
            return Err(Error::LipschitzViolation(format!(
                "step {}: W^1,inf norm {lip:.3e} exceeds cap {:.3e}",
                s.n + 1,
                self.lipschitz.cap
            )));
        }
        let (boundary, preimages) = reparameterize_with_preimages(&view, &p.cyl)?;

        let mut entry = LedgerEntry {
            n: s.n + 1,
            t: s.t + dt,
            e_half,
            numdiss_shell: diss.shell,
            numdiss_net_k: diss.net_k,
            numdiss_net_z: diss.net_z,
            p_in,
            p_out,
            subgraph_margin: margin.normalized(p.cyl.r),
            lipschitz_norm: lip,
            structure_residual,
            ..Default::default()
        };

        // (iii) Fluid substep on the new domain, structure positions frozen.
        let v_half = half.v.clone();
        let mut structure = half;
        let fluid_state = match self.solver.as_mut() {
            Some(solver) => {
                let old_grid = s.grid();
                let new_grid = FluidGrid::new(boundary.clone());
                let trace = p.wall_trace(&boundary, &preimages);
                let wall = WallCondition::Shell {
                    trace: &trace,
                    mass: &st.shell.mass,
                    v_half: &v_half,
                };
                let out = solver.step(&old_grid, &new_grid, &s.fluid, wall, dt, p_in, p_out)?;
                let r = out.report;
                structure.v = out.v;
                let dv = linalg::sub(&structure.v, &v_half);
                entry.kin_mismatch = self.l2.quad(&dv);
                entry.numdiss_fluid = r.numdiss;
                entry.numdiss_coupling = r.coupling;
                entry.numdiss_stab = r.stabilization;
                entry.d = r.dissipation;
                entry.fluid_identity_residual = r.identity_residual();
                entry.gmres_iterations = r.iterations;
                entry.divergence_residual = r.divergence_residual;
                out.state
            }
            None => s.fluid.clone(),
        };
        let next = CoupledState {
            n: s.n + 1,
            t: s.t + dt,
            structure,
            fluid: fluid_state,
            boundary,
            preimages,
        };
        entry.e_full = p.energy(&next);
        entry.pressure_bound = self.pressure_constant * dt * (p_in * p_in + p_out * p_out);
        entry.fluid_excess = entry.e_full + entry.numdiss_fluid_total() + entry.d - entry.e_half - entry.pressure_bound;
        Ok(StepOutcome {
            state: next,
            entry,
            v_half,
        })
    }
}

/// Output and run-length settings.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub dt: f64,
    pub steps: usize,
    pub pressure: PressureData,
    /// Directory for the ledger, snapshots and the final state.
    pub out_dir: Option<PathBuf>,
    /// Snapshot cadence in steps (0 disables snapshots).
    pub vtk_every: usize,
}

/// Outcome of a run. On failure `error` names the violated condition and
/// `final_state` is the last valid state.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub ledger: Vec<LedgerEntry>,
    pub initial_energy: f64,
    pub initial_margin: f64,
    pub initial_lipschitz: f64,
    pub pressure_constant: f64,
    pub final_state: CoupledState,
    pub error: Option<String>,
}

/// Runs `opts.steps` splitting steps from `initial`. `observer` sees every
/// (old, new) pair, e.g. to accumulate weak residuals.
pub fn run(
    problem: &Problem,
    initial: CoupledState,
    opts: &RunOptions,
    mut observer: impl FnMut(&CoupledState, &StepOutcome) -> Result<()>,
) -> Result<RunResult> {
    let mut stepper = Stepper::new(problem, opts.dt)?;
    let (m0, l0) = stepper.observe_initial(&initial)?;
    let e0 = problem.energy(&initial);
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
        if opts.vtk_every > 0 && problem.fluid.is_some() {
            crate::vtk::write_snapshot(&dir.join(snapshot_name(0)), &initial.grid(), &initial.fluid)?;
        }
    }
    let mut state = initial;
    let mut ledger = Vec::with_capacity(opts.steps);
    let mut error = None;
    for n in 0..opts.steps {
        let t0 = state.t;
        let (p_in, p_out) = opts.pressure.step(t0, t0 + opts.dt);
        let out = match stepper.step(&state, p_in, p_out) {
            Ok(o) => o,
            Err(e) => {
                log::error!("step {} failed: {e}", n + 1);
                error = Some(e.to_string());
                break;
            }
        };
        if let Err(e) = observer(&state, &out) {
            error = Some(e.to_string());
            break;
        }
        ledger.push(out.entry);
        state = out.state;
        if let Some(dir) = &opts.out_dir {
            if opts.vtk_every > 0 && problem.fluid.is_some() && state.n % opts.vtk_every == 0 {
                crate::vtk::write_snapshot(&dir.join(snapshot_name(state.n)), &state.grid(), &state.fluid)?;
            }
        }
    }
    if let Some(dir) = &opts.out_dir {
        write_ledger(&dir.join("ledger.csv"), &ledger)?;
        let f = std::fs::File::create(dir.join("final_state.json"))?;
        serde_json::to_writer(std::io::BufWriter::new(f), &state.to_file())?;
    }
    Ok(RunResult {
        ledger,
        initial_energy: e0,
        initial_margin: m0,
        initial_lipschitz: l0,
        pressure_constant: stepper.pressure_constant,
        final_state: state,
        error,
    })
}

fn snapshot_name(n: usize) -> String {
    format!("fluid_{n:06}.vtk")
}

pub fn write_ledger(path: &Path, ledger: &[LedgerEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in ledger {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Aggregates of a ledger and the four statements of the uniform energy
/// estimate, with `K = E₀ + C ‖P‖²_{L²(0,T)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub initial_energy: f64,
    pub pressure_constant: f64,
    pub pressure_norm_sq: f64,
    pub k_bound: f64,
    pub max_energy: f64,
    pub sum_dissipation: f64,
    pub sum_numdiss_fluid: f64,
    pub sum_numdiss_structure: f64,
    /// `Σ ‖v^{n+1} − v^{n+1/2}‖² Δt`.
    pub kin_mismatch_integral: f64,
    pub max_structure_residual: f64,
    /// Largest `fluid_excess / E_scale` (≤ 0 when the inequality holds).
    pub max_fluid_excess: f64,
    /// `max_n E^n ≤ K`.
    pub energy_bounded: bool,
    /// `Σ D ≤ K`.
    pub dissipation_bounded: bool,
    /// Fluid and coupling numerical dissipation `≤ K`.
    pub numdiss_bounded: bool,
    /// Structure numerical dissipation (elastic increments included) `≤ K`.
    pub elastic_bounded: bool,
}

pub fn energy_report(ledger: &[LedgerEntry], initial_energy: f64, c: f64, dt: f64) -> EnergyReport {
    let pressure_norm_sq: f64 = ledger.iter().map(|e| dt * (e.p_in * e.p_in + e.p_out * e.p_out)).sum();
    let k = initial_energy + c * pressure_norm_sq;
    let max_energy = ledger
        .iter()
        .flat_map(|e| [e.e_half, e.e_full])
        .fold(initial_energy, f64::max);
    let scale = max_energy.max(1e-300);
    let sum_d: f64 = ledger.iter().map(|e| e.d).sum();
    let sum_nf: f64 = ledger.iter().map(|e| e.numdiss_fluid_total()).sum();
    let sum_ns: f64 = ledger.iter().map(|e| e.numdiss_structure()).sum();
    let slack = 1e-9 * scale;
    EnergyReport {
        initial_energy,
        pressure_constant: c,
        pressure_norm_sq,
        k_bound: k,
        max_energy,
        sum_dissipation: sum_d,
        sum_numdiss_fluid: sum_nf,
        sum_numdiss_structure: sum_ns,
        kin_mismatch_integral: ledger.iter().map(|e| e.kin_mismatch * dt).sum(),
        max_structure_residual: ledger.iter().map(|e| e.structure_residual.abs()).fold(0.0, f64::max),
        max_fluid_excess: ledger.iter().map(|e| e.fluid_excess / scale).fold(f64::NEG_INFINITY, f64::max),
        energy_bounded: max_energy <= k + slack,
        dissipation_bounded: sum_d <= k + slack,
        numdiss_bounded: sum_nf <= k + slack,
        elastic_bounded: sum_ns <= k + slack,
    }
}
