//! Per-step incompressible fluid subproblem on the current moving domain.
//!
//! The velocity lives at the nodes of a [`FluidGrid`] (Cartesian components,
//! index `3 node + c`), the pressure at the same nodes. Boundary conditions
//! are built into a prolongation `P` from a reduced unknown vector:
//!
//! * interior nodes carry three free components;
//! * inlet/outlet nodes off the wall carry only `u_z` (`u × e_z = 0`);
//! * wall nodes either vanish ([`WallCondition::Rigid`]), are given by the
//!   shell velocity through the interface trace ([`WallCondition::Shell`]),
//!   or are free except on the clamped end rings ([`WallCondition::Free`]).
//!
//! The step solves the stabilized saddle system
//! `[Pᵀ A P, −(B P)ᵀ; −B P, −S] [x; p] = [Pᵀ f; 0]` with
//! `A = (ρ/Δt) W + C + K_v` (lumped mass on the new domain, skew convection,
//! viscous operator) and, in shell mode, the shell inertia `M/Δt` on the
//! shared wall unknowns.

pub mod assembly;
pub mod grid;

use serde::{Deserialize, Serialize};

pub use assembly::{cell_data, CellData};
pub use grid::{FluidGrid, NodeKind};

use crate::error::{Error, Result};
use crate::geometry::CylinderRef;
use crate::linalg::{self, gmres, SparseLu, SparseMatrix, Triplets};
use crate::geometry::BoundaryField;

/// Fluid material constants and solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub rho: f64,
    pub mu: f64,
    pub convection: bool,
    pub c_stab: f64,
    /// Relative residual tolerance of the linear solve.
    pub tol: f64,
    /// GMRES iterations after which the preconditioner is refactored.
    pub refactor_after: usize,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            mu: 0.035,
            convection: true,
            c_stab: 0.1,
            tol: 1e-12,
            refactor_after: 20,
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho_F", self.rho), ("mu_F", self.mu), ("c_stab", self.c_stab)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("solver tolerance must lie in (0, 1), got {}", self.tol)));
        }
        Ok(())
    }
}

/// Nodal velocity (Cartesian, `3 node + c`) and pressure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl FluidState {
    pub fn zeros(grid: &FluidGrid) -> Self {
        Self {
            u: vec![0.0; 3 * grid.n_nodes()],
            p: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn velocity(&self, node: usize) -> [f64; 3] {
        [self.u[3 * node], self.u[3 * node + 1], self.u[3 * node + 2]]
    }

    /// Fluid kinetic energy `ρ Σ W |u|²` with the lumped weights of `grid`.
    pub fn kinetic_energy(&self, grid: &FluidGrid, rho: f64) -> f64 {
        weighted_sq(&grid.lumped_weights(), &self.u) * rho
    }
}

fn weighted_sq(w: &[f64], u: &[f64]) -> f64 {
    w.iter()
        .enumerate()
        .map(|(n, wn)| wn * (u[3 * n].powi(2) + u[3 * n + 1].powi(2) + u[3 * n + 2].powi(2)))
        .sum()
}

/// How the velocity on the lateral wall is determined.
#[derive(Clone, Copy)]
pub enum WallCondition<'a> {
    /// No-slip on a fixed wall.
    Rigid,
    /// Wall velocity `T v` from the shell velocity `v`; the shell inertia
    /// `M (v − v_half)/Δt` enters the momentum balance.
    Shell {
        /// Interface trace, 3 rows per wall node in [`FluidGrid::wall_nodes`] order.
        trace: &'a SparseMatrix,
        mass: &'a SparseMatrix,
        v_half: &'a [f64],
    },
    /// Wall velocity free, end rings pinned.
    Free,
}

/// Map from reduced unknowns to nodal velocities.
#[derive(Debug, Clone)]
pub struct Prolongation {
    pub matrix: SparseMatrix,
    /// Number of fluid-only reduced unknowns (the shell unknowns follow).
    pub n_fluid: usize,
    pub n_shell: usize,
}

impl Prolongation {
    pub fn new(grid: &FluidGrid, wall: &WallCondition) -> Self {
        let n = grid.n_nodes();
        let mut cols: Vec<(usize, usize)> = Vec::new();
        let c = grid.cyl;
        for node in 0..n {
            match grid.kind(node) {
                NodeKind::Interior => {
                    for comp in 0..3 {
                        cols.push((3 * node + comp, 0));
                    }
                }
                NodeKind::Face => cols.push((3 * node + 2, 0)),
                NodeKind::Wall => {
                    if let WallCondition::Free = wall {
                        let (i, _, _) = grid.ijk(node);
                        if i != 0 && i != c.n_z {
                            for comp in 0..3 {
                                cols.push((3 * node + comp, 0));
                            }
                        }
                    }
                }
            }
        }
        let n_fluid = cols.len();
        let n_shell = match wall {
            WallCondition::Shell { trace, .. } => trace.ncols(),
            _ => 0,
        };
        let mut t = Triplets::with_capacity(3 * n, n_fluid + n_shell, n_fluid + 16 * n_shell);
        for (col, (row, _)) in cols.iter().enumerate() {
            t.push(*row, col, 1.0);
        }
        if let WallCondition::Shell { trace, .. } = wall {
            let wall_nodes = grid.wall_nodes();
            trace.for_each(|r, col, v| {
                let node = wall_nodes[r / 3];
                t.push(3 * node + r % 3, n_fluid + col, v);
            });
        }
        Self {
            matrix: t.build(),
            n_fluid,
            n_shell,
        }
    }

    pub fn n_reduced(&self) -> usize {
        self.n_fluid + self.n_shell
    }
}

/// Per-node relative boundary increment `Δη` between the old and new grids:
/// `1 − sqrt(Wⁿ/Wⁿ⁺¹)`, which equals `(a⁺ − aⁿ)/a⁺` on ring nodes.
pub fn nodal_delta_eta(old: &FluidGrid, new: &FluidGrid) -> Vec<f64> {
    let wo = old.lumped_weights();
    let wn = new.lumped_weights();
    wo.iter().zip(&wn).map(|(a, b)| 1.0 - (a / b).sqrt()).collect()
}

/// Nodal ALE domain velocity `s = (Δη/Δt) (x, y, 0)` on the new grid.
pub fn domain_velocity(old: &FluidGrid, new: &FluidGrid, dt: f64) -> Vec<f64> {
    let mut s = vec![0.0; 3 * new.n_nodes()];
    for node in 0..new.n_nodes() {
        let (i, j, k) = new.ijk(node);
        if j == 0 {
            continue;
        }
        let (an, ao) = (new.radius(i, k), old.radius(i, k));
        let f = (an - ao) / an / dt;
        let x = new.position(node);
        s[3 * node] = f * x[0];
        s[3 * node + 1] = f * x[1];
    }
    s
}

/// `û = u ∘ 𝒜`: the slab map is a pure radial scaling and both grids use the
/// same `(z, ρ, θ)` nodes, so the composition is the node-by-node copy.
pub fn transfer(old: &FluidGrid, new: &FluidGrid, state: &FluidState) -> Result<Vec<f64>> {
    if old.cyl != new.cyl || state.u.len() != 3 * new.n_nodes() {
        return Err(Error::Dimension("velocity transfer between incompatible grids".into()));
    }
    if state.u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Interpolation("non-finite velocity in transfer".into()));
    }
    Ok(state.u.clone())
}

/// Inertia right-hand side `(ρ/Δt) Wⁿ⁺¹ (1 − Δη) û`.
pub fn inertia_rhs(old: &FluidGrid, new: &FluidGrid, u_hat: &[f64], rho: f64, dt: f64) -> Vec<f64> {
    let w = new.lumped_weights();
    let de = nodal_delta_eta(old, new);
    let mut f = vec![0.0; u_hat.len()];
    for n in 0..w.len() {
        let s = rho / dt * w[n] * (1.0 - de[n]);
        for c in 0..3 {
            f[3 * n + c] = s * u_hat[3 * n + c];
        }
    }
    f
}

/// Geometric source `(ρ/2)(∇·s)(û·υ)` with `∇·s = 2Δη/Δt`, as a nodal load.
pub fn geometric_source(old: &FluidGrid, new: &FluidGrid, u_hat: &[f64], rho: f64, dt: f64) -> Vec<f64> {
    let w = new.lumped_weights();
    let de = nodal_delta_eta(old, new);
    let mut f = vec![0.0; u_hat.len()];
    for n in 0..w.len() {
        let s = 0.5 * rho * (2.0 * de[n] / dt) * w[n];
        for c in 0..3 {
            f[3 * n + c] = s * u_hat[3 * n + c];
        }
    }
    f
}

/// Symmetrized gradient `D(u) = ½(∇u + ∇uᵀ)` of a nodal field inside cell
/// `(i, j, k)` at local coordinates `(zh, rh, th)`.
pub fn symmetrized_gradient(
    grid: &FluidGrid,
    u: &[f64],
    cell: (usize, usize, usize),
    local: (f64, f64, f64),
) -> [[f64; 3]; 3] {
    let (i, j, k) = cell;
    let q = assembly::shape_at(grid, i, j, k, local.0, local.1, local.2);
    let (_, g) = assembly::field_jet(&q, &grid.cell_nodes(i, j, k), u);
    let mut d = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            d[a][b] = 0.5 * (g[a][b] + g[b][a]);
        }
    }
    d
}

/// Viscous dissipation rate `2μ ∫ |D(u)|²`.
pub fn viscous_dissipation(grid: &FluidGrid, u: &[f64], mu: f64) -> f64 {
    let cells = cell_data(grid);
    assembly::viscous_matrix(&cells, grid.n_nodes(), mu).quad(u)
}

/// Energy bookkeeping of one fluid substep (full quadratic forms).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FluidReport {
    /// `ρ Σ Wⁿ⁺¹ |uⁿ⁺¹|²`.
    pub kinetic_new: f64,
    /// `ρ Σ Wⁿ |uⁿ|²`.
    pub kinetic_old: f64,
    /// `ρ ‖u − (1 − Δη) û‖²`.
    pub numdiss: f64,
    /// `Δt · 2μ ‖D(u)‖²`.
    pub dissipation: f64,
    /// `2Δt pᵀ S p`.
    pub stabilization: f64,
    pub shell_kinetic_new: f64,
    pub shell_kinetic_old: f64,
    /// `(v − v_half)ᵀ M (v − v_half)`.
    pub coupling: f64,
    /// `2Δt (P_in ∫_in u_z − P_out ∫_out u_z)`.
    pub work: f64,
    pub flux_in: f64,
    pub flux_out: f64,
    /// `‖B u + S p‖ / (‖B‖ ‖u‖)`.
    pub divergence_residual: f64,
    pub iterations: usize,
    pub refactored: bool,
}

impl FluidReport {
    /// Residual of the exact discrete energy identity; round-off level.
    pub fn identity_residual(&self) -> f64 {
        self.kinetic_new + self.shell_kinetic_new + self.numdiss + self.coupling
            + 2.0 * self.dissipation
            + self.stabilization
            - self.kinetic_old
            - self.shell_kinetic_old
            - self.work
    }
}

/// Result of a fluid substep.
#[derive(Debug, Clone)]
pub struct FluidStep {
    pub state: FluidState,
    /// Shell velocity read off the shared wall unknowns (empty unless in
    /// shell mode).
    pub v: Vec<f64>,
    pub report: FluidReport,
}

/// Assembles and solves fluid substeps, reusing a lagged LU factorization as
/// a GMRES preconditioner.
pub struct FluidSolver {
    pub params: FluidParams,
    lu: Option<SparseLu>,
}

impl FluidSolver {
    pub fn new(params: FluidParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, lu: None })
    }

    /// One implicit step from `state` on `old` to the domain bounded by `new`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        old: &FluidGrid,
        new: &FluidGrid,
        state: &FluidState,
        wall: WallCondition,
        dt: f64,
        p_in: f64,
        p_out: f64,
    ) -> Result<FluidStep> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        new.boundary.validate()?;
        let u_hat = transfer(old, new, state)?;
        let prm = self.params;
        let n = new.n_nodes();
        let cells = cell_data(new);
        let w_new = new.lumped_weights();

        let kv = assembly::viscous_matrix(&cells, n, prm.mu);
        let mut extra = Triplets::with_capacity(3 * n, 3 * n, 3 * n);
        for (node, w) in w_new.iter().enumerate() {
            for c in 0..3 {
                extra.push(3 * node + c, 3 * node + c, prm.rho / dt * w);
            }
        }
        // Without convection the ALE transport `−(s·∇)u` remains.
        let s = domain_velocity(old, new, dt);
        let beta = if prm.convection { linalg::sub(&u_hat, &s) } else { s.iter().map(|v| -v).collect() };
        extra.append(assembly::convection_triplets(&cells, n, &beta, prm.rho));
        let a = kv.add_scaled(&extra.build(), 1.0);
        let b = assembly::divergence_matrix(&cells, n);
        let s_mat = assembly::stabilization_matrix(&cells, n, prm.c_stab);
        let face_in = assembly::face_vector(new, false);
        let face_out = assembly::face_vector(new, true);

        let mut f = inertia_rhs(old, new, &u_hat, prm.rho, dt);
        for node in 0..n {
            f[3 * node + 2] += p_in * face_in[node] - p_out * face_out[node];
        }
        let x = self.solve(&wall, new, &a, &b, &s_mat, &f, dt)?;
        let (u, p, v, refactored, iterations) = x;

        // Energy bookkeeping.
        let rho = prm.rho;
        let de = nodal_delta_eta(old, new);
        let w_old = old.lumped_weights();
        let mut numdiss = 0.0;
        for node in 0..n {
            for c in 0..3 {
                let d = u[3 * node + c] - (1.0 - de[node]) * u_hat[3 * node + c];
                numdiss += rho * w_new[node] * d * d;
            }
        }
        let flux_in: f64 = (0..n).map(|m| face_in[m] * u[3 * m + 2]).sum();
        let flux_out: f64 = (0..n).map(|m| face_out[m] * u[3 * m + 2]).sum();
        let (shell_new, shell_old, coupling) = match wall {
            WallCondition::Shell { mass, v_half, .. } => {
                let dv = linalg::sub(&v, v_half);
                (mass.quad(&v), mass.quad(v_half), mass.quad(&dv))
            }
            _ => (0.0, 0.0, 0.0),
        };
        let div = linalg::add(&b.mul_vec(&u), &s_mat.mul_vec(&p));
        let b_norm = b_row_norm(&b);
        let report = FluidReport {
            kinetic_new: rho * weighted_sq(&w_new, &u),
            kinetic_old: rho * weighted_sq(&w_old, &state.u),
            numdiss,
            dissipation: dt * kv.quad(&u),
            stabilization: 2.0 * dt * s_mat.quad(&p),
            shell_kinetic_new: shell_new,
            shell_kinetic_old: shell_old,
            coupling,
            work: 2.0 * dt * (p_in * flux_in - p_out * flux_out),
            flux_in,
            flux_out,
            divergence_residual: linalg::norm(&div) / (b_norm * linalg::norm(&u)).max(1e-300),
            iterations,
            refactored,
        };
        Ok(FluidStep {
            state: FluidState { u, p },
            v,
            report,
        })
    }

    /// Steady Stokes solve (no inertia, no convection) with the given wall
    /// condition; used for the unidirectional-flow check.
    pub fn steady_stokes(&mut self, grid: &FluidGrid, wall: WallCondition, p_in: f64, p_out: f64) -> Result<FluidState> {
        let n = grid.n_nodes();
        let cells = cell_data(grid);
        let a = assembly::viscous_matrix(&cells, n, self.params.mu);
        let b = assembly::divergence_matrix(&cells, n);
        let s_mat = assembly::stabilization_matrix(&cells, n, self.params.c_stab);
        let face_in = assembly::face_vector(grid, false);
        let face_out = assembly::face_vector(grid, true);
        let mut f = vec![0.0; 3 * n];
        for node in 0..n {
            f[3 * node + 2] = p_in * face_in[node] - p_out * face_out[node];
        }
        self.lu = None;
        let (u, p, _, _, _) = self.solve(&wall, grid, &a, &b, &s_mat, &f, 1.0)?;
        Ok(FluidState { u, p })
    }

    #[allow(clippy::too_many_arguments, clippy::type_complexity)]
    fn solve(
        &mut self,
        wall: &WallCondition,
        grid: &FluidGrid,
        a: &SparseMatrix,
        b: &SparseMatrix,
        s_mat: &SparseMatrix,
        f: &[f64],
        dt: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, bool, usize)> {
        let pro = Prolongation::new(grid, wall);
        let pm = &pro.matrix;
        let nr = pro.n_reduced();
        let np = grid.n_nodes();
        let mut ar = a.congruence(pm);
        let mut rhs = pm.mul_vec_transposed(f);
        if let WallCondition::Shell { mass, v_half, .. } = wall {
            let mut t = Triplets::new(nr, nr);
            t.add_block(pro.n_fluid, pro.n_fluid, mass, 1.0 / dt);
            ar = ar.add_scaled(&t.build(), 1.0);
            let mv = mass.mul_vec(v_half);
            for (r, m) in rhs[pro.n_fluid..].iter_mut().zip(&mv) {
                *r += m / dt;
            }
        }
        let br = b.matmul(pm);
        let mut t = Triplets::new(nr + np, nr + np);
        t.add_block(0, 0, &ar, 1.0);
        t.add_block(nr, 0, &br, -1.0);
        t.add_block_transposed(0, nr, &br, -1.0);
        t.add_block(nr, nr, s_mat, -1.0);
        let m = t.build();
        rhs.resize(nr + np, 0.0);

        let tol = self.params.tol;
        let mut refactored = false;
        if self.lu.as_ref().map_or(true, |lu| lu.dim() != nr + np) {
            self.lu = Some(SparseLu::new(&m)?);
            refactored = true;
        }
        let attempt = |lu: &SparseLu| {
            gmres(
                |x| m.mul_vec(x),
                |x| lu.solve(x).unwrap_or_else(|_| x.to_vec()),
                &rhs,
                None,
                tol,
                40,
                200,
            )
        };
        let (mut x, mut rep) = attempt(self.lu.as_ref().expect("factorization present"));
        let mut iterations = rep.iterations;
        if !refactored && (!rep.converged || rep.iterations > self.params.refactor_after) {
            self.lu = Some(SparseLu::new(&m)?);
            refactored = true;
            (x, rep) = attempt(self.lu.as_ref().expect("factorization present"));
            iterations += rep.iterations;
        }
        if !rep.converged {
            return Err(Error::Solver(format!(
                "fluid GMRES stopped at relative residual {:.3e} after {} iterations",
                rep.relative_residual, rep.iterations
            )));
        }
        let u = pm.mul_vec(&x[..nr]);
        let v = x[pro.n_fluid..nr].to_vec();
        let p = x[nr..].to_vec();
        Ok((u, p, v, refactored, iterations))
    }
}

fn b_row_norm(b: &SparseMatrix) -> f64 {
    let mut rows = vec![0.0; b.nrows()];
    b.for_each(|i, _, v| rows[i] += v.abs());
    rows.into_iter().fold(0.0, f64::max)
}

/// Constant `C` of the pressure-work bound
/// `2 Δt (P_in X_in − P_out X_out) ≤ Δt uᵀ K_v u + C Δt (P_in² + P_out²)`,
/// computed on the reference cylinder as `λ_max(L K⁻¹ Lᵀ)` with `K` the
/// viscous operator on velocities that vanish on the clamped end rings and
/// `L` the inlet/outlet flux functionals. Wall velocities are left free, a
/// superset of every shell trace, so the constant is conservative for all
/// wall motions.
pub fn pressure_work_constant(cyl: &CylinderRef, mu: f64) -> Result<f64> {
    let grid = FluidGrid::new(BoundaryField::zeros(*cyl));
    let n = grid.n_nodes();
    let cells = cell_data(&grid);
    let kv = assembly::viscous_matrix(&cells, n, mu);
    let pro = Prolongation::new(&grid, &WallCondition::Free);
    let k = kv.congruence(&pro.matrix);
    let lu = SparseLu::new(&k)?;
    let face_in = assembly::face_vector(&grid, false);
    let face_out = assembly::face_vector(&grid, true);
    let mut lin = vec![0.0; 3 * n];
    let mut lout = vec![0.0; 3 * n];
    for m in 0..n {
        lin[3 * m + 2] = face_in[m];
        lout[3 * m + 2] = -face_out[m];
    }
    let rows = [pro.matrix.mul_vec_transposed(&lin), pro.matrix.mul_vec_transposed(&lout)];
    let sol = [lu.solve(&rows[0])?, lu.solve(&rows[1])?];
    let g = nalgebra::Matrix2::new(
        linalg::dot(&rows[0], &sol[0]),
        linalg::dot(&rows[0], &sol[1]),
        linalg::dot(&rows[1], &sol[0]),
        linalg::dot(&rows[1], &sol[1]),
    );
    let g = 0.5 * (g + g.transpose());
    let eig = g.symmetric_eigenvalues();
    Ok(eig.max())
}
