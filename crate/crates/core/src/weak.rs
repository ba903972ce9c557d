//! Residual of the continuous weak formulation evaluated on a discrete
//! trajectory.
//!
//! Test functions are products `q(t) (y, ψ, ζ)` of a time polynomial that
//! vanishes at `t = T` and a spatial mode. The shell part `ψ` is an L²
//! projection onto the shell space followed by the projection onto the
//! kernel of the rod/shell coupling constraint, so the Lagrange multiplier
//! drops out; the net rotations take the matching component `ζ`. The fluid
//! part `y` extends the interface trace of `ψ` linearly in `ρ`.
//!
//! The Eulerian term `−∫u·∂ₜy` is rewritten exactly in terms of the
//! derivative along the grid motion `s` (Reynolds transport and one
//! integration by parts), which produces the lumped inertia of the scheme,
//! the skew convection with `u − s` and the wall term `(ρ/2)∫(u·y)(s·n)`.
//! The interface correction `−(ρ/2)∫(u·y)(u·n)` of the trilinear form is
//! added as is; the flag of [`WeakResidual::new`] drops it for ablation
//! studies. The momentum balance is always the Navier–Stokes one, whatever
//! the scheme's convection flag.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid::assembly::{cell_data, face_vector, field_jet, GP};
use crate::fluid::{domain_velocity, FluidGrid};
use crate::linalg;
use crate::shell::l2_projection;
use crate::splitting::{CoupledState, Problem};

/// Number of test functions: two time profiles times four spatial modes.
pub const TEST_COUNT: usize = 8;

/// Time factor of a test function, with `s = t/T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeProfile {
    /// `(1 − s)²`.
    Decay,
    /// `s (1 − s)²`.
    Bump,
}

impl TimeProfile {
    pub const ALL: [TimeProfile; 2] = [TimeProfile::Decay, TimeProfile::Bump];

    pub fn value(self, s: f64) -> f64 {
        match self {
            TimeProfile::Decay => (1.0 - s).powi(2),
            TimeProfile::Bump => s * (1.0 - s).powi(2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeProfile::Decay => "decay",
            TimeProfile::Bump => "bump",
        }
    }
}

/// Spatial factor of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpatialMode {
    /// Fluid only: `y = (1 − ρ²) e_z`, vanishing on the wall.
    AxialFlow,
    /// Radial shell mode `sin²(πz/L)`.
    Bulge,
    /// Radial shell mode `sin²(πz/L) cos 4θ`.
    Lobes,
    /// Axial shell mode `sin(πz/L)`.
    Stretch,
}

impl SpatialMode {
    pub const ALL: [SpatialMode; 4] = [SpatialMode::AxialFlow, SpatialMode::Bulge, SpatialMode::Lobes, SpatialMode::Stretch];

    pub fn name(self) -> &'static str {
        match self {
            SpatialMode::AxialFlow => "axial_flow",
            SpatialMode::Bulge => "bulge",
            SpatialMode::Lobes => "lobes",
            SpatialMode::Stretch => "stretch",
        }
    }

    /// Shell field in `(z, r, θ)` components, or `None` for a fluid-only mode.
    fn shell_field(self, l: f64) -> Option<impl Fn(f64, f64) -> [f64; 3]> {
        if self == SpatialMode::AxialFlow {
            return None;
        }
        Some(move |z: f64, theta: f64| {
            let s = (PI * z / l).sin();
            match self {
                SpatialMode::Bulge => [0.0, s * s, 0.0],
                SpatialMode::Lobes => [0.0, s * s * (4.0 * theta).cos(), 0.0],
                _ => [s, 0.0, 0.0],
            }
        })
    }
}

/// Accumulated residual of one test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakRow {
    pub profile: TimeProfile,
    pub mode: SpatialMode,
    /// Signed residual `R(q, y, ψ, ζ)`.
    pub residual: f64,
    /// Sum of the magnitudes of all contributions.
    pub scale: f64,
}

impl WeakRow {
    /// `|R| / scale` (zero when every contribution vanishes).
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual.abs() / self.scale
        } else {
            0.0
        }
    }
}

/// Structure parts of a spatial mode and their images under the structure
/// operators, precomputed once.
struct ModeData {
    mode: SpatialMode,
    psi: Vec<f64>,
    zeta: Vec<f64>,
    m_psi: Vec<f64>,
    k_psi: Vec<f64>,
    /// `M_A T ψ`.
    ma_t_psi: Vec<f64>,
    mm_zeta: Vec<f64>,
    ks_zeta: Vec<f64>,
}

/// Online accumulator of the weak residuals along a trajectory: feed it
/// consecutive state pairs with the step's pressures.
pub struct WeakResidual<'p> {
    problem: &'p Problem,
    t_end: f64,
    interface_term: bool,
    modes: Vec<ModeData>,
    residual: [[f64; 4]; 2],
    scale: [[f64; 4]; 2],
    /// Fluid test fields on the last observed grid.
    last_tests: Option<(usize, Vec<Vec<f64>>)>,
    started: bool,
}

impl<'p> WeakResidual<'p> {
    /// `interface_term = false` drops `−(ρ/2)∫_Γ(u·y)(u·n)`.
    pub fn new(problem: &'p Problem, t_end: f64, interface_term: bool) -> Result<Self> {
        if !(t_end > 0.0) {
            return Err(Error::Config(format!("final time must be positive, got {t_end}")));
        }
        let st = &problem.structure;
        let shell = &st.shell;
        let (ne, nw) = (st.n_eta(), st.n_w());
        let projector = st.kernel_projector()?;
        let mut modes = Vec::with_capacity(4);
        for mode in SpatialMode::ALL {
            let mut x = vec![0.0; ne + nw];
            if let Some(f) = mode.shell_field(shell.params.l) {
                x[..ne].copy_from_slice(&l2_projection(&shell.basis, shell.params.r, f)?);
                projector.project(&mut x);
            }
            let psi = x[..ne].to_vec();
            let zeta = x[ne..].to_vec();
            let (ma_t_psi, mm_zeta, ks_zeta) = match &st.net {
                Some(net) => (
                    net.mass_trans.mul_vec(&st.trace.mul_vec(&psi)),
                    net.mass_rot.mul_vec(&zeta),
                    net.stiffness.mul_vec(&zeta),
                ),
                None => (Vec::new(), Vec::new(), Vec::new()),
            };
            modes.push(ModeData {
                mode,
                m_psi: shell.mass.mul_vec(&psi),
                k_psi: shell.stiffness.mul_vec(&psi),
                psi,
                zeta,
                ma_t_psi,
                mm_zeta,
                ks_zeta,
            });
        }
        Ok(Self {
            problem,
            t_end,
            interface_term,
            modes,
            residual: [[0.0; 4]; 2],
            scale: [[0.0; 4]; 2],
            last_tests: None,
            started: false,
        })
    }

    /// Shell and net-rotation parts `(ψ, ζ)` of a spatial mode.
    pub fn structure_test(&self, mode: SpatialMode) -> (&[f64], &[f64]) {
        let m = &self.modes[mode as usize];
        (&m.psi, &m.zeta)
    }

    /// Nodal fluid test fields of the four modes on the domain of `s`.
    pub fn fluid_tests(&self, s: &CoupledState) -> Vec<Vec<f64>> {
        let grid = s.grid();
        let c = grid.cyl;
        let n = grid.n_nodes();
        let trace = self.problem.wall_trace(&s.boundary, &s.preimages);
        self.modes
            .iter()
            .map(|m| {
                let mut y = vec![0.0; 3 * n];
                if m.mode == SpatialMode::AxialFlow {
                    for node in 0..n {
                        let (_, j, _) = grid.ijk(node);
                        let r = j as f64 / c.n_rho as f64;
                        y[3 * node + 2] = 1.0 - r * r;
                    }
                    return y;
                }
                let tr = trace.mul_vec(&m.psi);
                for i in 0..=c.n_z {
                    for j in 1..=c.n_rho {
                        let r = j as f64 / c.n_rho as f64;
                        for k in 0..c.n_theta {
                            let node = grid.node(i, j, k);
                            let w = i * c.n_theta + k;
                            for comp in 0..3 {
                                y[3 * node + comp] = r * tr[3 * w + comp];
                            }
                        }
                    }
                }
                y
            })
            .collect()
    }

    fn check(&self, s: &CoupledState) -> Result<()> {
        let st = &self.problem.structure;
        st.check_state(&s.structure)?;
        let c = self.problem.cyl;
        let n = (c.n_z + 1) * (1 + c.n_rho * c.n_theta);
        if s.fluid.u.len() != 3 * n || s.fluid.p.len() != n {
            return Err(Error::Dimension(format!(
                "fluid state has {} velocity and {} pressure entries, expected {} and {n}",
                s.fluid.u.len(),
                s.fluid.p.len(),
                3 * n
            )));
        }
        if s.boundary.cyl != c {
            return Err(Error::Dimension("state domain does not match the problem grid".into()));
        }
        Ok(())
    }

    /// Adds the contributions of the step `old → new` with slab-averaged
    /// pressures `(p_in, p_out)`.
    pub fn observe(&mut self, old: &CoupledState, new: &CoupledState, p_in: f64, p_out: f64) -> Result<()> {
        self.check(old)?;
        self.check(new)?;
        let dt = new.t - old.t;
        if !(dt > 0.0) {
            return Err(Error::Dimension(format!("trajectory times must increase ({} -> {})", old.t, new.t)));
        }
        let q_old: Vec<f64> = TimeProfile::ALL.iter().map(|p| p.value(old.t / self.t_end)).collect();
        let q_new: Vec<f64> = TimeProfile::ALL.iter().map(|p| p.value(new.t / self.t_end)).collect();
        let fluid = self.problem.fluid;

        let y_old = match self.last_tests.take() {
            Some((n, y)) if n == old.n => y,
            _ => self.fluid_tests(old),
        };
        let y_new = self.fluid_tests(new);
        let so = &old.structure;

        // Structure momentum at the old level, shared by the initial term.
        let structure_momentum: Vec<f64> = self
            .modes
            .iter()
            .map(|m| {
                let mut v = linalg::dot(&m.m_psi, &so.v);
                if !m.ma_t_psi.is_empty() {
                    v += linalg::dot(&m.ma_t_psi, &so.k) + linalg::dot(&m.mm_zeta, &so.z);
                }
                v
            })
            .collect();

        let (old_grid, new_grid) = (old.grid(), new.grid());
        let w_old = old_grid.lumped_weights();
        let w_new = new_grid.lumped_weights();

        let mut fluid_momentum = vec![0.0; 4];
        let mut spatial: Vec<Vec<f64>> = vec![Vec::new(); 4];
        if let Some(fp) = &fluid {
            let rho = fp.rho;
            let u_old = &old.fluid.u;
            let u_new = &new.fluid.u;
            for (m, ym) in y_old.iter().enumerate() {
                fluid_momentum[m] = rho * weighted_dot(&w_old, u_old, ym);
            }
            let s = domain_velocity(&old_grid, &new_grid, dt);
            let (face_in, face_out) = (face_vector(&new_grid, false), face_vector(&new_grid, true));
            let bulk = bulk_terms(&new_grid, u_new, &new.fluid.p, &s, &y_new, rho, fp.mu);
            let wall = wall_terms(&new_grid, u_new, &s, &y_new, rho);
            for m in 0..4 {
                let y = &y_new[m];
                let load: f64 = (0..new_grid.n_nodes())
                    .map(|node| (p_in * face_in[node] - p_out * face_out[node]) * y[3 * node + 2])
                    .sum();
                let mut terms = vec![bulk[m][0], bulk[m][1], -bulk[m][2], wall[m][0], -load];
                if self.interface_term {
                    terms.push(-wall[m][1]);
                }
                spatial[m] = terms;
            }
            for (p, _) in TimeProfile::ALL.iter().enumerate() {
                for m in 0..4 {
                    let (y0, y1) = (&y_old[m], &y_new[m]);
                    let mut time_diff = 0.0;
                    let mut geometric = 0.0;
                    for node in 0..w_old.len() {
                        let g = (w_old[node] * w_new[node]).sqrt();
                        for c in 0..3 {
                            let i = 3 * node + c;
                            time_diff += w_old[node] * u_old[i] * (q_new[p] * y1[i] - q_old[p] * y0[i]);
                            geometric += (g - w_old[node]) * u_old[i] * y1[i];
                        }
                    }
                    self.add(p, m, -rho * time_diff);
                    self.add(p, m, -rho * q_new[p] * geometric);
                }
            }
        }

        let sn = &new.structure;
        for (m, md) in self.modes.iter().enumerate() {
            let mut terms = vec![linalg::dot(&md.k_psi, &sn.eta)];
            if !md.ks_zeta.is_empty() {
                terms.push(linalg::dot(&md.ks_zeta, &sn.w));
            }
            spatial[m].extend(terms);
        }

        for p in 0..2 {
            if !self.started {
                for m in 0..4 {
                    self.add(p, m, -q_old[p] * (fluid_momentum[m] + structure_momentum[m]));
                }
            }
            for m in 0..4 {
                self.add(p, m, -(q_new[p] - q_old[p]) * structure_momentum[m]);
                for &term in &spatial[m] {
                    self.add(p, m, dt * q_new[p] * term);
                }
            }
        }
        self.started = true;
        self.last_tests = Some((new.n, y_new));
        Ok(())
    }

    fn add(&mut self, p: usize, m: usize, v: f64) {
        self.residual[p][m] += v;
        self.scale[p][m] += v.abs();
    }

    /// One row per test function, time profile major.
    pub fn rows(&self) -> Vec<WeakRow> {
        let mut out = Vec::with_capacity(TEST_COUNT);
        for (p, profile) in TimeProfile::ALL.iter().enumerate() {
            for (m, mode) in SpatialMode::ALL.iter().enumerate() {
                out.push(WeakRow {
                    profile: *profile,
                    mode: *mode,
                    residual: self.residual[p][m],
                    scale: self.scale[p][m],
                });
            }
        }
        out
    }
}

fn weighted_dot(w: &[f64], u: &[f64], y: &[f64]) -> f64 {
    w.iter()
        .enumerate()
        .map(|(n, wn)| wn * (u[3 * n] * y[3 * n] + u[3 * n + 1] * y[3 * n + 1] + u[3 * n + 2] * y[3 * n + 2]))
        .sum()
}

/// Per mode: `[2μ∫D(u):D(y), (ρ/2)∫((β·∇)u·y − (β·∇)y·u), ∫p ∇·y]` with
/// `β = u − s`. Cell contributions are summed in cell order so the result
/// does not depend on the thread count.
fn bulk_terms(grid: &FluidGrid, u: &[f64], p: &[f64], s: &[f64], ys: &[Vec<f64>], rho: f64, mu: f64) -> Vec<[f64; 3]> {
    use rayon::prelude::*;
    let cells = cell_data(grid);
    let beta = linalg::sub(u, s);
    let per_cell: Vec<Vec<[f64; 3]>> = cells
        .par_iter()
        .map(|cell| {
            let mut acc = vec![[0.0; 3]; ys.len()];
            for q in &cell.quad {
                let (uv, ug) = field_jet(q, &cell.nodes, u);
                let (bv, _) = field_jet(q, &cell.nodes, &beta);
                let pv: f64 = (0..8).map(|a| q.phi[a] * p[cell.nodes[a]]).sum();
                for (m, y) in ys.iter().enumerate() {
                    let (yv, yg) = field_jet(q, &cell.nodes, y);
                    let mut dd = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            let du = 0.5 * (ug[a][b] + ug[b][a]);
                            let dy = 0.5 * (yg[a][b] + yg[b][a]);
                            dd += du * dy;
                        }
                    }
                    let mut conv = 0.0;
                    for a in 0..3 {
                        let bu: f64 = (0..3).map(|b| bv[b] * ug[a][b]).sum();
                        let by: f64 = (0..3).map(|b| bv[b] * yg[a][b]).sum();
                        conv += bu * yv[a] - by * uv[a];
                    }
                    let div = yg[0][0] + yg[1][1] + yg[2][2];
                    acc[m][0] += q.w * 2.0 * mu * dd;
                    acc[m][1] += q.w * 0.5 * rho * conv;
                    acc[m][2] += q.w * pv * div;
                }
            }
            acc
        })
        .collect();
    let mut out = vec![[0.0; 3]; ys.len()];
    for cell in per_cell {
        for (o, c) in out.iter_mut().zip(cell) {
            for t in 0..3 {
                o[t] += c[t];
            }
        }
    }
    out
}

/// Per mode: `[(ρ/2)∫_Γ(u·y)(s·n), (ρ/2)∫_Γ(u·y)(u·n)]` over the lateral
/// wall, 2×2 Gauss points per wall face.
fn wall_terms(grid: &FluidGrid, u: &[f64], s: &[f64], ys: &[Vec<f64>], rho: f64) -> Vec<[f64; 2]> {
    let c = grid.cyl;
    let (dz, dth) = (c.dz(), c.dtheta());
    let j = c.n_rho;
    let mut out = vec![[0.0; 2]; ys.len()];
    for i in 0..c.n_z {
        for k in 0..c.n_theta {
            let nodes = [grid.node(i, j, k), grid.node(i + 1, j, k), grid.node(i, j, k + 1), grid.node(i + 1, j, k + 1)];
            let a = [grid.radius(i, k), grid.radius(i + 1, k), grid.radius(i, k + 1), grid.radius(i + 1, k + 1)];
            for &zh in &GP {
                for &th in &GP {
                    let phi = [(1.0 - zh) * (1.0 - th), zh * (1.0 - th), (1.0 - zh) * th, zh * th];
                    let av: f64 = phi.iter().zip(&a).map(|(f, a)| f * a).sum();
                    let a_z = ((1.0 - th) * (a[1] - a[0]) + th * (a[3] - a[2])) / dz;
                    let a_t = ((1.0 - zh) * (a[2] - a[0]) + zh * (a[3] - a[1])) / dth;
                    let theta = c.theta_at(k) + th * dth;
                    let (ct, st) = (theta.cos(), theta.sin());
                    // n dA = (a e_r − a_θ e_θ − a a_z e_z) dz dθ.
                    let w = 0.25 * dz * dth;
                    let n = [
                        w * (av * ct + a_t * st),
                        w * (av * st - a_t * ct),
                        -w * av * a_z,
                    ];
                    let interp = |f: &[f64]| -> [f64; 3] {
                        let mut v = [0.0; 3];
                        for (q, node) in nodes.iter().enumerate() {
                            for comp in 0..3 {
                                v[comp] += phi[q] * f[3 * node + comp];
                            }
                        }
                        v
                    };
                    let (uv, sv) = (interp(u), interp(s));
                    let un = uv[0] * n[0] + uv[1] * n[1] + uv[2] * n[2];
                    let sn = sv[0] * n[0] + sv[1] * n[1] + sv[2] * n[2];
                    for (o, y) in out.iter_mut().zip(ys) {
                        let yv = interp(y);
                        let uy = uv[0] * yv[0] + uv[1] * yv[1] + uv[2] * yv[2];
                        o[0] += 0.5 * rho * uy * sn;
                        o[1] += 0.5 * rho * uy * un;
                    }
                }
            }
        }
    }
    out
}

/// Weak residuals of a whole trajectory; `pressures[n]` are the slab
/// averages of the step `n → n + 1`.
pub fn weak_residual(
    problem: &Problem,
    trajectory: &[CoupledState],
    pressures: &[(f64, f64)],
    t_end: f64,
    interface_term: bool,
) -> Result<Vec<WeakRow>> {
    if trajectory.len() < 2 {
        return Err(Error::Dimension("a trajectory needs at least two time levels".into()));
    }
    if pressures.len() != trajectory.len() - 1 {
        return Err(Error::Dimension(format!(
            "{} pressure pairs for {} steps",
            pressures.len(),
            trajectory.len() - 1
        )));
    }
    let mut acc = WeakResidual::new(problem, t_end, interface_term)?;
    for (pair, &(p_in, p_out)) in trajectory.windows(2).zip(pressures) {
        acc.observe(&pair[0], &pair[1], p_in, p_out)?;
    }
    Ok(acc.rows())
}

#[derive(Serialize)]
struct CsvRow {
    profile: &'static str,
    mode: &'static str,
    residual: f64,
    scale: f64,
    relative: f64,
}

/// Writes `profile,mode,residual,scale,relative` rows.
pub fn write_report(path: &Path, rows: &[WeakRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(CsvRow {
            profile: r.profile.name(),
            mode: r.mode.name(),
            residual: r.residual,
            scale: r.scale,
            relative: r.relative(),
        })?;
    }
    w.flush()?;
    Ok(())
}
