//! Shell plus net as one constrained structure, and its backward-Euler
//! substep.
//!
//! The net displacement is eliminated through the trace `d = T η`, so the
//! unknowns of a structure substep are the shell coefficients `η`, the net
//! rotations `w` and the constraint multipliers `p`.

use crate::error::{Error, Result};
use crate::geometry::{e_r, e_theta, E_Z};
use crate::linalg::{self, minres, SparseLu, SparseMatrix, Triplets};
use crate::net::NetModel;
use crate::shell::ShellModel;

/// Maps shell coefficients to Cartesian displacements at surface points
/// `(z, θ)`: `η_z e_z + η_r e_r(θ) + R η_θ e_θ(θ)` (3 rows per point).
pub fn trace_operator(shell: &ShellModel, points: &[(f64, f64)]) -> SparseMatrix {
    let eval = shell.basis.evaluation_matrix(points);
    let mut t = Triplets::new(3 * points.len(), shell.n_dof());
    let r = shell.params.r;
    eval.for_each(|row, col, v| {
        let (p, c) = (row / 3, row % 3);
        let th = points[p].1;
        let dir = match c {
            0 => E_Z,
            1 => e_r(th),
            _ => {
                let e = e_theta(th);
                [r * e[0], r * e[1], r * e[2]]
            }
        };
        for (i, di) in dir.iter().enumerate() {
            t.push(3 * p + i, col, di * v);
        }
    });
    t.build()
}

/// Velocity of the material wall point that currently sits at boundary grid
/// node `j`: `v_z e_z + v_r e_r(θ̃) + (R + η̃) v_θ e_θ(θ̃)`, evaluated at the
/// preimage `(z, θ)` of the node. Rows are 3 per node.
pub fn interface_trace(
    shell: &ShellModel,
    preimages: &[(f64, f64)],
    current_theta: &[f64],
    current_radius: &[f64],
) -> SparseMatrix {
    let eval = shell.basis.evaluation_matrix(preimages);
    let mut t = Triplets::new(3 * preimages.len(), shell.n_dof());
    eval.for_each(|row, col, v| {
        let (p, c) = (row / 3, row % 3);
        let th = current_theta[p];
        let dir = match c {
            0 => E_Z,
            1 => e_r(th),
            _ => {
                let e = e_theta(th);
                let a = current_radius[p];
                [a * e[0], a * e[1], a * e[2]]
            }
        };
        for (i, di) in dir.iter().enumerate() {
            t.push(3 * p + i, col, di * v);
        }
    });
    t.build()
}

/// Interface velocity samples for a shell velocity field at reference grid
/// points (no boundary motion): `v_z e_z + v_r e_r + R v_θ e_θ`.
pub fn shell_to_interface(shell: &ShellModel, v: &[f64], points: &[(f64, f64)]) -> Vec<[f64; 3]> {
    let u = trace_operator(shell, points).mul_vec(v);
    u.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Shell plus optional net with the shell-to-net trace.
#[derive(Debug, Clone)]
pub struct StructureModel {
    pub shell: ShellModel,
    pub net: Option<NetModel>,
    /// `T`: shell coefficients → net nodal displacements.
    pub trace: SparseMatrix,
    /// `B_d T`.
    constraint_eta: SparseMatrix,
    /// `Tᵀ M_A T`.
    trans_mass_pulled: SparseMatrix,
}

/// See [`StructureModel::kernel_projector`].
#[derive(Debug, Clone)]
pub struct KernelProjector(Option<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)>);

impl KernelProjector {
    /// Projects the stacked vector `(η, w)` in place.
    pub fn project(&self, x: &mut [f64]) {
        if let Some((c, pinv)) = &self.0 {
            let xv = nalgebra::DVector::from_column_slice(x);
            let corr = c.transpose() * (pinv * (c * &xv));
            for (xi, ci) in x.iter_mut().zip(corr.iter()) {
                *xi -= ci;
            }
        }
    }
}

/// Full structure state. `d = T η` is not stored.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StructureState {
    pub eta: Vec<f64>,
    /// Shell velocity.
    pub v: Vec<f64>,
    /// Net rotation.
    pub w: Vec<f64>,
    /// Net translational velocity.
    pub k: Vec<f64>,
    /// Net rotational velocity.
    pub z: Vec<f64>,
    /// Constraint multipliers (contact forces) of the last substep.
    pub p: Vec<f64>,
}

/// Energy split of a structure state (all quadratic forms taken in full,
/// without the factor ½).
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct StructureEnergy {
    pub shell_kinetic: f64,
    pub shell_elastic: f64,
    pub net_translational: f64,
    pub net_rotational: f64,
    pub net_elastic: f64,
}

impl StructureEnergy {
    pub fn total(&self) -> f64 {
        self.shell_kinetic + self.shell_elastic + self.net_translational + self.net_rotational + self.net_elastic
    }
}

/// Numerical dissipation produced by one backward-Euler structure substep.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct StructureDissipation {
    /// `ρ_K h ‖δv‖² + a_K(δη, δη)`.
    pub shell: f64,
    /// `ρ_S ‖δk‖²_a`.
    pub net_k: f64,
    /// `ρ_S ‖δz‖²_m + a_S(δw, δw)`.
    pub net_z: f64,
}

impl StructureDissipation {
    pub fn total(&self) -> f64 {
        self.shell + self.net_k + self.net_z
    }
}

impl StructureModel {
    pub fn new(shell: ShellModel, net: Option<NetModel>) -> Self {
        let net = net.filter(|n| !n.elements.is_empty());
        let (trace, constraint_eta, trans_mass_pulled) = match &net {
            Some(n) => {
                let pts: Vec<(f64, f64)> = n.nodes.iter().map(|p| (p.z, p.theta)).collect();
                let t = trace_operator(&shell, &pts);
                let bt = n.constraint_d.matmul(&t);
                let mt = n.mass_trans.congruence(&t);
                (t, bt, mt)
            }
            None => (
                SparseMatrix::zeros(0, shell.n_dof()),
                SparseMatrix::zeros(0, shell.n_dof()),
                SparseMatrix::zeros(shell.n_dof(), shell.n_dof()),
            ),
        };
        Self {
            shell,
            net,
            trace,
            constraint_eta,
            trans_mass_pulled,
        }
    }

    pub fn n_eta(&self) -> usize {
        self.shell.n_dof()
    }

    pub fn n_w(&self) -> usize {
        self.net.as_ref().map_or(0, |n| n.n_dof())
    }

    pub fn n_p(&self) -> usize {
        self.net.as_ref().map_or(0, |n| n.n_constraints())
    }

    pub fn zero_state(&self) -> StructureState {
        StructureState {
            eta: vec![0.0; self.n_eta()],
            v: vec![0.0; self.n_eta()],
            w: vec![0.0; self.n_w()],
            k: vec![0.0; self.n_w()],
            z: vec![0.0; self.n_w()],
            p: vec![0.0; self.n_p()],
        }
    }

    /// Net displacement `d = T η`.
    pub fn net_displacement(&self, eta: &[f64]) -> Vec<f64> {
        self.trace.mul_vec(eta)
    }

    /// Constraint residual `B(Tη, w)`.
    pub fn constraint_residual(&self, eta: &[f64], w: &[f64]) -> Vec<f64> {
        match &self.net {
            Some(n) => {
                let mut r = self.constraint_eta.mul_vec(eta);
                n.constraint_w.mul_vec_acc(w, 1.0, &mut r);
                r
            }
            None => Vec::new(),
        }
    }

    /// Constraint operator `[B_d T, B_w]` on `(η, w)`.
    pub fn constraint_matrix(&self) -> SparseMatrix {
        let mut t = Triplets::new(self.n_p(), self.n_eta() + self.n_w());
        if let Some(n) = &self.net {
            t.add_block(0, 0, &self.constraint_eta, 1.0);
            t.add_block(0, self.n_eta(), &n.constraint_w, 1.0);
        }
        t.build()
    }

    /// Euclidean projection of `(η, w)` onto the kernel of the constraint,
    /// `x − Cᵀ(CCᵀ)⁺Cx`; the identity without a net.
    pub fn kernel_projector(&self) -> Result<KernelProjector> {
        if self.n_p() == 0 {
            return Ok(KernelProjector(None));
        }
        let c = self.constraint_matrix().to_dense();
        let pinv = (&c * c.transpose())
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Singular(e.to_string()))?;
        Ok(KernelProjector(Some((c, pinv))))
    }

    pub fn energy(&self, s: &StructureState) -> StructureEnergy {
        let mut e = StructureEnergy {
            shell_kinetic: self.shell.kinetic_energy(&s.v),
            shell_elastic: self.shell.elastic_energy(&s.eta),
            ..Default::default()
        };
        if let Some(n) = &self.net {
            e.net_translational = n.mass_trans.quad(&s.k);
            e.net_rotational = n.mass_rot.quad(&s.z);
            e.net_elastic = n.elastic_energy(&s.w);
        }
        e
    }

    pub fn dissipation(&self, old: &StructureState, new: &StructureState) -> StructureDissipation {
        let dv = linalg::sub(&new.v, &old.v);
        let de = linalg::sub(&new.eta, &old.eta);
        let mut d = StructureDissipation {
            shell: self.shell.kinetic_energy(&dv) + self.shell.elastic_energy(&de),
            ..Default::default()
        };
        if let Some(n) = &self.net {
            d.net_k = n.mass_trans.quad(&linalg::sub(&new.k, &old.k));
            d.net_z = n.mass_rot.quad(&linalg::sub(&new.z, &old.z))
                + n.elastic_energy(&linalg::sub(&new.w, &old.w));
        }
        d
    }

    /// Checks that the previous state is admissible for a substep.
    pub fn check_state(&self, s: &StructureState) -> Result<()> {
        let dims = [
            (s.eta.len(), self.n_eta(), "eta"),
            (s.v.len(), self.n_eta(), "v"),
            (s.w.len(), self.n_w(), "w"),
            (s.k.len(), self.n_w(), "k"),
            (s.z.len(), self.n_w(), "z"),
        ];
        for (got, want, name) in dims {
            if got != want {
                return Err(Error::Dimension(format!("{name} has length {got}, expected {want}")));
            }
        }
        let r = linalg::norm_inf(&self.constraint_residual(&s.eta, &s.w));
        let scale = linalg::norm_inf(&s.eta).max(linalg::norm_inf(&s.w)).max(1.0);
        if r > 1e-8 * scale {
            return Err(Error::State(format!(
                "previous structure state violates the rod constraint by {r:.3e}"
            )));
        }
        Ok(())
    }

    /// Builds and factors the substep operator for a time step `dt`.
    pub fn build_system(&self, dt: f64) -> Result<StructureSystem> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let (ne, nw, np) = (self.n_eta(), self.n_w(), self.n_p());
        let n = ne + nw + np;
        let inv2 = 1.0 / (dt * dt);
        let mut t = Triplets::new(n, n);
        t.add_block(0, 0, &self.shell.mass, inv2);
        t.add_block(0, 0, &self.shell.stiffness, 1.0);
        if let Some(net) = &self.net {
            t.add_block(0, 0, &self.trans_mass_pulled, inv2);
            t.add_block(ne, ne, &net.mass_rot, inv2);
            t.add_block(ne, ne, &net.stiffness, 1.0);
            t.add_block(ne + nw, 0, &self.constraint_eta, 1.0);
            t.add_block_transposed(0, ne + nw, &self.constraint_eta, 1.0);
            t.add_block(ne + nw, ne, &net.constraint_w, 1.0);
            t.add_block_transposed(ne, ne + nw, &net.constraint_w, 1.0);
        }
        let matrix = t.build();
        let lu = match SparseLu::new(&matrix) {
            Ok(lu) => Some(lu),
            Err(e) => {
                log::warn!("structure LU failed ({e}); falling back to MINRES");
                None
            }
        };
        Ok(StructureSystem {
            dt,
            matrix,
            lu,
            ne,
            nw,
            np,
        })
    }

    /// One backward-Euler substep from `prev` with optional external loads
    /// (`f_eta` on the shell coefficients, `f_w` on the rotations).
    pub fn substep(
        &self,
        sys: &StructureSystem,
        prev: &StructureState,
        f_eta: Option<&[f64]>,
        f_w: Option<&[f64]>,
    ) -> Result<StructureState> {
        self.check_state(prev)?;
        let dt = sys.dt;
        let (ne, nw) = (sys.ne, sys.nw);
        let mut rhs = vec![0.0; sys.dim()];
        let a: Vec<f64> = prev
            .eta
            .iter()
            .zip(&prev.v)
            .map(|(e, v)| e / (dt * dt) + v / dt)
            .collect();
        self.shell.mass.mul_vec_acc(&a, 1.0, &mut rhs[..ne]);
        if let Some(net) = &self.net {
            let d = self.trace.mul_vec(&prev.eta);
            let b: Vec<f64> = d.iter().zip(&prev.k).map(|(d, k)| d / (dt * dt) + k / dt).collect();
            let mb = net.mass_trans.mul_vec(&b);
            let tb = self.trace.mul_vec_transposed(&mb);
            linalg::axpy(1.0, &tb, &mut rhs[..ne]);
            let c: Vec<f64> = prev.w.iter().zip(&prev.z).map(|(w, z)| w / (dt * dt) + z / dt).collect();
            net.mass_rot.mul_vec_acc(&c, 1.0, &mut rhs[ne..ne + nw]);
        }
        if let Some(f) = f_eta {
            linalg::axpy(1.0, f, &mut rhs[..ne]);
        }
        if let Some(f) = f_w {
            linalg::axpy(1.0, f, &mut rhs[ne..ne + nw]);
        }
        let x = sys.solve(&rhs)?;
        let eta = x[..ne].to_vec();
        let w = x[ne..ne + nw].to_vec();
        let p = x[ne + nw..].to_vec();
        let v: Vec<f64> = eta.iter().zip(&prev.eta).map(|(a, b)| (a - b) / dt).collect();
        let z: Vec<f64> = w.iter().zip(&prev.w).map(|(a, b)| (a - b) / dt).collect();
        let k = if self.net.is_some() { self.trace.mul_vec(&v) } else { Vec::new() };
        Ok(StructureState { eta, v, w, k, z, p })
    }
}

/// Factored structure substep operator for a fixed time step.
pub struct StructureSystem {
    pub dt: f64,
    pub matrix: SparseMatrix,
    lu: Option<SparseLu>,
    ne: usize,
    nw: usize,
    np: usize,
}

impl StructureSystem {
    pub fn dim(&self) -> usize {
        self.ne + self.nw + self.np
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if let Some(lu) = &self.lu {
            let mut x = lu.solve(rhs)?;
            // One step of iterative refinement keeps the energy identity at
            // round-off level for badly scaled blocks.
            let r = linalg::sub(rhs, &self.matrix.mul_vec(&x));
            let dx = lu.solve(&r)?;
            linalg::axpy(1.0, &dx, &mut x);
            return Ok(x);
        }
        self.solve_minres(rhs)
    }

    /// Block-diagonal preconditioned MINRES: the primal blocks use their
    /// diagonals, the multiplier block the diagonal of `B D⁻¹ Bᵀ`.
    pub fn solve_minres(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n1 = self.ne + self.nw;
        let diag = self.matrix.diagonal();
        let mut pre: Vec<f64> = diag.iter().take(n1).map(|d| 1.0 / d.abs().max(1e-300)).collect();
        let mut schur = vec![0.0; self.np];
        self.matrix.for_each(|i, j, v| {
            if i >= n1 && j < n1 {
                schur[i - n1] += v * v * pre[j];
            }
        });
        pre.extend(schur.iter().map(|s| 1.0 / s.max(1e-300)));
        let (x, rep) = minres(
            |x| self.matrix.mul_vec(x),
            |x| x.iter().zip(&pre).map(|(a, b)| a * b).collect(),
            rhs,
            1e-13,
            20 * self.dim(),
        );
        if !rep.converged {
            return Err(Error::Solver(format!(
                "structure MINRES stopped at relative residual {:.3e} after {} iterations",
                rep.relative_residual, rep.iterations
            )));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetTopology, RodProperties};
    use crate::shell::ShellParams;
    use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

    fn shell(nz: usize, nt: usize) -> ShellModel {
        ShellModel::new(
            ShellParams {
                h: 0.1,
                lambda: 1.0,
                mu: 1.0,
                rho_k: 1.0,
                eps_k: 1e-6 * 1e-3,
                r: 1.0,
                l: 2.0,
            },
            nz,
            nt,
        )
        .unwrap()
    }

    fn net_model(n: usize, nodes: usize) -> NetModel {
        let props = RodProperties {
            area: 0.01,
            h: Matrix3::from_diagonal(&Vector3::new(0.2, 0.1, 0.1)),
            m: Matrix3::from_diagonal(&Vector3::new(0.02, 0.01, 0.01)),
        };
        NetModel::new(&NetTopology::zigzag_ring(2.0, n, nodes, props), 1.0, 2.0, 1.0).unwrap()
    }

    fn kick(model: &StructureModel) -> StructureState {
        let mut s = model.zero_state();
        for (i, v) in s.v.iter_mut().enumerate() {
            *v = ((i * 7 % 13) as f64 / 13.0 - 0.5) * 0.1;
        }
        s.k = model.trace.mul_vec(&s.v);
        for (i, z) in s.z.iter_mut().enumerate() {
            *z = ((i * 5 % 11) as f64 / 11.0 - 0.5) * 0.1;
        }
        s
    }

    #[test]
    fn trace_reproduces_pointwise_values() {
        let sh = shell(8, 8);
        let pts = [(0.3, 0.1), (1.0, 2.0), (1.7, 5.5)];
        let t = trace_operator(&sh, &pts);
        let c: Vec<f64> = (0..sh.n_dof()).map(|i| (i as f64 * 0.1).sin()).collect();
        let d = t.mul_vec(&c);
        for (p, &(z, th)) in pts.iter().enumerate() {
            let val = sh.basis.value(&c, z, th);
            let (er, et) = (e_r(th), e_theta(th));
            for i in 0..3 {
                let expect = val[0] * E_Z[i] + val[1] * er[i] + sh.params.r * val[2] * et[i];
                assert!((d[3 * p + i] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn radial_velocity_maps_to_radial_vector() {
        let sh = shell(8, 8);
        let c: Vec<f64> = sh
            .basis
            .free_indices()
            .iter()
            .map(|&f| if f / 64 == 1 { 0.25 } else { 0.0 })
            .collect();
        for (z, th) in [(1.0, 0.0), (0.9, 1.0)] {
            let u = shell_to_interface(&sh, &c, &[(z, th)])[0];
            let er = e_r(th);
            for i in 0..3 {
                assert!((u[i] - 0.25 * er[i]).abs() < 1e-13);
            }
        }
        let zero = vec![0.0; sh.n_dof()];
        assert_eq!(shell_to_interface(&sh, &zero, &[(1.0, 1.0)])[0], [0.0; 3]);
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let model = StructureModel::new(shell(8, 8), Some(net_model(8, 3)));
        let sys = model.build_system(0.01).unwrap();
        let s0 = model.zero_state();
        let s1 = model.substep(&sys, &s0, None, None).unwrap();
        assert!(linalg::norm_inf(&s1.eta) == 0.0 && linalg::norm_inf(&s1.w) == 0.0);
    }

    #[test]
    fn energy_equality_holds_per_substep() {
        let model = StructureModel::new(shell(8, 8), Some(net_model(8, 3)));
        let sys = model.build_system(0.02).unwrap();
        assert!(sys.matrix.asymmetry() < 1e-12);
        let mut s = kick(&model);
        let e0 = model.energy(&s).total();
        for _ in 0..20 {
            let next = model.substep(&sys, &s, None, None).unwrap();
            let lhs = model.energy(&next).total() + model.dissipation(&s, &next).total();
            let rhs = model.energy(&s).total();
            assert!((lhs - rhs).abs() <= 1e-9 * e0, "{lhs} vs {rhs}");
            let r = linalg::norm_inf(&model.constraint_residual(&next.eta, &next.w));
            assert!(r < 1e-10, "constraint residual {r}");
            s = next;
        }
    }

    #[test]
    fn no_net_reduces_to_shell() {
        let sh = shell(7, 8);
        let model = StructureModel::new(sh.clone(), None);
        let sys = model.build_system(0.05).unwrap();
        let s0 = kick(&model);
        let s1 = model.substep(&sys, &s0, None, None).unwrap();
        // Shell-only reference: (M/Δt² + K) η = M(η/Δt² + v/Δt).
        let dt: f64 = 0.05;
        let a = sh.mass.scaled(1.0 / (dt * dt)).add_scaled(&sh.stiffness, 1.0).to_dense();
        let rhs = sh.mass.to_dense() * DVector::from_vec(linalg::scale(1.0 / dt, &s0.v));
        let eta = a.lu().solve(&rhs).unwrap();
        for i in 0..sh.n_dof() {
            assert!((eta[i] - s1.eta[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_saddle_solve() {
        let model = StructureModel::new(shell(6, 6), Some(net_model(4, 2)));
        let sys = model.build_system(0.1).unwrap();
        let s0 = kick(&model);
        let s1 = model.substep(&sys, &s0, None, None).unwrap();
        let a = sys.matrix.to_dense();
        let x = DVector::from_iterator(
            sys.dim(),
            s1.eta.iter().chain(&s1.w).chain(&s1.p).cloned(),
        );
        // Reconstruct the rhs and compare with a dense solve.
        let b = &a * &x;
        let xd = a.clone().lu().solve(&b).unwrap();
        assert!((xd - &x).amax() < 1e-9 * x.amax().max(1.0));
        let m = sys.solve_minres(b.as_slice()).unwrap();
        for i in 0..sys.dim() {
            assert!((m[i] - x[i]).abs() < 1e-6 * x.amax().max(1.0));
        }
    }

    #[test]
    fn inconsistent_previous_state_is_rejected() {
        let model = StructureModel::new(shell(6, 6), Some(net_model(4, 2)));
        let sys = model.build_system(0.1).unwrap();
        let mut s = model.zero_state();
        s.w[0] = 1.0;
        assert!(matches!(model.substep(&sys, &s, None, None), Err(Error::State(_))));
        assert!(model.build_system(0.0).is_err());
    }

    /// Orthonormal basis of the constraint kernel on `(η, w)`, dense.
    fn kernel_basis(model: &StructureModel) -> DMatrix<f64> {
        let b = model.constraint_matrix().to_dense();
        let eig = (b.transpose() * &b).symmetric_eigen();
        let top = eig.eigenvalues.max();
        let cols: Vec<_> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] < 1e-12 * top)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        DMatrix::from_columns(&cols)
    }

    #[test]
    fn manufactured_solution_converges_first_order() {
        let model = StructureModel::new(shell(6, 6), Some(net_model(4, 2)));
        let (ne, nw) = (model.n_eta(), model.n_w());
        let kb = kernel_basis(&model);
        let a = kb.column(0).into_owned() + kb.column(3) * 0.5;
        let b = kb.column(1).into_owned() - kb.column(5) * 0.3;
        // x*(t) = sin(t) a + cos(t) b lies in the constraint kernel.
        let xstar = |t: f64| &a * t.sin() + &b * t.cos();
        let xddot = |t: f64| -xstar(t);
        let xdot = |t: f64| &a * t.cos() - &b * t.sin();
        let net = model.net.as_ref().unwrap();
        let mut mass = DMatrix::zeros(ne + nw, ne + nw);
        let mut stiff = DMatrix::zeros(ne + nw, ne + nw);
        let msh = model.shell.mass.to_dense() + model.trans_mass_pulled.to_dense();
        mass.view_mut((0, 0), (ne, ne)).copy_from(&msh);
        mass.view_mut((ne, ne), (nw, nw)).copy_from(&net.mass_rot.to_dense());
        stiff.view_mut((0, 0), (ne, ne)).copy_from(&model.shell.stiffness.to_dense());
        stiff.view_mut((ne, ne), (nw, nw)).copy_from(&net.stiffness.to_dense());
        let t_end = 0.5;
        let mut errs = Vec::new();
        for steps in [20usize, 40, 80] {
            let dt = t_end / steps as f64;
            let sys = model.build_system(dt).unwrap();
            let x0 = xstar(0.0);
            let v0 = xdot(0.0);
            let mut s = model.zero_state();
            s.eta = x0.rows(0, ne).iter().cloned().collect();
            s.w = x0.rows(ne, nw).iter().cloned().collect();
            s.v = v0.rows(0, ne).iter().cloned().collect();
            s.k = model.trace.mul_vec(&s.v);
            s.z = v0.rows(ne, nw).iter().cloned().collect();
            for n in 1..=steps {
                let t = n as f64 * dt;
                let f = &mass * xddot(t) + &stiff * xstar(t);
                let (fe, fw): (Vec<f64>, Vec<f64>) =
                    (f.rows(0, ne).iter().cloned().collect(), f.rows(ne, nw).iter().cloned().collect());
                s = model.substep(&sys, &s, Some(&fe), Some(&fw)).unwrap();
            }
            let xe = xstar(t_end);
            let err = s
                .eta
                .iter()
                .chain(&s.w)
                .zip(xe.iter())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            errs.push(err);
        }
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!(r1 > 1.7 && r2 > 1.7, "errors {errs:?}");
    }
}
