//! Linearly elastic cylindrical Koiter shell on the parameter rectangle
//! `ω = (0, L) × (0, 2π)`.
//!
//! The displacement `(η_z, η_r, η_θ)` is discretized with clamped cubic
//! B-splines in z times periodic cubic B-splines in θ. Clamping (`η = 0` and
//! `∂_z η_r = 0` at both ends) is imposed by dropping end coefficients, so all
//! shell vectors and matrices live on the remaining "free" coefficients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::SurfaceDisplacement;
use crate::linalg::{SparseMatrix, Triplets};
use crate::spline::{gauss_on, ClampedCubic, LocalBasis, PeriodicCubic};

/// Component indices within a shell displacement.
pub const ZC: usize = 0;
pub const RC: usize = 1;
pub const TC: usize = 2;

/// Gauss points per direction and cell. Products of two cubics have degree 6
/// per direction, which the 4-point rule integrates exactly.
pub const SHELL_GAUSS: usize = 4;

/// Material and geometric parameters of the shell.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShellParams {
    pub h: f64,
    pub lambda: f64,
    pub mu: f64,
    pub rho_k: f64,
    pub eps_k: f64,
    pub r: f64,
    pub l: f64,
}

impl ShellParams {
    /// Default regularization coefficient `1e-6 μ h³`.
    pub fn default_eps(mu: f64, h: f64) -> f64 {
        1e-6 * mu * h * h * h
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("h", self.h > 0.0),
            ("mu", self.mu > 0.0),
            ("lambda + 2 mu", self.lambda + 2.0 * self.mu > 0.0),
            ("rho_K", self.rho_k > 0.0),
            ("eps_K", self.eps_k >= 0.0),
            ("R", self.r > 0.0),
            ("L", self.l > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::Config(format!(
                    "shell parameter {name} violates positivity"
                )));
            }
        }
        Ok(())
    }
}

/// Symmetric 2×2 tensor stored as `[[e11, e12], [e12, e22]]`.
pub type Tensor2 = [[f64; 2]; 2];

/// Elasticity tensor applied to a symmetric tensor:
/// `𝒜E = (4λμ/(λ+2μ)) tr(AᶜE) Aᶜ + 4μ AᶜEAᶜ` with `Aᶜ = diag(1, 1/R²)`.
pub fn elasticity_apply(p: &ShellParams, e: &Tensor2) -> Tensor2 {
    let ac = [1.0, 1.0 / (p.r * p.r)];
    let c1 = 4.0 * p.lambda * p.mu / (p.lambda + 2.0 * p.mu);
    let tr = ac[0] * e[0][0] + ac[1] * e[1][1];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = 4.0 * p.mu * ac[i] * e[i][j] * ac[j];
        }
        out[i][i] += c1 * tr * ac[i];
    }
    out
}

/// Frobenius product `E : F`.
#[inline]
pub fn contract(e: &Tensor2, f: &Tensor2) -> f64 {
    e[0][0] * f[0][0] + 2.0 * e[0][1] * f[0][1] + e[1][1] * f[1][1]
}

/// `𝒜E : F` without forming `𝒜E`.
#[inline]
fn elastic_pair(c1: f64, mu: f64, inv_r2: f64, e: &Tensor2, f: &Tensor2) -> f64 {
    let tre = e[0][0] + inv_r2 * e[1][1];
    let trf = f[0][0] + inv_r2 * f[1][1];
    c1 * tre * trf
        + 4.0 * mu * (e[0][0] * f[0][0] + 2.0 * inv_r2 * e[0][1] * f[0][1] + inv_r2 * inv_r2 * e[1][1] * f[1][1])
}

/// Pointwise derivatives of a displacement: for each component
/// `[value, ∂_z, ∂_θ, ∂_zz, ∂_zθ, ∂_θθ]`.
pub type Jet = [[f64; 6]; 3];

/// Change of metric `γ(η)`.
pub fn change_of_metric(r: f64, j: &Jet) -> Tensor2 {
    let g11 = j[ZC][1];
    let g12 = 0.5 * (j[ZC][2] + r * j[TC][1]);
    let g22 = r * j[TC][2] + r * j[RC][0];
    [[g11, g12], [g12, g22]]
}

/// Change of curvature `ϱ(η)`.
pub fn change_of_curvature(j: &Jet) -> Tensor2 {
    let r11 = -j[RC][3];
    let r12 = -j[RC][4] + j[TC][1];
    let r22 = -j[RC][5] + 2.0 * j[TC][2] + j[RC][0];
    [[r11, r12], [r12, r22]]
}

/// Surface Laplacian `∂_zz + R⁻² ∂_θθ` of one component.
#[inline]
pub fn surface_laplacian(r: f64, c: &[f64; 6]) -> f64 {
    c[3] + c[5] / (r * r)
}

/// Energy density (per unit parameter area, before the R weight) of the
/// stiffness form at a point: `h 𝒜γ:γ + h³/12 𝒜ϱ:ϱ + ε (|Δη_z|² + |Δη_θ|²)`.
pub fn energy_density(p: &ShellParams, j: &Jet) -> f64 {
    let g = change_of_metric(p.r, j);
    let k = change_of_curvature(j);
    let lz = surface_laplacian(p.r, &j[ZC]);
    let lt = surface_laplacian(p.r, &j[TC]);
    p.h * contract(&elasticity_apply(p, &g), &g)
        + p.h.powi(3) / 12.0 * contract(&elasticity_apply(p, &k), &k)
        + p.eps_k * (lz * lz + lt * lt)
}

/// Tensor-product spline space with clamping constraints.
#[derive(Debug, Clone)]
pub struct ShellBasis {
    pub bz: ClampedCubic,
    pub bt: PeriodicCubic,
    /// Full coefficient index of every free coefficient.
    free: Vec<usize>,
    /// Inverse of `free`.
    full_to_free: Vec<Option<usize>>,
}

impl ShellBasis {
    /// `n_z` basis functions in z (at least 5) and `n_theta` in θ (at least 4).
    pub fn new(l: f64, n_z: usize, n_theta: usize) -> Result<Self> {
        if n_z < 5 {
            return Err(Error::Config(format!(
                "shell needs at least 5 axial spline functions, got {n_z}"
            )));
        }
        if n_theta < 4 {
            return Err(Error::Config(format!(
                "shell needs at least 4 azimuthal spline functions, got {n_theta}"
            )));
        }
        let bz = ClampedCubic::new(l, n_z - 3);
        let bt = PeriodicCubic::new(std::f64::consts::TAU, n_theta);
        let per = n_z * n_theta;
        let mut free = Vec::new();
        let mut full_to_free = vec![None; 3 * per];
        for c in 0..3 {
            let drop = if c == RC { 2 } else { 1 };
            for a in drop..n_z - drop {
                for b in 0..n_theta {
                    let idx = c * per + a * n_theta + b;
                    full_to_free[idx] = Some(free.len());
                    free.push(idx);
                }
            }
        }
        Ok(Self {
            bz,
            bt,
            free,
            full_to_free,
        })
    }

    pub fn n_z(&self) -> usize {
        self.bz.n_basis()
    }

    pub fn n_theta(&self) -> usize {
        self.bt.n_basis()
    }

    pub fn n_full(&self) -> usize {
        3 * self.n_z() * self.n_theta()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    #[inline]
    pub fn full_index(&self, c: usize, a: usize, b: usize) -> usize {
        c * self.n_z() * self.n_theta() + a * self.n_theta() + b
    }

    pub fn free_index(&self, full: usize) -> Option<usize> {
        self.full_to_free[full]
    }

    /// Scatters free coefficients into a full coefficient vector.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_full()];
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = reduced[k];
        }
        full
    }

    /// Restricts a full coefficient vector to the free coefficients.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// Local bases in z and θ at a point.
    pub fn local(&self, z: f64, theta: f64) -> (LocalBasis, LocalBasis) {
        (self.bz.eval(z), self.bt.eval(theta))
    }

    /// Evaluates the tensor-product basis function `(a, b)` jet: value and
    /// derivatives `[·, ∂_z, ∂_θ, ∂_zz, ∂_zθ, ∂_θθ]`, for the 16 local
    /// functions, together with their `(a, b)` indices.
    pub fn local_jets(&self, z: f64, theta: f64) -> [(usize, usize, [f64; 6]); 16] {
        let (lz, lt) = self.local(z, theta);
        let mut out = [(0, 0, [0.0; 6]); 16];
        for i in 0..4 {
            for j in 0..4 {
                let (bz, bt) = (lz.d, lt.d);
                out[4 * i + j] = (
                    lz.first + i,
                    self.bt.index(lt.first, j),
                    [
                        bz[0][i] * bt[0][j],
                        bz[1][i] * bt[0][j],
                        bz[0][i] * bt[1][j],
                        bz[2][i] * bt[0][j],
                        bz[1][i] * bt[1][j],
                        bz[0][i] * bt[2][j],
                    ],
                )
            }
        }
        out
    }

    /// Jet of a field given by its free coefficients.
    pub fn jet(&self, reduced: &[f64], z: f64, theta: f64) -> Jet {
        let mut j = [[0.0; 6]; 3];
        for (a, b, phi) in self.local_jets(z, theta) {
            for (c, jc) in j.iter_mut().enumerate() {
                if let Some(k) = self.free_index(self.full_index(c, a, b)) {
                    let coef = reduced[k];
                    for d in 0..6 {
                        jc[d] += coef * phi[d];
                    }
                }
            }
        }
        j
    }

    /// Value `(η_z, η_r, η_θ)` at a point.
    pub fn value(&self, reduced: &[f64], z: f64, theta: f64) -> [f64; 3] {
        let j = self.jet(reduced, z, theta);
        [j[0][0], j[1][0], j[2][0]]
    }

    /// Sparse evaluation operator: row `3 p + c` gives component `c` at point `p`.
    pub fn evaluation_matrix(&self, points: &[(f64, f64)]) -> SparseMatrix {
        let mut t = Triplets::new(3 * points.len(), self.n_free());
        for (p, &(z, th)) in points.iter().enumerate() {
            for (a, b, phi) in self.local_jets(z, th) {
                for c in 0..3 {
                    if let Some(k) = self.free_index(self.full_index(c, a, b)) {
                        t.push(3 * p + c, k, phi[0]);
                    }
                }
            }
        }
        t.build()
    }

    /// Quadrature points `(z, θ, weight)` over all cells, `n` Gauss points per
    /// direction per cell.
    pub fn quadrature(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let mut q = Vec::new();
        for e in 0..self.bz.intervals() {
            let (z0, z1) = self.bz.interval_bounds(e);
            for f in 0..self.bt.intervals() {
                let (t0, t1) = self.bt.interval_bounds(f);
                for &(z, wz) in &gauss_on(z0, z1, n) {
                    for &(t, wt) in &gauss_on(t0, t1, n) {
                        q.push((z, t, wz * wt));
                    }
                }
            }
        }
        q
    }
}

/// A shell displacement (or velocity) viewed as a surface field.
pub struct ShellFieldView<'a> {
    pub basis: &'a ShellBasis,
    pub coeffs: &'a [f64],
}

impl SurfaceDisplacement for ShellFieldView<'_> {
    fn eval(&self, z: f64, theta: f64) -> [[f64; 3]; 3] {
        let j = self.basis.jet(self.coeffs, z, theta);
        [
            [j[0][0], j[1][0], j[2][0]],
            [j[0][1], j[1][1], j[2][1]],
            [j[0][2], j[1][2], j[2][2]],
        ]
    }
}

/// Assembled shell operators on the free coefficients.
#[derive(Debug, Clone)]
pub struct ShellModel {
    pub params: ShellParams,
    pub basis: ShellBasis,
    /// Stiffness `K_sh` of `⟨ℒη, ψ⟩`.
    pub stiffness: SparseMatrix,
    /// Mass `M_sh` of `ρ_K h ∫ η·ψ R`.
    pub mass: SparseMatrix,
}

impl ShellModel {
    pub fn new(params: ShellParams, n_z: usize, n_theta: usize) -> Result<Self> {
        params.validate()?;
        let basis = ShellBasis::new(params.l, n_z, n_theta)?;
        let stiffness = assemble_shell_stiffness(&params, &basis, SHELL_GAUSS)?;
        let mass = assemble_shell_mass(&params, &basis, SHELL_GAUSS)?;
        Ok(Self {
            params,
            basis,
            stiffness,
            mass,
        })
    }

    pub fn n_dof(&self) -> usize {
        self.basis.n_free()
    }

    /// Elastic form `a_K(η, η) = ηᵀ K_sh η`.
    pub fn elastic_energy(&self, eta: &[f64]) -> f64 {
        self.stiffness.quad(eta)
    }

    /// Kinetic form `vᵀ M_sh v`.
    pub fn kinetic_energy(&self, v: &[f64]) -> f64 {
        self.mass.quad(v)
    }

    pub fn view<'a>(&'a self, coeffs: &'a [f64]) -> ShellFieldView<'a> {
        ShellFieldView {
            basis: &self.basis,
            coeffs,
        }
    }
}

fn check_quadrature(n_gauss: usize) -> Result<()> {
    if n_gauss < 2 {
        return Err(Error::Config(format!(
            "{n_gauss}-point quadrature is below the cubic basis degree"
        )));
    }
    Ok(())
}

/// Linear maps from one basis function's jet to `(γ, ϱ, Δ)` for each component.
fn basis_strains(r: f64, c: usize, phi: &[f64; 6]) -> (Tensor2, Tensor2, f64) {
    let mut j: Jet = [[0.0; 6]; 3];
    j[c] = *phi;
    let lap = if c == RC { 0.0 } else { surface_laplacian(r, phi) };
    (change_of_metric(r, &j), change_of_curvature(&j), lap)
}

/// Stiffness matrix of `⟨ℒη,ψ⟩ = h∫𝒜γ(η):γ(ψ)R + h³/12∫𝒜ϱ(η):ϱ(ψ)R
/// + ε∫(Δη_zΔψ_z + Δη_θΔψ_θ)R` on the free coefficients.
pub fn assemble_shell_stiffness(
    p: &ShellParams,
    basis: &ShellBasis,
    n_gauss: usize,
) -> Result<SparseMatrix> {
    check_quadrature(n_gauss)?;
    let c1 = 4.0 * p.lambda * p.mu / (p.lambda + 2.0 * p.mu);
    let inv_r2 = 1.0 / (p.r * p.r);
    let bend = p.h.powi(3) / 12.0;
    let cells: Vec<(usize, usize)> = (0..basis.bz.intervals())
        .flat_map(|e| (0..basis.bt.intervals()).map(move |f| (e, f)))
        .collect();
    let parts: Vec<Triplets> = cells
        .par_iter()
        .map(|&(e, f)| {
            let mut t = Triplets::with_capacity(basis.n_full(), basis.n_full(), 48 * 48);
            let (z0, z1) = basis.bz.interval_bounds(e);
            let (t0, t1) = basis.bt.interval_bounds(f);
            let mut local = vec![0.0; 48 * 48];
            let mut idx = [0usize; 48];
            for &(z, wz) in &gauss_on(z0, z1, n_gauss) {
                for &(th, wt) in &gauss_on(t0, t1, n_gauss) {
                    let w = wz * wt * p.r;
                    let jets = basis.local_jets(z, th);
                    let mut strains = Vec::with_capacity(48);
                    for c in 0..3 {
                        for (q, (a, b, phi)) in jets.iter().enumerate() {
                            idx[16 * c + q] = basis.full_index(c, *a, *b);
                            strains.push(basis_strains(p.r, c, phi));
                        }
                    }
                    for (m, sm) in strains.iter().enumerate() {
                        for (n, sn) in strains.iter().enumerate().skip(m) {
                            let v = p.h * elastic_pair(c1, p.mu, inv_r2, &sm.0, &sn.0)
                                + bend * elastic_pair(c1, p.mu, inv_r2, &sm.1, &sn.1)
                                + p.eps_k * sm.2 * sn.2;
                            local[48 * m + n] += w * v;
                        }
                    }
                }
            }
            for m in 0..48 {
                for n in m..48 {
                    let v = local[48 * m + n];
                    t.push(idx[m], idx[n], v);
                    if n != m {
                        t.push(idx[n], idx[m], v);
                    }
                }
            }
            t
        })
        .collect();
    let mut all = Triplets::new(basis.n_full(), basis.n_full());
    for part in parts {
        all.append(part);
    }
    Ok(all.build().submatrix(basis.free_indices(), basis.free_indices()))
}

/// Full-coefficient mass matrix `ρ_K h ∫ η·ψ R` (before clamping).
pub fn assemble_shell_mass_full(
    p: &ShellParams,
    basis: &ShellBasis,
    n_gauss: usize,
) -> Result<SparseMatrix> {
    check_quadrature(n_gauss)?;
    let mut t = Triplets::new(basis.n_full(), basis.n_full());
    for (z, th, w) in basis.quadrature(n_gauss) {
        let jets = basis.local_jets(z, th);
        let w = w * p.rho_k * p.h * p.r;
        for (am, bm, pm) in &jets {
            for (an, bn, pn) in &jets {
                let v = w * pm[0] * pn[0];
                for c in 0..3 {
                    t.push(basis.full_index(c, *am, *bm), basis.full_index(c, *an, *bn), v);
                }
            }
        }
    }
    Ok(t.build())
}

/// Mass matrix `ρ_K h ∫ η·ψ R` on the free coefficients.
pub fn assemble_shell_mass(
    p: &ShellParams,
    basis: &ShellBasis,
    n_gauss: usize,
) -> Result<SparseMatrix> {
    Ok(assemble_shell_mass_full(p, basis, n_gauss)?
        .submatrix(basis.free_indices(), basis.free_indices()))
}

/// Unweighted `L²(ω; R)` Gram matrix of the free coefficients, per component.
pub fn l2_gram(basis: &ShellBasis, r: f64) -> SparseMatrix {
    let unit = ShellParams {
        h: 1.0,
        lambda: 0.0,
        mu: 1.0,
        rho_k: 1.0,
        eps_k: 0.0,
        r,
        l: basis.bz.length(),
    };
    assemble_shell_mass(&unit, basis, SHELL_GAUSS).expect("default rule is admissible")
}

/// Load vector `∫ f·φ_k R dz dθ` of a surface field on the free
/// coefficients.
pub fn load_vector(basis: &ShellBasis, r: f64, f: impl Fn(f64, f64) -> [f64; 3]) -> Vec<f64> {
    let mut b = vec![0.0; basis.n_free()];
    for (z, th, w) in basis.quadrature(SHELL_GAUSS) {
        let v = f(z, th);
        for (a, bb, phi) in basis.local_jets(z, th) {
            for c in 0..3 {
                if let Some(k) = basis.free_index(basis.full_index(c, a, bb)) {
                    b[k] += w * r * v[c] * phi[0];
                }
            }
        }
    }
    b
}

/// `L²(ω)` projection of a surface field onto the clamped spline space.
pub fn l2_projection(basis: &ShellBasis, r: f64, f: impl Fn(f64, f64) -> [f64; 3]) -> Result<Vec<f64>> {
    let g = l2_gram(basis, r);
    crate::linalg::SparseLu::new(&g)?.solve(&load_vector(basis, r, f))
}

/// `H²(ω)` Gram matrix (values plus all first and second derivatives).
pub fn h2_gram(basis: &ShellBasis) -> SparseMatrix {
    let mut t = Triplets::new(basis.n_full(), basis.n_full());
    for (z, th, w) in basis.quadrature(SHELL_GAUSS) {
        let jets = basis.local_jets(z, th);
        for (am, bm, pm) in &jets {
            for (an, bn, pn) in &jets {
                let v = w * (0..6).map(|d| pm[d] * pn[d]).sum::<f64>();
                for c in 0..3 {
                    t.push(basis.full_index(c, *am, *bm), basis.full_index(c, *an, *bn), v);
                }
            }
        }
    }
    t.build().submatrix(basis.free_indices(), basis.free_indices())
}

/// Coercivity report: the smallest eigenvalue of `K_sh` and the smallest
/// generalized eigenvalue of `K_sh` relative to the `H²` Gram matrix.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CoercivityReport {
    pub min_eigenvalue: f64,
    pub h2_constant: f64,
}

pub fn coercivity(model: &ShellModel) -> Result<CoercivityReport> {
    let k = model.stiffness.to_dense();
    let (lo, _) = crate::linalg::symmetric_eigen_range(&k);
    let g = h2_gram(&model.basis).to_dense();
    let chol = nalgebra::Cholesky::new(g)
        .ok_or_else(|| Error::Singular("H2 Gram matrix is not positive definite".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Singular("H2 Gram factor is singular".into()))?;
    let reduced = &linv * k * linv.transpose();
    let (c, _) = crate::linalg::symmetric_eigen_range(&reduced);
    Ok(CoercivityReport {
        min_eigenvalue: lo,
        h2_constant: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn params() -> ShellParams {
        ShellParams {
            h: 0.05,
            lambda: 1.3,
            mu: 0.7,
            rho_k: 1.1,
            eps_k: ShellParams::default_eps(0.7, 0.05),
            r: 0.8,
            l: 2.0,
        }
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn projection_reproduces_spline_fields() {
        let basis = ShellBasis::new(2.0, 8, 8).unwrap();
        let c = random_vec(basis.n_free(), 11);
        let p = l2_projection(&basis, 0.8, |z, t| basis.value(&c, z, t)).unwrap();
        let err = p.iter().zip(&c).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn elasticity_of_identity() {
        let p = ShellParams {
            r: 1.0,
            lambda: 1.0,
            mu: 1.0,
            ..params()
        };
        let e = elasticity_apply(&p, &[[1.0, 0.0], [0.0, 1.0]]);
        assert!((e[0][0] - 20.0 / 3.0).abs() < 1e-14);
        assert!((e[1][1] - 20.0 / 3.0).abs() < 1e-14);
        assert_eq!(e[0][1], 0.0);
        assert_eq!(elasticity_apply(&p, &[[0.0; 2]; 2]), [[0.0; 2]; 2]);
    }

    #[test]
    fn elasticity_is_positive() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ac = [1.0, 1.0 / (p.r * p.r)];
        for _ in 0..200 {
            let e12 = rng.gen_range(-1.0..1.0);
            let e = [[rng.gen_range(-1.0..1.0), e12], [e12, rng.gen_range(-1.0..1.0)]];
            let lhs = contract(&elasticity_apply(&p, &e), &e);
            let mut aea = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    aea[i][j] = ac[i] * e[i][j] * ac[j];
                }
            }
            assert!(lhs >= 4.0 * p.mu * contract(&aea, &e) - 1e-12);
        }
    }

    #[test]
    fn strain_tensors_of_simple_fields() {
        let r = 0.8;
        let zero: Jet = [[0.0; 6]; 3];
        assert_eq!(change_of_metric(r, &zero), [[0.0; 2]; 2]);
        assert_eq!(change_of_curvature(&zero), [[0.0; 2]; 2]);
        let mut c = zero;
        c[RC][0] = 0.3;
        assert_eq!(change_of_metric(r, &c), [[0.0, 0.0], [0.0, r * 0.3]]);
        assert_eq!(change_of_curvature(&c), [[0.0, 0.0], [0.0, 0.3]]);
        // η_r = sin z · b(θ): ϱ₁₁ = −∂_zz η_r = sin z · b.
        let (z, b) = (0.7f64, 0.4);
        let mut s = zero;
        s[RC] = [z.sin() * b, z.cos() * b, 0.0, -z.sin() * b, 0.0, 0.0];
        assert!((change_of_curvature(&s)[0][0] - z.sin() * b).abs() < 1e-15);
    }

    #[test]
    fn strains_from_basis_match_symbolic_oracle() {
        // η_z = α z bump(θ) evaluated through the spline space: the spline jet
        // must reproduce the formula with the spline derivatives.
        let p = params();
        let basis = ShellBasis::new(p.l, 9, 12).unwrap();
        let coeffs = random_vec(basis.n_free(), 3);
        let j = basis.jet(&coeffs, 0.77, 1.9);
        let g = change_of_metric(p.r, &j);
        assert!((g[0][0] - j[ZC][1]).abs() < 1e-15);
        assert!((g[0][1] - 0.5 * (j[ZC][2] + p.r * j[TC][1])).abs() < 1e-15);
        // Linearity.
        let c2 = random_vec(basis.n_free(), 4);
        let mix: Vec<f64> = coeffs.iter().zip(&c2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let (j1, j2, jm) = (
            basis.jet(&coeffs, 0.3, 4.0),
            basis.jet(&c2, 0.3, 4.0),
            basis.jet(&mix, 0.3, 4.0),
        );
        let (k1, k2, km) = (
            change_of_curvature(&j1),
            change_of_curvature(&j2),
            change_of_curvature(&jm),
        );
        for a in 0..2 {
            for b in 0..2 {
                assert!((km[a][b] - (2.0 * k1[a][b] - 0.5 * k2[a][b])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clamped_ends_vanish() {
        let basis = ShellBasis::new(2.0, 8, 8).unwrap();
        let c = random_vec(basis.n_free(), 5);
        for k in 0..20 {
            let th = k as f64 * TAU / 20.0;
            for z in [0.0, 2.0] {
                let j = basis.jet(&c, z, th);
                for comp in 0..3 {
                    assert!(j[comp][0].abs() < 1e-13);
                }
                assert!(j[RC][1].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn stiffness_is_symmetric_and_coercive() {
        let model = ShellModel::new(params(), 8, 8).unwrap();
        assert!(model.stiffness.asymmetry() < 1e-12);
        let (x, y) = (random_vec(model.n_dof(), 1), random_vec(model.n_dof(), 2));
        let a = model.stiffness.bilinear(&x, &y);
        let b = model.stiffness.bilinear(&y, &x);
        assert!((a - b).abs() <= 1e-12 * a.abs());
        let rep = coercivity(&model).unwrap();
        assert!(rep.min_eigenvalue > 0.0 && rep.h2_constant > 0.0, "{rep:?}");
    }

    #[test]
    fn radial_energy_matches_dense_quadrature() {
        let p = params();
        let model = ShellModel::new(p, 9, 12).unwrap();
        // Pure radial field from random coefficients on the r-component only.
        let mut c = vec![0.0; model.n_dof()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (k, &full) in model.basis.free_indices().iter().enumerate() {
            if full / (9 * 12) == RC {
                c[k] = rng.gen_range(-1.0..1.0);
            }
        }
        let assembled = model.elastic_energy(&c);
        // Oracle: membrane + bending densities on a dense 8×8 Gauss rule.
        let mut oracle = 0.0;
        for (z, th, w) in model.basis.quadrature(8) {
            let j = model.basis.jet(&c, z, th);
            let g = change_of_metric(p.r, &j);
            let k = change_of_curvature(&j);
            oracle += w
                * p.r
                * (p.h * contract(&elasticity_apply(&p, &g), &g)
                    + p.h.powi(3) / 12.0 * contract(&elasticity_apply(&p, &k), &k));
        }
        assert!((assembled - oracle).abs() <= 1e-8 * oracle, "{assembled} vs {oracle}");
    }

    #[test]
    fn inflation_costs_membrane_energy() {
        let p = params();
        let model = ShellModel::new(p, 10, 8).unwrap();
        // Radial field equal to a smooth cut-off inflation: coefficients 1 on
        // the free radial functions.
        let c: Vec<f64> = model
            .basis
            .free_indices()
            .iter()
            .map(|&f| if f / (10 * 8) == RC { 1.0 } else { 0.0 })
            .collect();
        assert!(model.elastic_energy(&c) > 0.0);
        let mid = model.basis.value(&c, 1.0, 0.3);
        assert!((mid[RC] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_of_constant_field_is_area() {
        let p = params();
        let basis = ShellBasis::new(p.l, 7, 8).unwrap();
        let m = assemble_shell_mass_full(&p, &basis, 3).unwrap();
        for c in 0..3 {
            let mut ones = vec![0.0; basis.n_full()];
            for a in 0..7 {
                for b in 0..8 {
                    ones[basis.full_index(c, a, b)] = 1.0;
                }
            }
            let expect = p.rho_k * p.h * p.r * p.l * TAU;
            assert!((m.quad(&ones) - expect).abs() < 1e-12 * expect);
        }
        let model = ShellModel::new(p, 7, 8).unwrap();
        assert!(nalgebra::Cholesky::new(model.mass.to_dense()).is_some());
        assert_eq!(model.kinetic_energy(&vec![0.0; model.n_dof()]), 0.0);
    }

    #[test]
    fn low_quadrature_is_rejected() {
        let p = params();
        let basis = ShellBasis::new(p.l, 7, 8).unwrap();
        assert!(assemble_shell_stiffness(&p, &basis, 1).is_err());
        assert!(ShellBasis::new(2.0, 4, 8).is_err());
    }

    #[test]
    fn field_view_derivatives() {
        let basis = ShellBasis::new(2.0, 8, 8).unwrap();
        let c = random_vec(basis.n_free(), 9);
        let v = ShellFieldView {
            basis: &basis,
            coeffs: &c,
        };
        let e = v.eval(0.9, 2.0);
        let h = 1e-6;
        let ez = v.eval(0.9 + h, 2.0);
        let et = v.eval(0.9, 2.0 + h);
        for comp in 0..3 {
            assert!(((ez[0][comp] - e[0][comp]) / h - e[1][comp]).abs() < 1e-4);
            assert!(((et[0][comp] - e[0][comp]) / h - e[2][comp]).abs() < 1e-4);
        }
    }
}
