//! Trilinear finite-element operators on the mapped cylindrical grid.
//!
//! Shape functions are trilinear in the computational coordinates
//! `(z, ρ, θ)`; integrals use 2×2×2 Gauss points per cell with the exact
//! Jacobian of the map to physical space. Cells touching the axis are
//! collapsed: their four axis corners refer to the same node.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::grid::FluidGrid;
use crate::linalg::{SparseMatrix, Triplets};

/// Shape data at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    /// Quadrature weight times the Jacobian determinant (for
    /// [`shape_at`], the Jacobian of the map from the unit cell).
    pub w: f64,
    pub phi: [f64; 8],
    /// Physical gradients of the eight corner shape functions.
    pub grad: [[f64; 3]; 8],
    /// Physical position.
    pub x: [f64; 3],
    /// Local radial mesh size `Δρ · a`.
    pub h: f64,
}

/// Corner nodes and quadrature data of one cell.
#[derive(Debug, Clone)]
pub struct CellData {
    pub nodes: [usize; 8],
    pub quad: [QuadPoint; 8],
}

pub(crate) const GP: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

#[inline]
fn corner(c: usize) -> (usize, usize, usize) {
    (c / 4, (c / 2) % 2, c % 2)
}

#[inline]
fn lin(d: usize, t: f64) -> (f64, f64) {
    if d == 1 {
        (t, 1.0)
    } else {
        (1.0 - t, -1.0)
    }
}

/// Shape data of the cell `(i, j, k)` at local coordinates `(zh, rh, th)`
/// in `[0, 1]³`.
pub fn shape_at(grid: &FluidGrid, i: usize, j: usize, k: usize, zh: f64, rh: f64, th: f64) -> QuadPoint {
    let c = &grid.cyl;
    let (dz, drho, dth) = (c.dz(), grid.drho(), c.dtheta());
    let a00 = grid.radius(i, k);
    let a10 = grid.radius(i + 1, k);
    let a01 = grid.radius(i, k + 1);
    let a11 = grid.radius(i + 1, k + 1);
    let a = (1.0 - zh) * ((1.0 - th) * a00 + th * a01) + zh * ((1.0 - th) * a10 + th * a11);
    let a_z = ((1.0 - th) * (a10 - a00) + th * (a11 - a01)) / dz;
    let a_t = ((1.0 - zh) * (a01 - a00) + zh * (a11 - a10)) / dth;
    let rho = (j as f64 + rh) * drho;
    let theta = c.theta_at(k) + th * dth;
    let z = c.z_at(i) + zh * dz;
    let (ct, st) = (theta.cos(), theta.sin());
    // Columns: derivatives with respect to z, ρ, θ.
    let jac = Matrix3::new(
        rho * a_z * ct,
        a * ct,
        rho * (a_t * ct - a * st),
        rho * a_z * st,
        a * st,
        rho * (a_t * st + a * ct),
        1.0,
        0.0,
        0.0,
    );
    let det = jac.determinant();
    let jinv_t = jac
        .try_inverse()
        .expect("quadrature points avoid the axis")
        .transpose();
    let mut phi = [0.0; 8];
    let mut grad = [[0.0; 3]; 8];
    for (cidx, (p, g)) in phi.iter_mut().zip(grad.iter_mut()).enumerate() {
        let (di, dj, dk) = corner(cidx);
        let (fz, gz) = lin(di, zh);
        let (fr, gr) = lin(dj, rh);
        let (ft, gt) = lin(dk, th);
        *p = fz * fr * ft;
        let comp = Vector3::new(gz * fr * ft / dz, fz * gr * ft / drho, fz * fr * gt / dth);
        let phys = jinv_t * comp;
        *g = [phys[0], phys[1], phys[2]];
    }
    QuadPoint {
        w: det.abs() * dz * drho * dth,
        phi,
        grad,
        x: [rho * a * ct, rho * a * st, z],
        h: drho * a,
    }
}

/// Quadrature data of every cell, in cell order `(i, j, k)` with `k` fastest.
pub fn cell_data(grid: &FluidGrid) -> Vec<CellData> {
    let c = grid.cyl;
    let cells: Vec<(usize, usize, usize)> = (0..c.n_z)
        .flat_map(|i| (0..c.n_rho).flat_map(move |j| (0..c.n_theta).map(move |k| (i, j, k))))
        .collect();
    cells
        .par_iter()
        .map(|&(i, j, k)| {
            let mut quad = [QuadPoint {
                w: 0.0,
                phi: [0.0; 8],
                grad: [[0.0; 3]; 8],
                x: [0.0; 3],
                h: 0.0,
            }; 8];
            for (q, qp) in quad.iter_mut().enumerate() {
                let (a, b, d) = corner(q);
                let mut s = shape_at(grid, i, j, k, GP[a], GP[b], GP[d]);
                s.w *= 0.125;
                *qp = s;
            }
            CellData {
                nodes: grid.cell_nodes(i, j, k),
                quad,
            }
        })
        .collect()
}

fn merge(parts: Vec<Triplets>, nrows: usize, ncols: usize) -> SparseMatrix {
    let mut all = Triplets::with_capacity(nrows, ncols, parts.iter().map(Triplets::len).sum());
    for p in parts {
        all.append(p);
    }
    all.build()
}

/// Viscous operator `2μ ∫ D(u) : D(υ)` on nodal Cartesian velocities
/// (index `3 node + component`).
pub fn viscous_matrix(cells: &[CellData], n_nodes: usize, mu: f64) -> SparseMatrix {
    let n = 3 * n_nodes;
    let parts = cells
        .par_chunks(64)
        .map(|chunk| {
            let mut t = Triplets::with_capacity(n, n, chunk.len() * 576);
            for cell in chunk {
                let mut local = [[0.0; 24]; 24];
                for q in &cell.quad {
                    for a in 0..8 {
                        for b in 0..8 {
                            let ga = q.grad[a];
                            let gb = q.grad[b];
                            let dot = ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2];
                            for c in 0..3 {
                                for d in 0..3 {
                                    let mut v = ga[d] * gb[c];
                                    if c == d {
                                        v += dot;
                                    }
                                    local[3 * a + c][3 * b + d] += mu * q.w * v;
                                }
                            }
                        }
                    }
                }
                for a in 0..8 {
                    for b in 0..8 {
                        for c in 0..3 {
                            for d in 0..3 {
                                t.push(3 * cell.nodes[a] + c, 3 * cell.nodes[b] + d, local[3 * a + c][3 * b + d]);
                            }
                        }
                    }
                }
            }
            t
        })
        .collect();
    merge(parts, n, n)
}

/// Skew-symmetric convection operator `(ρ/2)(N − Nᵀ)` with
/// `N_ab = ∫ (β·∇φ_b) φ_a`, applied componentwise. `beta` holds nodal
/// Cartesian advection velocities.
pub fn convection_matrix(cells: &[CellData], n_nodes: usize, beta: &[f64], rho: f64) -> SparseMatrix {
    convection_triplets(cells, n_nodes, beta, rho).build()
}

/// Unassembled entries of [`convection_matrix`].
pub fn convection_triplets(cells: &[CellData], n_nodes: usize, beta: &[f64], rho: f64) -> Triplets {
    let n = 3 * n_nodes;
    let parts: Vec<Triplets> = cells
        .par_chunks(64)
        .map(|chunk| {
            let mut t = Triplets::with_capacity(n, n, chunk.len() * 192);
            for cell in chunk {
                let mut local = [[0.0; 8]; 8];
                for q in &cell.quad {
                    let mut b = [0.0; 3];
                    for a in 0..8 {
                        for c in 0..3 {
                            b[c] += q.phi[a] * beta[3 * cell.nodes[a] + c];
                        }
                    }
                    for a in 0..8 {
                        for bb in 0..8 {
                            let g = q.grad[bb];
                            local[a][bb] += q.w * q.phi[a] * (b[0] * g[0] + b[1] * g[1] + b[2] * g[2]);
                        }
                    }
                }
                for a in 0..8 {
                    for b in 0..8 {
                        let v = 0.5 * rho * (local[a][b] - local[b][a]);
                        for c in 0..3 {
                            t.push(3 * cell.nodes[a] + c, 3 * cell.nodes[b] + c, v);
                        }
                    }
                }
            }
            t
        })
        .collect();
    let mut all = Triplets::with_capacity(n, n, parts.iter().map(Triplets::len).sum());
    for p in parts {
        all.append(p);
    }
    all
}

/// Divergence operator `B_{a,(b,c)} = ∫ φ_a ∂_c φ_b` (pressure rows,
/// velocity columns).
pub fn divergence_matrix(cells: &[CellData], n_nodes: usize) -> SparseMatrix {
    let parts = cells
        .par_chunks(64)
        .map(|chunk| {
            let mut t = Triplets::with_capacity(n_nodes, 3 * n_nodes, chunk.len() * 192);
            for cell in chunk {
                let mut local = [[0.0; 24]; 8];
                for q in &cell.quad {
                    for a in 0..8 {
                        for b in 0..8 {
                            for c in 0..3 {
                                local[a][3 * b + c] += q.w * q.phi[a] * q.grad[b][c];
                            }
                        }
                    }
                }
                for a in 0..8 {
                    for b in 0..8 {
                        for c in 0..3 {
                            t.push(cell.nodes[a], 3 * cell.nodes[b] + c, local[a][3 * b + c]);
                        }
                    }
                }
            }
            t
        })
        .collect();
    merge(parts, n_nodes, 3 * n_nodes)
}

/// Pressure stabilization `c ∫ h² ∇p · ∇q` with the local radial mesh size.
pub fn stabilization_matrix(cells: &[CellData], n_nodes: usize, c_stab: f64) -> SparseMatrix {
    let parts = cells
        .par_chunks(64)
        .map(|chunk| {
            let mut t = Triplets::with_capacity(n_nodes, n_nodes, chunk.len() * 64);
            for cell in chunk {
                let mut local = [[0.0; 8]; 8];
                for q in &cell.quad {
                    for a in 0..8 {
                        for b in 0..8 {
                            let (ga, gb) = (q.grad[a], q.grad[b]);
                            local[a][b] += c_stab * q.h * q.h * q.w * (ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2]);
                        }
                    }
                }
                for a in 0..8 {
                    for b in 0..8 {
                        t.push(cell.nodes[a], cell.nodes[b], local[a][b]);
                    }
                }
            }
            t
        })
        .collect();
    merge(parts, n_nodes, n_nodes)
}

/// Consistent scalar mass matrix `∫ φ_a φ_b`.
pub fn scalar_mass_matrix(cells: &[CellData], n_nodes: usize) -> SparseMatrix {
    let mut t = Triplets::with_capacity(n_nodes, n_nodes, cells.len() * 64);
    for cell in cells {
        for q in &cell.quad {
            for a in 0..8 {
                for b in 0..8 {
                    t.push(cell.nodes[a], cell.nodes[b], q.w * q.phi[a] * q.phi[b]);
                }
            }
        }
    }
    t.build()
}

/// `∫_{face} φ_a dA` on the inlet (`i = 0`) or outlet (`i = n_z`) disk.
pub fn face_vector(grid: &FluidGrid, outlet: bool) -> Vec<f64> {
    let c = grid.cyl;
    let i_plane = if outlet { c.n_z } else { 0 };
    let dth = c.dtheta();
    let drho = grid.drho();
    let mut v = vec![0.0; grid.n_nodes()];
    for j in 0..c.n_rho {
        for k in 0..c.n_theta {
            for &rh in &GP {
                for &th in &GP {
                    let a = (1.0 - th) * grid.radius(i_plane, k) + th * grid.radius(i_plane, k + 1);
                    let rho = (j as f64 + rh) * drho;
                    let w = 0.25 * drho * dth * rho * a * a;
                    for dj in 0..2 {
                        for dk in 0..2 {
                            let (fr, _) = lin(dj, rh);
                            let (ft, _) = lin(dk, th);
                            v[grid.node(i_plane, j + dj, k + dk)] += w * fr * ft;
                        }
                    }
                }
            }
        }
    }
    v
}

/// Values and physical gradient of a nodal Cartesian field at a point of a
/// cell.
pub fn field_jet(q: &QuadPoint, nodes: &[usize; 8], u: &[f64]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut val = [0.0; 3];
    let mut grad = [[0.0; 3]; 3];
    for a in 0..8 {
        for c in 0..3 {
            let ua = u[3 * nodes[a] + c];
            val[c] += q.phi[a] * ua;
            for d in 0..3 {
                grad[c][d] += q.grad[a][d] * ua;
            }
        }
    }
    (val, grad)
}
