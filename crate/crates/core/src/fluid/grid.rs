//! Boundary-fitted structured grid of the current fluid domain.
//!
//! Computational coordinates are `(z, ρ, θ)` with `ρ ∈ [0, 1]`; the physical
//! point is `(ρ a cos θ, ρ a sin θ, z)` where `a = R + η̃(z, θ)` is the current
//! wall radius (bilinear in `(z, θ)` between interface grid points). Every
//! axial plane carries one node on the axis (`ρ = 0`) shared by all angular
//! sectors, and `n_rho · n_theta` ring nodes.

use crate::geometry::{BoundaryField, CylinderRef};

/// Role of a node for the velocity boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Interior node, all three components free.
    Interior,
    /// Inlet or outlet node off the wall: only the axial component is free.
    Face,
    /// Node on the lateral wall; its velocity is the wall velocity.
    Wall,
}

/// Grid of the domain bounded by a given boundary field.
#[derive(Debug, Clone)]
pub struct FluidGrid {
    pub cyl: CylinderRef,
    pub boundary: BoundaryField,
}

impl FluidGrid {
    pub fn new(boundary: BoundaryField) -> Self {
        Self {
            cyl: boundary.cyl,
            boundary,
        }
    }

    /// Nodes per axial plane.
    #[inline]
    pub fn plane_size(&self) -> usize {
        1 + self.cyl.n_rho * self.cyl.n_theta
    }

    pub fn n_nodes(&self) -> usize {
        (self.cyl.n_z + 1) * self.plane_size()
    }

    pub fn n_cells(&self) -> usize {
        self.cyl.n_z * self.cyl.n_rho * self.cyl.n_theta
    }

    #[inline]
    pub fn drho(&self) -> f64 {
        1.0 / self.cyl.n_rho as f64
    }

    /// Node index of `(i, j, k)`; every `k` maps to the same node on the axis.
    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> usize {
        let base = i * self.plane_size();
        if j == 0 {
            base
        } else {
            base + 1 + (j - 1) * self.cyl.n_theta + k % self.cyl.n_theta
        }
    }

    /// Inverse of [`FluidGrid::node`] (`k = 0` for axis nodes).
    pub fn ijk(&self, node: usize) -> (usize, usize, usize) {
        let i = node / self.plane_size();
        let r = node % self.plane_size();
        if r == 0 {
            (i, 0, 0)
        } else {
            let r = r - 1;
            (i, 1 + r / self.cyl.n_theta, r % self.cyl.n_theta)
        }
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        let (i, j, _) = self.ijk(node);
        if j == self.cyl.n_rho {
            NodeKind::Wall
        } else if i == 0 || i == self.cyl.n_z {
            NodeKind::Face
        } else {
            NodeKind::Interior
        }
    }

    /// Wall radius at interface grid point `(i, k)`.
    #[inline]
    pub fn radius(&self, i: usize, k: usize) -> f64 {
        self.boundary.radius_at(i, k)
    }

    /// Cylindrical coordinates `(z, r, θ)` of a node.
    pub fn cylindrical(&self, node: usize) -> (f64, f64, f64) {
        let (i, j, k) = self.ijk(node);
        let rho = j as f64 * self.drho();
        (self.cyl.z_at(i), rho * self.radius(i, k), self.cyl.theta_at(k))
    }

    /// Cartesian position of a node.
    pub fn position(&self, node: usize) -> [f64; 3] {
        let (z, r, t) = self.cylindrical(node);
        [r * t.cos(), r * t.sin(), z]
    }

    /// `∫ ρ φ_j dρ` of the radial hat functions on the uniform `ρ` grid.
    pub fn radial_weight(&self, j: usize) -> f64 {
        let h = self.drho();
        let n = self.cyl.n_rho;
        if j == 0 {
            h * h / 6.0
        } else if j == n {
            h / 2.0 - h * h / 6.0
        } else {
            j as f64 * h * h
        }
    }

    /// Axial trapezoid weight of plane `i`.
    pub fn axial_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.cyl.n_z {
            0.5 * self.cyl.dz()
        } else {
            self.cyl.dz()
        }
    }

    /// Lumped mass (volume) weight of every node: the Jacobian `ρ a²` is
    /// integrated against the hat functions with `a` frozen at the node.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let c = &self.cyl;
        let dth = c.dtheta();
        let mut w = vec![0.0; self.n_nodes()];
        for i in 0..=c.n_z {
            let wz = self.axial_weight(i);
            let axis: f64 = (0..c.n_theta).map(|k| self.radius(i, k).powi(2)).sum();
            w[self.node(i, 0, 0)] = self.radial_weight(0) * wz * dth * axis;
            for j in 1..=c.n_rho {
                let wr = self.radial_weight(j);
                for k in 0..c.n_theta {
                    w[self.node(i, j, k)] = wr * wz * dth * self.radius(i, k).powi(2);
                }
            }
        }
        w
    }

    /// Axis-node index of every plane, and the list of wall nodes.
    pub fn wall_nodes(&self) -> Vec<usize> {
        let c = &self.cyl;
        let mut out = Vec::with_capacity((c.n_z + 1) * c.n_theta);
        for i in 0..=c.n_z {
            for k in 0..c.n_theta {
                out.push(self.node(i, c.n_rho, k));
            }
        }
        out
    }

    /// Eight corner nodes of cell `(i, j, k)` in the order
    /// `(di, dj, dk)` with `dk` fastest.
    pub fn cell_nodes(&self, i: usize, j: usize, k: usize) -> [usize; 8] {
        let mut out = [0; 8];
        for di in 0..2 {
            for dj in 0..2 {
                for dk in 0..2 {
                    out[4 * di + 2 * dj + dk] = self.node(i + di, j + dj, k + dk);
                }
            }
        }
        out
    }
}
