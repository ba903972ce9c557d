//! Monitors for the standing assumptions on the structure displacement: the
//! deformed wall stays a radial graph over the reference cylinder, and the
//! displacements stay uniformly Lipschitz.

use serde::Serialize;

use crate::geometry::{injectivity_det, CylinderRef, SurfaceDisplacement};

/// Margins of the subgraph property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubgraphMargin {
    /// Minimum Jacobian determinant of `g(z, θ) = (z + η_z, θ + η_θ)`.
    pub injectivity: f64,
    /// Minimum of `R + η_r`.
    pub radius: f64,
}

impl SubgraphMargin {
    pub fn holds(&self) -> bool {
        self.injectivity > 0.0 && self.radius > 0.0
    }

    /// Single scalar margin: `min(det, (R + η_r)_min / R)`; 1 at rest.
    pub fn normalized(&self, r: f64) -> f64 {
        self.injectivity.min(self.radius / r)
    }
}

/// Sample points: the interface grid refined `refine` times in each direction.
fn samples(cyl: &CylinderRef, refine: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    let nz = cyl.n_z * refine;
    let nt = cyl.n_theta * refine;
    (0..=nz).flat_map(move |i| {
        (0..nt).map(move |k| {
            (
                cyl.l * i as f64 / nz as f64,
                std::f64::consts::TAU * k as f64 / nt as f64,
            )
        })
    })
}

/// Subgraph margins of a displacement, sampled on the interface grid refined
/// twice in each direction.
pub fn subgraph_monitor(eta: &dyn SurfaceDisplacement, cyl: &CylinderRef) -> SubgraphMargin {
    let mut m = SubgraphMargin {
        injectivity: f64::INFINITY,
        radius: f64::INFINITY,
    };
    for (z, t) in samples(cyl, 2) {
        let e = eta.eval(z, t);
        m.injectivity = m.injectivity.min(injectivity_det(&e));
        m.radius = m.radius.min(cyl.r + e[0][1]);
    }
    m
}

/// `W^{1,∞}` size of a displacement: the largest absolute value of any
/// component or first parameter derivative over the sample grid.
pub fn lipschitz_norm(eta: &dyn SurfaceDisplacement, cyl: &CylinderRef) -> f64 {
    samples(cyl, 2)
        .map(|(z, t)| {
            eta.eval(z, t)
                .iter()
                .flatten()
                .fold(0.0_f64, |a, v| a.max(v.abs()))
        })
        .fold(0.0, f64::max)
}

/// Running maximum of [`lipschitz_norm`] over a trajectory, compared with a
/// cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzMonitor {
    pub cap: f64,
    pub max: f64,
}

impl LipschitzMonitor {
    pub fn new(cap: f64) -> Self {
        Self { cap, max: 0.0 }
    }

    /// Adds one displacement to the history and returns the running maximum.
    pub fn observe(&mut self, eta: &dyn SurfaceDisplacement, cyl: &CylinderRef) -> f64 {
        self.max = self.max.max(lipschitz_norm(eta, cyl));
        self.max
    }

    pub fn holds(&self) -> bool {
        self.max <= self.cap
    }
}
