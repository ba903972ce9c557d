//! Reference cylinder, moving radial boundary and the explicit ALE maps between
//! consecutive discrete domains.
//!
//! Points are handled in cylindrical coordinates `(z, r, θ)`; vectors that
//! leave this module are Cartesian `[x, y, z]` with the cylinder axis along z.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Reference cylinder of radius `r` and length `l`, with the resolutions of the
/// fluid grid (`n_z` axial cells, `n_rho` radial cells, `n_theta` azimuthal
/// nodes).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CylinderRef {
    pub r: f64,
    pub l: f64,
    pub n_z: usize,
    pub n_rho: usize,
    pub n_theta: usize,
}

impl CylinderRef {
    pub fn new(r: f64, l: f64, n_z: usize, n_rho: usize, n_theta: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config(format!("radius must be positive, got {r}")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("length must be positive, got {l}")));
        }
        if n_z < 2 || n_rho < 2 || n_theta < 2 {
            return Err(Error::Config(format!(
                "grid resolutions must be >= 2, got ({n_z}, {n_rho}, {n_theta})"
            )));
        }
        Ok(Self {
            r,
            l,
            n_z,
            n_rho,
            n_theta,
        })
    }

    pub fn dz(&self) -> f64 {
        self.l / self.n_z as f64
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    /// Axial coordinate of interface grid line `i` (`0..=n_z`).
    pub fn z_at(&self, i: usize) -> f64 {
        if i == self.n_z {
            self.l
        } else {
            i as f64 * self.dz()
        }
    }

    pub fn theta_at(&self, k: usize) -> f64 {
        k as f64 * self.dtheta()
    }

    /// Number of interface grid points per axial line.
    pub fn n_z_nodes(&self) -> usize {
        self.n_z + 1
    }

    /// Embedding of the parameter rectangle onto the reference surface.
    pub fn embed(&self, z: f64, theta: f64) -> [f64; 3] {
        [self.r * theta.cos(), self.r * theta.sin(), z]
    }
}

/// Unit radial vector at angle θ, in Cartesian components.
#[inline]
pub fn e_r(theta: f64) -> [f64; 3] {
    [theta.cos(), theta.sin(), 0.0]
}

/// Unit azimuthal vector at angle θ, in Cartesian components.
#[inline]
pub fn e_theta(theta: f64) -> [f64; 3] {
    [-theta.sin(), theta.cos(), 0.0]
}

pub const E_Z: [f64; 3] = [0.0, 0.0, 1.0];

/// Radial boundary displacement η̃ sampled on the interface grid
/// `(z_i, θ_k)`, `i = 0..=n_z`, `k = 0..n_theta`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundaryField {
    pub cyl: CylinderRef,
    /// Values indexed `i * n_theta + k`.
    pub values: Vec<f64>,
    pub n: i64,
}

impl BoundaryField {
    pub fn zeros(cyl: CylinderRef) -> Self {
        Self {
            cyl,
            values: vec![0.0; cyl.n_z_nodes() * cyl.n_theta],
            n: 0,
        }
    }

    pub fn from_fn(cyl: CylinderRef, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(cyl.n_z_nodes() * cyl.n_theta);
        for i in 0..cyl.n_z_nodes() {
            for k in 0..cyl.n_theta {
                values.push(f(cyl.z_at(i), cyl.theta_at(k)));
            }
        }
        Self { cyl, values, n: 0 }
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.cyl.n_theta + k % self.cyl.n_theta]
    }

    /// Current radius `R + η̃` at grid point `(i, k)`.
    #[inline]
    pub fn radius_at(&self, i: usize, k: usize) -> f64 {
        self.cyl.r + self.at(i, k)
    }

    /// Bilinear interpolation in `(z, θ)`, periodic in θ.
    pub fn eval(&self, z: f64, theta: f64) -> f64 {
        let c = &self.cyl;
        let zc = z.clamp(0.0, c.l);
        let fz = zc / c.dz();
        let i = (fz.floor() as usize).min(c.n_z - 1);
        let a = fz - i as f64;
        let ft = theta.rem_euclid(TAU) / c.dtheta();
        let k = (ft.floor() as usize).min(c.n_theta - 1);
        let b = ft - k as f64;
        let k1 = (k + 1) % c.n_theta;
        (1.0 - a) * ((1.0 - b) * self.at(i, k) + b * self.at(i, k1))
            + a * ((1.0 - b) * self.at(i + 1, k) + b * self.at(i + 1, k1))
    }

    pub fn radius(&self, z: f64, theta: f64) -> f64 {
        self.cyl.r + self.eval(z, theta)
    }

    /// Smallest current radius over the grid.
    pub fn min_radius(&self) -> f64 {
        self.values
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(self.cyl.r + v))
    }

    /// Checks the type invariants: `R + η̃ > 0` and clamped ends.
    pub fn validate(&self) -> Result<()> {
        let m = self.min_radius();
        if !(m > 0.0) {
            return Err(Error::SubgraphViolation(format!(
                "boundary reaches the axis: min(R + eta) = {m:.3e}"
            )));
        }
        let c = &self.cyl;
        for k in 0..c.n_theta {
            for i in [0, c.n_z] {
                if self.at(i, k).abs() > 1e-9 * c.r {
                    return Err(Error::Domain(format!(
                        "boundary displacement must vanish at the ends, got {:.3e}",
                        self.at(i, k)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The explicit ALE map between two consecutive discrete domains: it takes the
/// domain bounded by `source` (η̃ⁿ⁺¹) onto the domain bounded by `target` (η̃ⁿ).
#[derive(Debug, Clone)]
pub struct AleSlabMap<'a> {
    pub source: &'a BoundaryField,
    pub target: &'a BoundaryField,
    pub dt: f64,
}

impl<'a> AleSlabMap<'a> {
    pub fn new(source: &'a BoundaryField, target: &'a BoundaryField, dt: f64) -> Result<Self> {
        if source.cyl != target.cyl {
            return Err(Error::Dimension(
                "slab map between fields on different grids".into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { source, target, dt })
    }

    /// The map in the opposite direction.
    pub fn inverse(&self) -> AleSlabMap<'a> {
        AleSlabMap {
            source: self.target,
            target: self.source,
            dt: self.dt,
        }
    }

    /// Radial scaling factor `(R + η̃ⁿ) / (R + η̃ⁿ⁺¹)` at `(z, θ)`.
    pub fn ratio(&self, z: f64, theta: f64) -> f64 {
        self.target.radius(z, theta) / self.source.radius(z, theta)
    }

    /// Maps `(z, r, θ)` in the source domain to the target domain.
    pub fn map(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let [z, r, theta] = p;
        let rs = self.source.radius(z, theta);
        if !(0.0..=self.source.cyl.l).contains(&z) || r < 0.0 || r > rs * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "point (z={z}, r={r}, theta={theta}) is outside the source domain (radius {rs})"
            )));
        }
        Ok([z, r * self.target.radius(z, theta) / rs, theta])
    }

    /// Jacobian determinant of the map, `((R + η̃ⁿ)/(R + η̃ⁿ⁺¹))²`.
    pub fn jacobian(&self, z: f64, theta: f64) -> f64 {
        let q = self.ratio(z, theta);
        q * q
    }

    /// Relative boundary increment `Δη = (η̃ⁿ⁺¹ − η̃ⁿ)/(R + η̃ⁿ⁺¹)`.
    pub fn delta_eta(&self, z: f64, theta: f64) -> f64 {
        (self.source.eval(z, theta) - self.target.eval(z, theta)) / self.source.radius(z, theta)
    }

    /// Jacobian at interface grid point `(i, k)` (exact grid values, no interpolation).
    pub fn jacobian_node(&self, i: usize, k: usize) -> f64 {
        let q = self.target.radius_at(i, k) / self.source.radius_at(i, k);
        q * q
    }

    pub fn delta_eta_node(&self, i: usize, k: usize) -> f64 {
        (self.source.at(i, k) - self.target.at(i, k)) / self.source.radius_at(i, k)
    }

    /// ALE domain velocity at a source-domain point, Cartesian components.
    pub fn domain_velocity(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let [z, r, theta] = p;
        self.map(p)?;
        let f = self.delta_eta(z, theta) / self.dt * r;
        let er = e_r(theta);
        Ok([f * er[0], f * er[1], 0.0])
    }
}

/// Read-only access to a three-component surface displacement
/// `(η_z, η_r, η_θ)` on the parameter rectangle, with first derivatives.
///
/// `eval` returns `[value, ∂_z, ∂_θ]`, each as `[η_z, η_r, η_θ]`.
pub trait SurfaceDisplacement: Sync {
    fn eval(&self, z: f64, theta: f64) -> [[f64; 3]; 3];
}

/// A displacement given by a closure, used for analytic fields.
pub struct AnalyticDisplacement<F>(pub F);

impl<F> SurfaceDisplacement for AnalyticDisplacement<F>
where
    F: Fn(f64, f64) -> [[f64; 3]; 3] + Sync,
{
    fn eval(&self, z: f64, theta: f64) -> [[f64; 3]; 3] {
        (self.0)(z, theta)
    }
}

/// Determinant of the Jacobian of `g(z, θ) = (z + η_z, θ + η_θ)`.
#[inline]
pub fn injectivity_det(e: &[[f64; 3]; 3]) -> f64 {
    let [_, dz, dt] = e;
    (1.0 + dz[0]) * (1.0 + dt[2]) - dt[0] * dz[2]
}

/// Injectivity check of `g` over the interface grid: returns whether the
/// Jacobian determinant is positive everywhere, and its minimum.
pub fn check_injectivity(eta: &dyn SurfaceDisplacement, cyl: &CylinderRef) -> (bool, f64) {
    let mut margin = f64::INFINITY;
    for i in 0..cyl.n_z_nodes() {
        for k in 0..cyl.n_theta {
            let e = eta.eval(cyl.z_at(i), cyl.theta_at(k));
            margin = margin.min(injectivity_det(&e));
        }
    }
    (margin > 0.0, margin)
}

/// Inverts `g` at `(zt, tt)` by damped Newton iteration from `start`.
fn invert_g(
    eta: &dyn SurfaceDisplacement,
    l: f64,
    zt: f64,
    tt: f64,
    start: (f64, f64),
) -> Option<(f64, f64)> {
    let (mut z, mut t) = start;
    for _ in 0..60 {
        let e = eta.eval(z, t);
        let fz = z + e[0][0] - zt;
        let mut ft = t + e[0][2] - tt;
        ft -= TAU * (ft / TAU).round();
        if fz.abs() < 1e-13 && ft.abs() < 1e-13 {
            return Some((z, t));
        }
        let (a, b, c, d) = (1.0 + e[1][0], e[2][0], e[1][2], 1.0 + e[2][2]);
        let det = a * d - b * c;
        if !(det.abs() > 1e-14) {
            return None;
        }
        let dz = (d * fz - b * ft) / det;
        let dt = (-c * fz + a * ft) / det;
        z = (z - dz).clamp(0.0, l);
        t -= dt;
        if dz.abs() < 1e-12 && dt.abs() < 1e-12 {
            let e = eta.eval(z, t);
            let rz = z + e[0][0] - zt;
            let mut rt = t + e[0][2] - tt;
            rt -= TAU * (rt / TAU).round();
            if rz.abs() < 1e-10 && rt.abs() < 1e-10 {
                return Some((z, t));
            }
        }
    }
    None
}

/// Rewrites a full surface displacement as a purely radial boundary function
/// on the fixed interface grid: `η̃(z + η_z, θ + η_θ) = η_r`.
pub fn reparameterize(eta: &dyn SurfaceDisplacement, cyl: &CylinderRef) -> Result<BoundaryField> {
    reparameterize_with_preimages(eta, cyl).map(|(f, _)| f)
}

/// As [`reparameterize`], also returning the material preimage `(z, θ)` of
/// every interface grid point (index `i n_θ + k`).
pub fn reparameterize_with_preimages(
    eta: &dyn SurfaceDisplacement,
    cyl: &CylinderRef,
) -> Result<(BoundaryField, Vec<(f64, f64)>)> {
    let (ok, margin) = check_injectivity(eta, cyl);
    if !ok {
        return Err(Error::SubgraphViolation(format!(
            "surface map is not injective: min Jacobian determinant {margin:.3e}"
        )));
    }
    let mut field = BoundaryField::zeros(*cyl);
    let mut pre = Vec::with_capacity(cyl.n_z_nodes() * cyl.n_theta);
    for i in 0..cyl.n_z_nodes() {
        for k in 0..cyl.n_theta {
            let (zt, tt) = (cyl.z_at(i), cyl.theta_at(k));
            let mut found = invert_g(eta, cyl.l, zt, tt, (zt, tt));
            if found.is_none() {
                // Fallback: start from a first-order predictor, then from the
                // neighbouring grid points.
                let e = eta.eval(zt, tt);
                let guess = ((zt - e[0][0]).clamp(0.0, cyl.l), tt - e[0][2]);
                found = invert_g(eta, cyl.l, zt, tt, guess);
                let mut s = 0;
                while found.is_none() && s < 8 {
                    let (dz, dt) = [
                        (1.0, 0.0),
                        (-1.0, 0.0),
                        (0.0, 1.0),
                        (0.0, -1.0),
                        (1.0, 1.0),
                        (-1.0, -1.0),
                        (1.0, -1.0),
                        (-1.0, 1.0),
                    ][s];
                    let st = (
                        (zt + dz * cyl.dz()).clamp(0.0, cyl.l),
                        tt + dt * cyl.dtheta(),
                    );
                    found = invert_g(eta, cyl.l, zt, tt, st);
                    s += 1;
                }
            }
            let (z, t) = found.ok_or_else(|| {
                Error::SubgraphViolation(format!(
                    "could not invert the surface map at (z={zt:.4}, theta={tt:.4})"
                ))
            })?;
            field.values[i * cyl.n_theta + k] = eta.eval(z, t)[0][1];
            pre.push((z, t));
        }
    }
    // The ends are clamped; remove round-off there.
    for k in 0..cyl.n_theta {
        for i in [0, cyl.n_z] {
            if field.values[i * cyl.n_theta + k].abs() < 1e-12 * cyl.r {
                field.values[i * cyl.n_theta + k] = 0.0;
            }
        }
    }
    let m = field.min_radius();
    if !(m > 0.0) {
        return Err(Error::SubgraphViolation(format!(
            "boundary reaches the axis: min(R + eta) = {m:.3e}"
        )));
    }
    Ok((field, pre))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cyl(r: f64) -> CylinderRef {
        CylinderRef::new(r, 2.0, 8, 4, 12).unwrap()
    }

    fn constant(c: CylinderRef, v: f64) -> BoundaryField {
        BoundaryField::from_fn(c, |_, _| v)
    }

    #[test]
    fn rejects_bad_reference() {
        assert!(CylinderRef::new(0.0, 1.0, 4, 4, 4).is_err());
        assert!(CylinderRef::new(1.0, -1.0, 4, 4, 4).is_err());
        assert!(CylinderRef::new(1.0, 1.0, 1, 4, 4).is_err());
    }

    #[test]
    fn identity_map_when_fields_agree() {
        let c = cyl(1.0);
        let f = BoundaryField::from_fn(c, |z, t| 0.05 * (PI * z / 2.0).sin() * t.cos());
        let m = AleSlabMap::new(&f, &f, 0.1).unwrap();
        let p = [0.7, 0.4, 1.3];
        assert_eq!(m.map(p).unwrap(), p);
        assert_eq!(m.jacobian(0.7, 1.3), 1.0);
        assert_eq!(m.domain_velocity(p).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_inflation_values() {
        let c = cyl(1.0);
        let (old, new) = (constant(c, 0.0), constant(c, 0.1));
        let m = AleSlabMap::new(&new, &old, 0.1).unwrap();
        let q = m.map([0.5, 1.1, 0.0]).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-15 && (q[1] - 1.0).abs() < 1e-15 && q[2] == 0.0);
        assert_eq!(m.map([0.5, 0.0, 0.0]).unwrap(), [0.5, 0.0, 0.0]);
        assert!((m.jacobian(0.5, 0.0) - 100.0 / 121.0).abs() < 1e-15);
        let s = m.domain_velocity([0.5, 1.1, 0.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14 && s[1].abs() < 1e-15 && s[2] == 0.0);
        assert!(m.map([0.5, 1.2, 0.0]).is_err());
        assert!(AleSlabMap::new(&new, &old, 0.0).is_err());
    }

    #[test]
    fn jacobian_cancellation_identity() {
        let c = cyl(1.3);
        let a = BoundaryField::from_fn(c, |z, t| 0.1 * (PI * z / 2.0).sin() * (1.0 + t.sin()));
        let b = BoundaryField::from_fn(c, |z, t| -0.2 * (PI * z).sin().powi(2) * t.cos());
        let m = AleSlabMap::new(&a, &b, 0.01).unwrap();
        for i in 0..=c.n_z {
            for k in 0..c.n_theta {
                let s = m.jacobian_node(i, k);
                let d = m.delta_eta_node(i, k);
                assert!((s - (1.0 - d) * (1.0 - d)).abs() <= 1e-12 * s);
            }
        }
    }

    #[test]
    fn domain_velocity_divergence_is_twice_delta_eta() {
        let c = cyl(1.0);
        let a = BoundaryField::from_fn(c, |z, t| 0.1 * (PI * z / 2.0).sin() * (2.0 + t.sin()));
        let b = BoundaryField::zeros(c);
        let dt = 0.05;
        let m = AleSlabMap::new(&a, &b, dt).unwrap();
        let cart = |x: [f64; 3]| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            m.domain_velocity([x[2], r, x[1].atan2(x[0])]).unwrap()
        };
        let h = 1e-5;
        for &(z, r, t) in &[(0.6, 0.3, 0.2), (1.1, 0.5, 2.0), (0.9, 0.2, 4.0)] {
            // Stay inside a bilinear cell so the field is smooth around the point.
            let x = [r * f64::cos(t), r * f64::sin(t), z];
            let mut div = 0.0;
            for d in 0..3 {
                let (mut xp, mut xm) = (x, x);
                xp[d] += h;
                xm[d] -= h;
                div += (cart(xp)[d] - cart(xm)[d]) / (2.0 * h);
            }
            let expect = 2.0 * m.delta_eta(z, t) / dt;
            assert!((div - expect).abs() < 1e-5 * expect.abs().max(1.0), "{div} vs {expect}");
        }
    }

    #[test]
    fn injectivity_examples() {
        let c = cyl(1.0);
        let zero = AnalyticDisplacement(|_, _| [[0.0; 3]; 3]);
        assert_eq!(check_injectivity(&zero, &c), (true, 1.0));
        let stretch = AnalyticDisplacement(|z: f64, _| [[z, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]]);
        assert_eq!(check_injectivity(&stretch, &c), (true, 2.0));
        let collapse = AnalyticDisplacement(|z: f64, _| [[-z, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0; 3]]);
        assert_eq!(check_injectivity(&collapse, &c), (false, 0.0));
        assert!(matches!(
            reparameterize(&collapse, &c),
            Err(Error::SubgraphViolation(_))
        ));
    }

    #[test]
    fn reparameterize_pure_radial_is_identity() {
        let c = cyl(1.0);
        let f = |z: f64, t: f64| 0.05 * (PI * z / 2.0).sin() * t.cos();
        let eta = AnalyticDisplacement(move |z: f64, t: f64| {
            [
                [0.0, f(z, t), 0.0],
                [0.0, 0.05 * PI / 2.0 * (PI * z / 2.0).cos() * t.cos(), 0.0],
                [0.0, -0.05 * (PI * z / 2.0).sin() * t.sin(), 0.0],
            ]
        });
        let b = reparameterize(&eta, &c).unwrap();
        for i in 0..=c.n_z {
            for k in 0..c.n_theta {
                assert!((b.at(i, k) - f(c.z_at(i), c.theta_at(k))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reparameterize_axial_shift_matches_newton_oracle() {
        let c = cyl(1.0);
        let l = c.l;
        let eta = AnalyticDisplacement(move |z: f64, _| {
            let s = (PI * z / l).sin();
            let co = (PI * z / l).cos() * PI / l;
            [[0.01 * s, 0.05 * s, 0.0], [0.01 * co, 0.05 * co, 0.0], [0.0; 3]]
        });
        let b = reparameterize(&eta, &c).unwrap();
        for i in 0..=c.n_z {
            let zt = c.z_at(i);
            // Independent bisection on z + 0.01 sin(πz/L) = zt.
            let (mut lo, mut hi) = (0.0, l);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid + 0.01 * (PI * mid / l).sin() < zt {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let expect = 0.05 * (PI * 0.5 * (lo + hi) / l).sin();
            for k in 0..c.n_theta {
                assert!((b.at(i, k) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reparameterize_with_twist() {
        let c = cyl(1.0);
        let eta = AnalyticDisplacement(|z: f64, t: f64| {
            let s = (PI * z / 2.0).sin();
            [
                [0.0, 0.03 * s * t.cos(), 0.05 * s],
                [0.0, 0.03 * PI / 2.0 * (PI * z / 2.0).cos() * t.cos(), 0.05 * PI / 2.0 * (PI * z / 2.0).cos()],
                [0.0, -0.03 * s * t.sin(), 0.0],
            ]
        });
        let b = reparameterize(&eta, &c).unwrap();
        for i in 0..=c.n_z {
            for k in 0..c.n_theta {
                let (z, tt) = (c.z_at(i), c.theta_at(k));
                let t = tt - 0.05 * (PI * z / 2.0).sin();
                let expect = 0.03 * (PI * z / 2.0).sin() * t.cos();
                assert!((b.at(i, k) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_eval_hits_grid_values() {
        let c = cyl(1.0);
        let f = BoundaryField::from_fn(c, |z, t| z * z + t.sin());
        for i in 0..=c.n_z {
            for k in 0..c.n_theta {
                assert!((f.eval(c.z_at(i), c.theta_at(k)) - f.at(i, k)).abs() < 1e-14);
            }
        }
        // Periodic wrap.
        assert!((f.eval(0.3, TAU + 0.1) - f.eval(0.3, 0.1)).abs() < 1e-14);
    }
}
