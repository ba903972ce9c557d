//! Net of linearly elastic curved rods attached to the shell surface.
//!
//! Each edge carries piecewise-linear infinitesimal rotations `w` and
//! displacements `d` (Cartesian components). Vertex nodes are shared between
//! incident edges, so kinematic continuity at the vertices is exact. The
//! inextensibility–unshearability constraint `∂_s d + t × w = 0` is collocated
//! at element midpoints and enforced with one 3-vector multiplier per element.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{e_r, e_theta, E_Z};
use crate::linalg::{SparseMatrix, Triplets};

/// Material data of one edge: cross-section area, elasticity and inertia
/// matrices in the local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodProperties {
    pub area: f64,
    pub h: Matrix3<f64>,
    pub m: Matrix3<f64>,
}

impl RodProperties {
    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.area > 0.0) {
            return Err(Error::Topology(format!("{what}: area must be positive")));
        }
        for (name, mat) in [("H", &self.h), ("M", &self.m)] {
            let sym = (mat - mat.transpose()).amax() <= 1e-12 * mat.amax();
            if !sym || nalgebra::Cholesky::new(*mat).is_none() {
                return Err(Error::Topology(format!(
                    "{what}: {name} must be symmetric positive definite"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub z: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub v0: usize,
    pub v1: usize,
    /// Nodes along the edge, endpoints included (at least 2).
    pub n_nodes: usize,
    pub props: RodProperties,
}

/// Graph of rods on the parameter rectangle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetTopology {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

/// Shortest signed angular increment from `a` to `b`.
pub fn periodic_delta(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

impl NetTopology {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Parameter-plane increments `(Δz, Δθ)` of an edge.
    pub fn edge_delta(&self, e: &Edge) -> (f64, f64) {
        let (a, b) = (&self.vertices[e.v0], &self.vertices[e.v1]);
        (b.z - a.z, periodic_delta(a.theta, b.theta))
    }

    /// Arclength of an edge on the cylinder of radius `r`.
    pub fn edge_length(&self, e: &Edge, r: f64) -> f64 {
        let (dz, dt) = self.edge_delta(e);
        (dz * dz + r * r * dt * dt).sqrt()
    }

    /// Checks the topology against a cylinder of radius `r` and length `l`.
    pub fn validate(&self, r: f64, l: f64) -> Result<()> {
        for v in &self.vertices {
            if !(v.z >= 0.0 && v.z <= l) || !v.theta.is_finite() {
                return Err(Error::Topology(format!(
                    "vertex {} lies outside the parameter rectangle",
                    v.id
                )));
            }
        }
        for e in &self.edges {
            if e.v0 >= self.vertices.len() || e.v1 >= self.vertices.len() {
                return Err(Error::Topology(format!("edge {} references a missing vertex", e.id)));
            }
            if e.n_nodes < 2 {
                return Err(Error::Topology(format!("edge {} needs at least 2 nodes", e.id)));
            }
            if !(self.edge_length(e, r) > 0.0) {
                return Err(Error::Topology(format!("edge {} has zero length", e.id)));
            }
            e.props.validate(&format!("edge {}", e.id))?;
        }
        if self.edges.is_empty() {
            return Ok(());
        }
        // Connectivity over the vertices touched by edges.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[e.v0].push(e.v1);
            adj[e.v1].push(e.v0);
        }
        let used: Vec<usize> = (0..self.vertices.len()).filter(|&v| !adj[v].is_empty()).collect();
        if used.len() != self.vertices.len() {
            return Err(Error::Topology("some vertices are not attached to any edge".into()));
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![used[0]];
        seen[used[0]] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Topology("the net graph is disconnected".into()));
        }
        Ok(())
    }

    /// Parses the text topology format:
    /// `vertex <id> <z> <theta>` and
    /// `edge <id> <v0> <v1> <n_nodes> <A> <H11> <H22> <H33> <M11> <M22> <M33>`,
    /// or the extended edge row with full row-major 3×3 `H` and `M`
    /// (`edge <id> <v0> <v1> <n_nodes> <A> <H 9 values> <M 9 values>`).
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut top = NetTopology::default();
        let mut vid: HashMap<String, usize> = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let err = |m: &str| Error::Topology(format!("line {}: {m}", lineno + 1));
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Topology(format!("line {}: bad number `{s}`", lineno + 1)))
            };
            match tok[0] {
                "vertex" => {
                    if tok.len() != 4 {
                        return Err(err("vertex needs: id z theta"));
                    }
                    if vid.contains_key(tok[1]) {
                        return Err(err("duplicate vertex id"));
                    }
                    vid.insert(tok[1].to_string(), top.vertices.len());
                    top.vertices.push(Vertex {
                        id: tok[1].to_string(),
                        z: num(tok[2])?,
                        theta: num(tok[3])?,
                    });
                }
                "edge" => {
                    let (h, m) = match tok.len() {
                        12 => {
                            let v: Vec<f64> = tok[6..12].iter().map(|s| num(s)).collect::<Result<_>>()?;
                            (
                                Matrix3::from_diagonal(&Vector3::new(v[0], v[1], v[2])),
                                Matrix3::from_diagonal(&Vector3::new(v[3], v[4], v[5])),
                            )
                        }
                        24 => {
                            let v: Vec<f64> = tok[6..24].iter().map(|s| num(s)).collect::<Result<_>>()?;
                            (
                                Matrix3::from_row_slice(&v[0..9]),
                                Matrix3::from_row_slice(&v[9..18]),
                            )
                        }
                        _ => return Err(err("edge needs: id v0 v1 n_nodes A H(3 or 9) M(3 or 9)")),
                    };
                    let find = |s: &str| {
                        vid.get(s)
                            .copied()
                            .ok_or_else(|| err(&format!("unknown vertex `{s}`")))
                    };
                    let n_nodes = tok[4]
                        .parse::<usize>()
                        .map_err(|_| err("n_nodes must be a positive integer"))?;
                    top.edges.push(Edge {
                        id: tok[1].to_string(),
                        v0: find(tok[2])?,
                        v1: find(tok[3])?,
                        n_nodes,
                        props: RodProperties {
                            area: num(tok[5])?,
                            h,
                            m,
                        },
                    });
                }
                other => return Err(err(&format!("unknown record `{other}`"))),
            }
        }
        Ok(top)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Closed zig-zag ring of `n` vertices alternating between `z = L/3` and
    /// `z = 2L/3`, with `nodes` nodes per edge.
    pub fn zigzag_ring(l: f64, n: usize, nodes: usize, props: RodProperties) -> Self {
        let vertices = (0..n)
            .map(|k| Vertex {
                id: format!("v{k}"),
                z: if k % 2 == 0 { l / 3.0 } else { 2.0 * l / 3.0 },
                theta: TAU * k as f64 / n as f64,
            })
            .collect();
        let edges = (0..n)
            .map(|k| Edge {
                id: format!("e{k}"),
                v0: k,
                v1: (k + 1) % n,
                n_nodes: nodes,
                props,
            })
            .collect();
        Self { vertices, edges }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# vertex <id> <z> <theta>\n");
        for v in &self.vertices {
            s.push_str(&format!("vertex {} {} {}\n", v.id, v.z, v.theta));
        }
        s.push_str("# edge <id> <v0> <v1> <n_nodes> <A> <H: 9 values> <M: 9 values>\n");
        for e in &self.edges {
            s.push_str(&format!(
                "edge {} {} {} {} {}",
                e.id, self.vertices[e.v0].id, self.vertices[e.v1].id, e.n_nodes, e.props.area
            ));
            for mat in [&e.props.h, &e.props.m] {
                for i in 0..3 {
                    for j in 0..3 {
                        s.push_str(&format!(" {}", mat[(i, j)]));
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// A net node: its location on the parameter rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetNode {
    pub z: f64,
    pub theta: f64,
}

/// One piecewise-linear rod element with its (midpoint) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RodElement {
    pub edge: usize,
    pub a: usize,
    pub b: usize,
    pub length: f64,
    pub t: Vector3<f64>,
    pub q: Matrix3<f64>,
    pub props: RodProperties,
}

impl RodElement {
    /// `Q H Qᵀ`.
    pub fn stiffness_tensor(&self) -> Matrix3<f64> {
        self.q * self.props.h * self.q.transpose()
    }

    /// `Q M Qᵀ`.
    pub fn inertia_tensor(&self) -> Matrix3<f64> {
        self.q * self.props.m * self.q.transpose()
    }
}

#[inline]
fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// Cross-product matrix `[t]×` with `[t]× w = t × w`.
pub fn cross_matrix(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t[2], t[1], t[2], 0.0, -t[0], -t[1], t[0], 0.0)
}

/// Cylinder-adapted frame `[t, e_r, t × e_r]` of a rod with parameter-plane
/// direction `(dz, dθ)` per unit arclength, at angle θ.
pub fn cylinder_frame(r: f64, dz_ds: f64, dtheta_ds: f64, theta: f64) -> (Vector3<f64>, Matrix3<f64>) {
    let t = v3(E_Z) * dz_ds + v3(e_theta(theta)) * (r * dtheta_ds);
    let t = t / t.norm();
    let er = v3(e_r(theta));
    let third = t.cross(&er);
    (t, Matrix3::from_columns(&[t, er, third]))
}

/// Discretized net: nodes, elements and assembled operators.
///
/// Degrees of freedom: `d` and `w` each have 3 Cartesian components per node,
/// ordered `3 * node + component`.
#[derive(Debug, Clone)]
pub struct NetModel {
    pub rho_s: f64,
    pub nodes: Vec<NetNode>,
    pub elements: Vec<RodElement>,
    /// `a_S` on w.
    pub stiffness: SparseMatrix,
    /// Translational mass `ρ_S A` on d (consistent P1).
    pub mass_trans: SparseMatrix,
    /// Rotational mass `ρ_S Q M Qᵀ` on w (consistent P1).
    pub mass_rot: SparseMatrix,
    /// Constraint rows (3 per element) acting on d.
    pub constraint_d: SparseMatrix,
    /// Constraint rows (3 per element) acting on w.
    pub constraint_w: SparseMatrix,
}

impl NetModel {
    /// Discretizes a topology on the cylinder of radius `r` with the
    /// cylinder-adapted frame.
    pub fn new(top: &NetTopology, r: f64, l: f64, rho_s: f64) -> Result<Self> {
        top.validate(r, l)?;
        if !(rho_s > 0.0) {
            return Err(Error::Config(format!("rod density must be positive, got {rho_s}")));
        }
        let mut nodes: Vec<NetNode> = top
            .vertices
            .iter()
            .map(|v| NetNode {
                z: v.z,
                theta: v.theta.rem_euclid(TAU),
            })
            .collect();
        let mut elements = Vec::new();
        for (ei, e) in top.edges.iter().enumerate() {
            let (dz, dt) = top.edge_delta(e);
            let len = top.edge_length(e, r);
            let (z0, t0) = (top.vertices[e.v0].z, top.vertices[e.v0].theta);
            let ne = e.n_nodes - 1;
            let mut ids = vec![e.v0];
            for k in 1..ne {
                let f = k as f64 / ne as f64;
                ids.push(nodes.len());
                nodes.push(NetNode {
                    z: z0 + f * dz,
                    theta: (t0 + f * dt).rem_euclid(TAU),
                });
            }
            ids.push(e.v1);
            for k in 0..ne {
                let fm = (k as f64 + 0.5) / ne as f64;
                let (t, q) = cylinder_frame(r, dz / len, dt / len, t0 + fm * dt);
                elements.push(RodElement {
                    edge: ei,
                    a: ids[k],
                    b: ids[k + 1],
                    length: len / ne as f64,
                    t,
                    q,
                    props: e.props,
                });
            }
        }
        Ok(Self::from_elements(nodes, elements, rho_s))
    }

    /// Assembles operators for explicitly given elements (custom frames).
    pub fn from_elements(nodes: Vec<NetNode>, elements: Vec<RodElement>, rho_s: f64) -> Self {
        let n = 3 * nodes.len();
        let m = 3 * elements.len();
        let mut k = Triplets::new(n, n);
        let mut ma = Triplets::new(n, n);
        let mut mm = Triplets::new(n, n);
        let mut bd = Triplets::new(m, n);
        let mut bw = Triplets::new(m, n);
        for (ei, el) in elements.iter().enumerate() {
            let hs = el.stiffness_tensor();
            let ms = el.inertia_tensor();
            let he = el.length;
            let ends = [el.a, el.b];
            let sign = [-1.0, 1.0];
            let p1 = [[2.0, 1.0], [1.0, 2.0]];
            for (x, &na) in ends.iter().enumerate() {
                for (y, &nb) in ends.iter().enumerate() {
                    for i in 0..3 {
                        for j in 0..3 {
                            k.push(3 * na + i, 3 * nb + j, sign[x] * sign[y] * hs[(i, j)] / he);
                            mm.push(3 * na + i, 3 * nb + j, rho_s * ms[(i, j)] * he * p1[x][y] / 6.0);
                        }
                        ma.push(3 * na + i, 3 * nb + i, rho_s * el.props.area * he * p1[x][y] / 6.0);
                    }
                }
            }
            let tx = cross_matrix(&el.t);
            for i in 0..3 {
                bd.push(3 * ei + i, 3 * el.b + i, 1.0 / he);
                bd.push(3 * ei + i, 3 * el.a + i, -1.0 / he);
                for j in 0..3 {
                    bw.push(3 * ei + i, 3 * el.a + j, 0.5 * tx[(i, j)]);
                    bw.push(3 * ei + i, 3 * el.b + j, 0.5 * tx[(i, j)]);
                }
            }
        }
        Self {
            rho_s,
            nodes,
            elements,
            stiffness: k.build(),
            mass_trans: ma.build(),
            mass_rot: mm.build(),
            constraint_d: bd.build(),
            constraint_w: bw.build(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Size of the d (and w) vectors.
    pub fn n_dof(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn n_constraints(&self) -> usize {
        3 * self.elements.len()
    }

    /// `a_S(w, w)`.
    pub fn elastic_energy(&self, w: &[f64]) -> f64 {
        self.stiffness.quad(w)
    }

    /// Per-element constraint residual `∂_s d + t × w` at midpoints.
    pub fn constraint_residual(&self, d: &[f64], w: &[f64]) -> Vec<f64> {
        let mut r = self.constraint_d.mul_vec(d);
        self.constraint_w.mul_vec_acc(w, 1.0, &mut r);
        r
    }

    /// Contact moment `q = Q H Qᵀ ∂_s w` per element.
    pub fn contact_moments(&self, w: &[f64]) -> Vec<Vector3<f64>> {
        self.elements
            .iter()
            .map(|el| {
                let wa = Vector3::new(w[3 * el.a], w[3 * el.a + 1], w[3 * el.a + 2]);
                let wb = Vector3::new(w[3 * el.b], w[3 * el.b + 1], w[3 * el.b + 2]);
                el.stiffness_tensor() * (wb - wa) / el.length
            })
            .collect()
    }

    /// Rank of the constraint operator on `(d, w)` and its null-space
    /// dimension over the constraint rows.
    pub fn constraint_rank(&self) -> (usize, usize) {
        let mut t = Triplets::new(self.n_constraints(), 2 * self.n_dof());
        t.add_block(0, 0, &self.constraint_d, 1.0);
        t.add_block(0, self.n_dof(), &self.constraint_w, 1.0);
        let b = t.build().to_dense();
        if b.nrows() == 0 {
            return (0, 0);
        }
        let svd = b.svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * smax)
            .count();
        (rank, self.n_constraints() - rank)
    }

    /// Edge-wise node sequences, for output.
    pub fn edge_polylines(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for el in &self.elements {
            let v = out.entry(el.edge).or_default();
            if v.is_empty() {
                v.push(el.a);
            }
            v.push(el.b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn props(h: [f64; 3], m: [f64; 3]) -> RodProperties {
        RodProperties {
            area: 1.0,
            h: Matrix3::from_diagonal(&Vector3::from(h)),
            m: Matrix3::from_diagonal(&Vector3::from(m)),
        }
    }

    /// Straight rod on [0, len] along t with a given frame, `ne` elements.
    fn straight_rod(ne: usize, len: f64, t: Vector3<f64>, q: Matrix3<f64>, p: RodProperties) -> NetModel {
        let nodes = (0..=ne)
            .map(|k| NetNode {
                z: len * k as f64 / ne as f64,
                theta: 0.0,
            })
            .collect();
        let elements = (0..ne)
            .map(|k| RodElement {
                edge: 0,
                a: k,
                b: k + 1,
                length: len / ne as f64,
                t,
                q,
                props: p,
            })
            .collect();
        NetModel::from_elements(nodes, elements, 1.0)
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        nalgebra::Rotation3::from_scaled_axis(axis).into_inner()
    }

    #[test]
    fn linear_rotation_energy_is_exact() {
        let rod = straight_rod(4, 1.0, Vector3::x(), Matrix3::identity(), props([1.0; 3], [1.0; 3]));
        let w: Vec<f64> = (0..5).flat_map(|k| [0.0, k as f64 / 4.0, 0.0]).collect();
        assert!((rod.elastic_energy(&w) - 1.0).abs() < 1e-14);
        assert_eq!(rod.elastic_energy(&vec![0.0; 15]), 0.0);
    }

    #[test]
    fn frame_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = props([2.0, 3.0, 5.0], [1.0, 2.0, 3.0]);
        let q = random_rotation(&mut rng);
        let o = random_rotation(&mut rng);
        let rod1 = straight_rod(3, 1.5, Vector3::x(), q, base);
        let rotated = RodProperties {
            h: o.transpose() * base.h * o,
            m: o.transpose() * base.m * o,
            ..base
        };
        let rod2 = straight_rod(3, 1.5, Vector3::x(), q * o, rotated);
        let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (rod1.elastic_energy(&w), rod2.elastic_energy(&w));
        assert!((a - b).abs() < 1e-12 * a.abs());
        let (m1, m2) = (rod1.contact_moments(&w), rod2.contact_moments(&w));
        for (x, y) in m1.iter().zip(&m2) {
            assert!((x - y).norm() < 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn rotational_mass_of_constant_field() {
        let rod = straight_rod(5, 1.0, Vector3::x(), Matrix3::identity(), props([1.0; 3], [1.0; 3]));
        let w: Vec<f64> = (0..6).flat_map(|_| [1.0, 0.0, 0.0]).collect();
        assert!((rod.mass_rot.quad(&w) - 1.0).abs() < 1e-14);
        assert!(nalgebra::Cholesky::new(rod.mass_rot.to_dense()).is_some());
        assert!(nalgebra::Cholesky::new(rod.mass_trans.to_dense()).is_some());
    }

    #[test]
    fn constraint_examples() {
        let rod = straight_rod(4, 1.0, Vector3::x(), Matrix3::identity(), props([1.0; 3], [1.0; 3]));
        let zero = vec![0.0; 15];
        assert!(rod.constraint_residual(&zero, &zero).iter().all(|&r| r == 0.0));
        // t = e₁, w = (0, 0, c): t × w = (0, −c, 0), so d = (0, c s, 0).
        let c = 0.7;
        let w: Vec<f64> = (0..5).flat_map(|_| [0.0, 0.0, c]).collect();
        let d: Vec<f64> = (0..5).flat_map(|k| [0.0, c * k as f64 / 4.0, 0.0]).collect();
        let r = rod.constraint_residual(&d, &w);
        assert!(r.iter().all(|v| v.abs() < 1e-14), "{r:?}");
    }

    #[test]
    fn constraint_matches_dense_difference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = Vector3::new(0.3, -0.4, 0.866).normalize();
        let rod = straight_rod(6, 2.0, t, Matrix3::identity(), props([1.0; 3], [1.0; 3]));
        let d: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = rod.constraint_residual(&d, &w);
        for e in 0..6 {
            let da = Vector3::new(d[3 * e], d[3 * e + 1], d[3 * e + 2]);
            let db = Vector3::new(d[3 * e + 3], d[3 * e + 4], d[3 * e + 5]);
            let wm = 0.5
                * (Vector3::new(w[3 * e], w[3 * e + 1], w[3 * e + 2])
                    + Vector3::new(w[3 * e + 3], w[3 * e + 4], w[3 * e + 5]));
            let oracle = (db - da) / (2.0 / 6.0) + t.cross(&wm);
            for i in 0..3 {
                assert!((r[3 * e + i] - oracle[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contact_moment_example() {
        let rod = straight_rod(2, 1.0, Vector3::x(), Matrix3::identity(), props([2.0, 3.0, 4.0], [1.0; 3]));
        let w: Vec<f64> = (0..3).flat_map(|k| [k as f64 / 2.0, 0.0, 0.0]).collect();
        for q in rod.contact_moments(&w) {
            assert!((q - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-14);
        }
        let wc: Vec<f64> = (0..3).flat_map(|_| [0.3, -0.2, 0.1]).collect();
        assert!(rod.contact_moments(&wc).iter().all(|q| q.norm() == 0.0));
    }

    #[test]
    fn stiffness_spectral_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = props([0.5, 2.0, 3.0], [1.0; 3]);
        let rod = straight_rod(5, 1.0, Vector3::x(), random_rotation(&mut rng), p);
        for _ in 0..20 {
            let w: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut grad2 = 0.0;
            for e in 0..5 {
                for i in 0..3 {
                    let g = (w[3 * e + 3 + i] - w[3 * e + i]) / 0.2;
                    grad2 += g * g * 0.2;
                }
            }
            assert!(rod.elastic_energy(&w) >= 0.5 * grad2 * (1.0 - 1e-12));
        }
    }

    fn demo_topology() -> NetTopology {
        NetTopology::zigzag_ring(2.0, 8, 4, props([1.0, 2.0, 2.0], [0.1, 0.05, 0.05]))
    }

    #[test]
    fn rigid_translation_is_free() {
        let net = NetModel::new(&demo_topology(), 1.0, 2.0, 1.0).unwrap();
        let d: Vec<f64> = (0..net.n_nodes()).flat_map(|_| [0.1, -0.2, 0.3]).collect();
        let w = vec![0.0; net.n_dof()];
        assert_eq!(net.elastic_energy(&w), 0.0);
        assert!(net.constraint_residual(&d, &w).iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn vertex_nodes_are_shared() {
        let top = demo_topology();
        let net = NetModel::new(&top, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(net.n_nodes(), 8 + 8 * 2);
        assert_eq!(net.elements.len(), 24);
        for v in 0..8 {
            let incident = net.elements.iter().filter(|e| e.a == v || e.b == v).count();
            assert_eq!(incident, 2);
        }
        let (rank, null) = net.constraint_rank();
        assert_eq!(rank + null, net.n_constraints());
    }

    #[test]
    fn mass_is_additive_over_edges() {
        // Two collinear edges versus one edge of the combined length.
        let p = props([1.0; 3], [1.0; 3]);
        let mut two = NetTopology {
            vertices: vec![
                Vertex { id: "a".into(), z: 0.0, theta: 0.0 },
                Vertex { id: "b".into(), z: 0.5, theta: 0.0 },
                Vertex { id: "c".into(), z: 1.5, theta: 0.0 },
            ],
            edges: vec![],
        };
        two.edges.push(Edge { id: "1".into(), v0: 0, v1: 1, n_nodes: 2, props: p });
        two.edges.push(Edge { id: "2".into(), v0: 1, v1: 2, n_nodes: 2, props: p });
        let net = NetModel::new(&two, 1.0, 2.0, 1.0).unwrap();
        // Field k(z) = z on every component (vertex-continuous by construction).
        let k: Vec<f64> = net.nodes.iter().flat_map(|n| [n.z, n.z, n.z]).collect();
        let total = net.mass_trans.quad(&k);
        let per_edge = |a: f64, b: f64| 3.0 * (b * b * b - a * a * a) / 3.0;
        assert!((total - (per_edge(0.0, 0.5) + per_edge(0.5, 1.5))).abs() < 1e-14);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let top = demo_topology();
        let back = NetTopology::parse(&top.to_text()).unwrap();
        assert_eq!(back.vertices.len(), 8);
        assert_eq!(back.edges.len(), 8);
        assert!((back.edges[3].props.h - top.edges[3].props.h).amax() < 1e-15);
        let text = "# ring\nvertex a 0.5 0\nvertex b 1.0 1.0 # comment\nedge e a b 3 0.1 1 1 1 2 2 2\n";
        let t = NetTopology::parse(text).unwrap();
        assert_eq!(t.edges[0].n_nodes, 3);
        assert!(NetTopology::parse("vertex a 0 0\nedge e a z 3 1 1 1 1 1 1 1\n").is_err());
        assert!(NetTopology::parse("bogus 1 2\n").is_err());
        let disconnected = "vertex a 0.1 0\nvertex b 0.2 0\nvertex c 0.5 1\nvertex d 0.6 1\n\
            edge e a b 2 1 1 1 1 1 1 1\nedge f c d 2 1 1 1 1 1 1 1\n";
        let t = NetTopology::parse(disconnected).unwrap();
        assert!(matches!(t.validate(1.0, 1.0), Err(Error::Topology(_))));
    }

    #[test]
    fn frames_are_rotations() {
        let net = NetModel::new(&demo_topology(), 1.3, 2.0, 1.0).unwrap();
        for el in &net.elements {
            assert!((el.q.transpose() * el.q - Matrix3::identity()).amax() < 1e-14);
            assert!((el.q.determinant() - 1.0).abs() < 1e-14);
            assert!((el.q.column(0) - el.t).norm() < 1e-15);
        }
    }
}
