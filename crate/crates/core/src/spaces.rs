//! Finite element spaces on a [`Mesh`]: broken P1, conforming P1 and P2,
//! Crouzeix-Raviart, and piecewise-constant 2-vector fields.
//!
//! Local dof numbering:
//!
//! * broken and conforming P1: vertex `i` of the element, basis `λ_i`;
//! * P2: vertices `0..3` (basis `λ_i(2λ_i - 1)`), then edges `3..6`, where
//!   local edge `i` is opposite vertex `i` (basis `4λ_{i+1}λ_{i+2}`);
//! * Crouzeix-Raviart: edge `i`, basis `1 - 2λ_i`;
//! * P0 tensor: the two components of the element's constant vector.
//!
//! Global P2 edge dofs are numbered `num_vertices + face index`.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    BrokenP1,
    ConfP1,
    ConfP2,
    Cr,
    P0Tensor,
}

impl SpaceKind {
    pub fn local_dofs(self) -> usize {
        match self {
            SpaceKind::BrokenP1 | SpaceKind::ConfP1 | SpaceKind::Cr => 3,
            SpaceKind::ConfP2 => 6,
            SpaceKind::P0Tensor => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisQuantity {
    Value,
    Grad,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisEval {
    Values(Vec<f64>),
    Grads(Vec<[f64; 2]>),
}

/// Barycentric coordinates on a side of a face at edge parameter `t`, where
/// `local` holds the local vertex indices of the face endpoints.
#[inline]
pub fn face_bary(local: [usize; 2], t: f64) -> [f64; 3] {
    let mut b = [0.0; 3];
    b[local[0]] = 1.0 - t;
    b[local[1]] = t;
    b
}

#[derive(Debug, Clone)]
pub struct FESpace {
    kind: SpaceKind,
    mesh: Arc<Mesh>,
    ndof: usize,
    dof_map: Vec<usize>,
    boundary_dofs: Vec<usize>,
    is_boundary: Vec<bool>,
}

impl FESpace {
    pub fn new(mesh: Arc<Mesh>, kind: SpaceKind) -> Self {
        let nt = mesh.num_triangles();
        let nv = mesh.num_vertices();
        let nl = kind.local_dofs();
        let mut dof_map = Vec::with_capacity(nl * nt);
        let mut is_boundary;
        let ndof;
        match kind {
            SpaceKind::BrokenP1 | SpaceKind::P0Tensor => {
                ndof = nl * nt;
                dof_map.extend(0..ndof);
                is_boundary = vec![false; ndof];
            }
            SpaceKind::ConfP1 => {
                ndof = nv;
                for t in mesh.triangles() {
                    dof_map.extend_from_slice(t);
                }
                is_boundary = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
            }
            SpaceKind::ConfP2 => {
                ndof = nv + mesh.num_faces();
                for k in 0..nt {
                    dof_map.extend_from_slice(&mesh.triangle(k));
                    dof_map.extend(mesh.elem_faces(k).iter().map(|f| nv + f));
                }
                is_boundary = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
                is_boundary.extend(mesh.faces().iter().map(|f| f.is_boundary()));
            }
            SpaceKind::Cr => {
                ndof = mesh.num_faces();
                for k in 0..nt {
                    dof_map.extend_from_slice(&mesh.elem_faces(k));
                }
                is_boundary = mesh.faces().iter().map(|f| f.is_boundary()).collect();
            }
        }
        let boundary_dofs = (0..ndof).filter(|&i| is_boundary[i]).collect();
        Self {
            kind,
            mesh,
            ndof,
            dof_map,
            boundary_dofs,
            is_boundary,
        }
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn n_local(&self) -> usize {
        self.kind.local_dofs()
    }

    /// Global indices of the local dofs of element `k`.
    pub fn dofs(&self, k: usize) -> &[usize] {
        let nl = self.n_local();
        &self.dof_map[nl * k..nl * (k + 1)]
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn is_boundary_dof(&self, i: usize) -> bool {
        self.is_boundary[i]
    }

    /// Dofs not constrained by the homogeneous boundary condition.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.ndof).filter(|&i| !self.is_boundary[i]).collect()
    }

    /// Local basis values at barycentric point `b` (for the P0 tensor space,
    /// the value of each component basis function).
    pub fn values(&self, b: [f64; 3], out: &mut [f64]) {
        match self.kind {
            SpaceKind::BrokenP1 | SpaceKind::ConfP1 => out[..3].copy_from_slice(&b),
            SpaceKind::ConfP2 => {
                for i in 0..3 {
                    out[i] = b[i] * (2.0 * b[i] - 1.0);
                    out[3 + i] = 4.0 * b[(i + 1) % 3] * b[(i + 2) % 3];
                }
            }
            SpaceKind::Cr => {
                for i in 0..3 {
                    out[i] = 1.0 - 2.0 * b[i];
                }
            }
            SpaceKind::P0Tensor => {
                out[0] = 1.0;
                out[1] = 1.0;
            }
        }
    }

    /// Physical gradients of the local basis of element `k` at `b` (for the P0
    /// tensor space, zero).
    pub fn grads(&self, k: usize, b: [f64; 3], out: &mut [[f64; 2]]) {
        let g = self.mesh.grad_bary(k);
        match self.kind {
            SpaceKind::BrokenP1 | SpaceKind::ConfP1 => out[..3].copy_from_slice(&g),
            SpaceKind::ConfP2 => {
                for i in 0..3 {
                    let s = 4.0 * b[i] - 1.0;
                    out[i] = [s * g[i][0], s * g[i][1]];
                    let (j, l) = ((i + 1) % 3, (i + 2) % 3);
                    out[3 + i] = [
                        4.0 * (b[j] * g[l][0] + b[l] * g[j][0]),
                        4.0 * (b[j] * g[l][1] + b[l] * g[j][1]),
                    ];
                }
            }
            SpaceKind::Cr => {
                for i in 0..3 {
                    out[i] = [-2.0 * g[i][0], -2.0 * g[i][1]];
                }
            }
            SpaceKind::P0Tensor => {
                out[0] = [0.0; 2];
                out[1] = [0.0; 2];
            }
        }
    }

    pub fn eval_basis(&self, k: usize, b: [f64; 3], what: BasisQuantity) -> BasisEval {
        let nl = self.n_local();
        match what {
            BasisQuantity::Value => {
                let mut v = vec![0.0; nl];
                self.values(b, &mut v);
                BasisEval::Values(v)
            }
            BasisQuantity::Grad => {
                let mut g = vec![[0.0; 2]; nl];
                self.grads(k, b, &mut g);
                BasisEval::Grads(g)
            }
        }
    }

    /// Barycentric coordinates of the local nodes.
    pub fn local_nodes(&self) -> Vec<[f64; 3]> {
        const V: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        const E: [[f64; 3]; 3] = [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        match self.kind {
            SpaceKind::BrokenP1 | SpaceKind::ConfP1 => V.to_vec(),
            SpaceKind::ConfP2 => V.iter().chain(E.iter()).copied().collect(),
            SpaceKind::Cr => E.to_vec(),
            SpaceKind::P0Tensor => vec![[1.0 / 3.0; 3]; 2],
        }
    }
}

/// Coefficient vector attached to a space.
#[derive(Debug, Clone)]
pub struct FEFunction {
    space: Arc<FESpace>,
    coeffs: Vec<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FESpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.ndof() {
            return Err(Error::InvalidParameter(format!(
                "coefficient vector has length {}, space has {} dofs",
                coeffs.len(),
                space.ndof()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: Arc<FESpace>) -> Self {
        let n = space.ndof();
        Self {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn space(&self) -> &Arc<FESpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Value on element `k` at barycentric point `b`.
    pub fn value(&self, k: usize, b: [f64; 3]) -> f64 {
        let mut v = [0.0; 6];
        self.space.values(b, &mut v);
        self.space
            .dofs(k)
            .iter()
            .zip(&v)
            .map(|(&d, phi)| self.coeffs[d] * phi)
            .sum()
    }

    /// Gradient on element `k` at barycentric point `b`; for the P0 tensor
    /// space, the element's vector.
    pub fn grad(&self, k: usize, b: [f64; 3]) -> [f64; 2] {
        if self.space.kind() == SpaceKind::P0Tensor {
            return self.vector(k);
        }
        let mut g = [[0.0; 2]; 6];
        self.space.grads(k, b, &mut g);
        let mut out = [0.0; 2];
        for (&d, gi) in self.space.dofs(k).iter().zip(&g) {
            out[0] += self.coeffs[d] * gi[0];
            out[1] += self.coeffs[d] * gi[1];
        }
        out
    }

    /// The constant vector of element `k` (P0 tensor space).
    pub fn vector(&self, k: usize) -> [f64; 2] {
        [self.coeffs[2 * k], self.coeffs[2 * k + 1]]
    }

    /// Maximum absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Nodal interpolant of `f`.
pub fn interpolate(space: &Arc<FESpace>, f: impl Fn(Point) -> f64) -> Result<FEFunction> {
    if space.kind() == SpaceKind::P0Tensor {
        return Err(Error::Unsupported(
            "scalar interpolation into the P0 tensor space; use interpolate_vector".into(),
        ));
    }
    let mesh = space.mesh();
    let nodes = space.local_nodes();
    let mut c = vec![f64::NAN; space.ndof()];
    for k in 0..mesh.num_triangles() {
        for (&d, &b) in space.dofs(k).iter().zip(&nodes) {
            if c[d].is_nan() {
                let x = mesh.map_point(k, b);
                let v = f(x);
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("nodal value at {x:?}")));
                }
                c[d] = v;
            }
        }
    }
    FEFunction::new(space.clone(), c)
}

/// Values of `f` at element centroids, as a P0 tensor field.
pub fn interpolate_vector(space: &Arc<FESpace>, f: impl Fn(Point) -> [f64; 2]) -> Result<FEFunction> {
    if space.kind() != SpaceKind::P0Tensor {
        return Err(Error::Unsupported("vector interpolation needs the P0 tensor space".into()));
    }
    let mesh = space.mesh();
    let mut c = Vec::with_capacity(space.ndof());
    for k in 0..mesh.num_triangles() {
        let x = mesh.map_point(k, [1.0 / 3.0; 3]);
        let v = f(x);
        if !(v[0].is_finite() && v[1].is_finite()) {
            return Err(Error::NonFinite(format!("value at {x:?}")));
        }
        c.extend_from_slice(&v);
    }
    FEFunction::new(space.clone(), c)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mesh::Square;
    use crate::quadrature::{edge_rule, triangle_rule};

    pub(crate) fn unit_square_two() -> Arc<Mesh> {
        Arc::new(
            Mesh::new(
                vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                vec![[0, 1, 2], [0, 2, 3]],
            )
            .unwrap(),
        )
    }

    fn space(m: &Arc<Mesh>, kind: SpaceKind) -> Arc<FESpace> {
        Arc::new(FESpace::new(m.clone(), kind))
    }

    #[test]
    fn dof_counts() {
        let m = unit_square_two();
        assert_eq!(space(&m, SpaceKind::BrokenP1).ndof(), 6);
        let p2 = space(&m, SpaceKind::ConfP2);
        assert_eq!(p2.ndof(), 9);
        assert_eq!(p2.boundary_dofs().len(), 8);
        let cr = space(&m, SpaceKind::Cr);
        assert_eq!(cr.ndof(), 5);
        assert_eq!(cr.boundary_dofs().len(), 4);
        assert_eq!(space(&m, SpaceKind::ConfP1).ndof(), 4);
        assert_eq!(space(&m, SpaceKind::P0Tensor).ndof(), 4);
        assert!(space(&m, SpaceKind::BrokenP1).boundary_dofs().is_empty());
    }

    #[test]
    fn lagrange_and_partition_of_unity() {
        let m = unit_square_two();
        for kind in [SpaceKind::BrokenP1, SpaceKind::ConfP2, SpaceKind::Cr] {
            let s = space(&m, kind);
            let nodes = s.local_nodes();
            let mut v = [0.0; 6];
            for (i, &b) in nodes.iter().enumerate() {
                s.values(b, &mut v);
                for j in 0..s.n_local() {
                    assert!((v[j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
                }
            }
            let b = [0.2, 0.3, 0.5];
            s.values(b, &mut v);
            assert!((v[..s.n_local()].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = Arc::new(Mesh::generate(2, Square::new(-1.0, 1.0)).unwrap());
        let b0 = [0.2, 0.45, 0.35];
        for kind in [SpaceKind::BrokenP1, SpaceKind::ConfP2, SpaceKind::Cr] {
            let s = space(&m, kind);
            for k in 0..m.num_triangles() {
                let mut g = [[0.0; 2]; 6];
                s.grads(k, b0, &mut g);
                let x0 = m.map_point(k, b0);
                let c = m.corners(k);
                // barycentric coordinates of a physical point
                let bary = |x: Point| {
                    let gb = m.grad_bary(k);
                    let l1 = gb[1][0] * (x[0] - c[0][0]) + gb[1][1] * (x[1] - c[0][1]);
                    let l2 = gb[2][0] * (x[0] - c[0][0]) + gb[2][1] * (x[1] - c[0][1]);
                    [1.0 - l1 - l2, l1, l2]
                };
                let h = 1e-6;
                for dir in 0..2 {
                    let mut xp = x0;
                    let mut xm = x0;
                    xp[dir] += h;
                    xm[dir] -= h;
                    let (mut vp, mut vm) = ([0.0; 6], [0.0; 6]);
                    s.values(bary(xp), &mut vp);
                    s.values(bary(xm), &mut vm);
                    for j in 0..s.n_local() {
                        assert!(((vp[j] - vm[j]) / (2.0 * h) - g[j][dir]).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let m = Arc::new(Mesh::generate(4, Square::new(-1.0, 1.0)).unwrap());
        let q = triangle_rule(4).unwrap();
        let affine = |x: Point| 0.3 - 1.2 * x[0] + 2.5 * x[1];
        let quad = |x: Point| x[0] * x[0] - 0.5 * x[0] * x[1] + x[1];
        for (kind, f) in [
            (SpaceKind::ConfP1, &affine as &dyn Fn(Point) -> f64),
            (SpaceKind::BrokenP1, &affine),
            (SpaceKind::Cr, &affine),
            (SpaceKind::ConfP2, &quad),
        ] {
            let s = space(&m, kind);
            let u = interpolate(&s, f).unwrap();
            for k in 0..m.num_triangles() {
                for &b in &q.points {
                    let x = m.map_point(k, b);
                    assert!((u.value(k, b) - f(x)).abs() < 1e-14, "{kind:?}");
                }
            }
        }
        let one = interpolate(&space(&m, SpaceKind::Cr), |_| 1.0).unwrap();
        assert!(one.coeffs().iter().all(|&c| c == 1.0));
        assert!(interpolate(&space(&m, SpaceKind::ConfP1), |_| f64::NAN).is_err());
    }

    #[test]
    fn cr_basis_has_zero_mean_jumps() {
        let m = Arc::new(Mesh::generate(4, Square::new(-1.0, 1.0)).unwrap());
        let s = space(&m, SpaceKind::Cr);
        let q = edge_rule(2).unwrap();
        for j in 0..s.ndof() {
            let mut c = vec![0.0; s.ndof()];
            c[j] = 1.0;
            let u = FEFunction::new(s.clone(), c).unwrap();
            for f in m.faces().iter().filter(|f| !f.is_boundary()) {
                let mut mean = 0.0;
                for (t, w) in q.edge_points().zip(&q.weights) {
                    let vp = u.value(f.plus, face_bary(f.plus_local, t));
                    let vm = u.value(f.minus.unwrap(), face_bary(f.minus_local.unwrap(), t));
                    mean += w * (vp - vm);
                }
                assert!(mean.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn conforming_functions_are_continuous() {
        let m = Arc::new(Mesh::generate(4, Square::new(-1.0, 1.0)).unwrap());
        let s = space(&m, SpaceKind::ConfP2);
        let u = interpolate(&s, |x| (3.0 * x[0]).sin() * x[1].exp()).unwrap();
        for f in m.faces().iter().filter(|f| !f.is_boundary()) {
            for &t in &[0.1, 0.5, 0.77] {
                let vp = u.value(f.plus, face_bary(f.plus_local, t));
                let vm = u.value(f.minus.unwrap(), face_bary(f.minus_local.unwrap(), t));
                assert!((vp - vm).abs() < 1e-14);
            }
        }
    }
}
