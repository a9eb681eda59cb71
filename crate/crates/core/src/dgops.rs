//! Jumps and averages on faces, the jump lifting, the DG gradient, face
//! modulars, local L² projections and the DG norm.
//!
//! For a face `F` with sides `K⁺`, `K⁻` and normal `n` pointing out of `K⁺`,
//! the scalar jump is `u⁺ - u⁻` and `⟦u⊗n⟧ = (u⁺ - u⁻) n`. On boundary
//! faces `⟦u⊗n⟧ = u⁺ n` and `{{u}} = u⁺`.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::nfunc::{norm, NFunctionParams};
use crate::quadrature::{edge_rule, triangle_rule, QuadRule};
use crate::spaces::{face_bary, FEFunction, FESpace, SpaceKind};
use crate::sparse::SparseMatrix;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceQuantity {
    JumpTensor,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceValue {
    Jump([f64; 2]),
    Average(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientVariant {
    /// Element-wise gradient `∇_h`.
    Local,
    /// DG gradient `∇_h - R_h`.
    Lifted,
}

/// Jump or average of `u` on face `f` at edge parameter `t`.
pub fn jump_average(u: &FEFunction, f: usize, t: f64, which: TraceQuantity) -> TraceValue {
    let face = u.space().mesh().face(f);
    let up = u.value(face.plus, face_bary(face.plus_local, t));
    let um = face
        .minus
        .zip(face.minus_local)
        .map(|(k, loc)| u.value(k, face_bary(loc, t)));
    match which {
        TraceQuantity::JumpTensor => {
            let j = up - um.unwrap_or(0.0);
            TraceValue::Jump([j * face.normal[0], j * face.normal[1]])
        }
        TraceQuantity::Average => TraceValue::Average(match um {
            Some(v) => 0.5 * (up + v),
            None => up,
        }),
    }
}

fn check_scalar(space: &FESpace) -> Result<()> {
    if space.kind() == SpaceKind::P0Tensor {
        return Err(Error::Unsupported("operation needs a scalar space".into()));
    }
    Ok(())
}

/// Matrix of `∇_h`: rows `2k + c` hold component `c` of the gradient on `K`.
/// Only defined for piecewise-affine spaces.
pub fn local_gradient_matrix(space: &FESpace) -> Result<SparseMatrix> {
    if !matches!(space.kind(), SpaceKind::BrokenP1 | SpaceKind::ConfP1 | SpaceKind::Cr) {
        return Err(Error::Unsupported(format!(
            "piecewise-constant gradient of {:?}",
            space.kind()
        )));
    }
    let mesh = space.mesh();
    let nt = mesh.num_triangles();
    let mut t = Vec::with_capacity(6 * nt);
    let mut g = [[0.0; 2]; 6];
    for k in 0..nt {
        space.grads(k, [1.0 / 3.0; 3], &mut g);
        for (i, &d) in space.dofs(k).iter().enumerate() {
            t.push((2 * k, d, g[i][0]));
            t.push((2 * k + 1, d, g[i][1]));
        }
    }
    Ok(SparseMatrix::from_triplets(2 * nt, space.ndof(), &t))
}

/// The lifting `R_h` into the P0 tensor space:
/// `(R_h u)|_K = |K|⁻¹ Σ_{F ⊂ ∂K} w_F ∫_F ⟦u⊗n⟧ ds` with `w_F = 1/2` on
/// interior and `1` on boundary faces.
pub fn lifting_matrix(space: &FESpace) -> Result<SparseMatrix> {
    check_scalar(space)?;
    let mesh = space.mesh();
    let rule = edge_rule(2 * 2)?;
    let mut t = Vec::new();
    let mut vals = [0.0; 6];
    for face in mesh.faces() {
        let weight = if face.is_boundary() { 1.0 } else { 0.5 };
        for (side, loc, sign) in face.sides() {
            // ∫_F φ_j over the traces of this side
            let mut moments = [0.0; 6];
            for (tq, w) in rule.edge_points().zip(&rule.weights) {
                space.values(face_bary(loc, tq), &mut vals);
                for (m, v) in moments.iter_mut().zip(&vals) {
                    *m += w * face.length * v;
                }
            }
            let dofs = space.dofs(side);
            for target in std::iter::once(face.plus).chain(face.minus) {
                let s = weight * sign / mesh.area(target);
                for (i, &d) in dofs.iter().enumerate() {
                    if moments[i] != 0.0 {
                        t.push((2 * target, d, s * moments[i] * face.normal[0]));
                        t.push((2 * target + 1, d, s * moments[i] * face.normal[1]));
                    }
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(2 * mesh.num_triangles(), space.ndof(), &t))
}

/// Matrix of `∇_h` or of the DG gradient `∇_h - R_h`.
pub fn dg_gradient_matrix(space: &FESpace, variant: GradientVariant) -> Result<SparseMatrix> {
    let local = local_gradient_matrix(space)?;
    match variant {
        GradientVariant::Local => Ok(local),
        GradientVariant::Lifted => {
            if space.kind() == SpaceKind::Cr {
                return Err(Error::Unsupported(
                    "the lifted DG gradient is not used for Crouzeix-Raviart functions".into(),
                ));
            }
            Ok(local.add_scaled(1.0, &lifting_matrix(space)?, -1.0))
        }
    }
}

/// `∇_h u` or `∇_h u - R_h u` as a P0 tensor field.
pub fn dg_gradient(u: &FEFunction, variant: GradientVariant) -> Result<FEFunction> {
    let g = dg_gradient_matrix(u.space(), variant)?;
    let p0 = Arc::new(FESpace::new(u.space().mesh().clone(), SpaceKind::P0Tensor));
    FEFunction::new(p0, g.matvec(u.coeffs()))
}

/// Scalar jumps `u⁺ - u⁻` (or `u⁺` on boundary faces) at the points of an
/// edge rule on every face. Row `f · n_q + q` belongs to face `f`, point `q`.
#[derive(Debug, Clone)]
pub struct FaceSampler {
    pub rule: QuadRule,
    pub matrix: SparseMatrix,
}

impl FaceSampler {
    pub fn new(space: &FESpace, degree: usize) -> Result<Self> {
        check_scalar(space)?;
        let rule = edge_rule(degree)?;
        let mesh = space.mesh();
        let nq = rule.len();
        let mut t = Vec::new();
        let mut vals = [0.0; 6];
        for (f, face) in mesh.faces().iter().enumerate() {
            for (q, tq) in rule.edge_points().enumerate() {
                for (side, loc, sign) in face.sides() {
                    space.values(face_bary(loc, tq), &mut vals);
                    for (i, &d) in space.dofs(side).iter().enumerate() {
                        if vals[i] != 0.0 {
                            t.push((f * nq + q, d, sign * vals[i]));
                        }
                    }
                }
            }
        }
        let matrix = SparseMatrix::from_triplets(mesh.num_faces() * nq, space.ndof(), &t);
        Ok(Self { rule, matrix })
    }

    pub fn points_per_face(&self) -> usize {
        self.rule.len()
    }

    /// Scalar jumps at all sample points.
    pub fn jumps(&self, coeffs: &[f64]) -> Vec<f64> {
        self.matrix.matvec(coeffs)
    }
}

/// `m_{φ_a,h}(u) = Σ_F h_F ∫_F φ_a(h_F⁻¹ |⟦u⊗n⟧|) ds`, face integrals by an
/// edge rule of the given degree.
pub fn modular_jump(u: &FEFunction, params: &NFunctionParams, degree: usize) -> Result<f64> {
    let sampler = FaceSampler::new(u.space(), degree)?;
    Ok(modular_from_jumps(u.space().mesh(), &sampler, &sampler.jumps(u.coeffs()), params))
}

/// Pseudo-modular from sampled jumps.
pub fn modular_from_jumps(mesh: &Mesh, sampler: &FaceSampler, jumps: &[f64], params: &NFunctionParams) -> f64 {
    let nq = sampler.points_per_face();
    let mut m = 0.0;
    for (f, face) in mesh.faces().iter().enumerate() {
        let h = face.diam();
        let mut s = 0.0;
        for q in 0..nq {
            s += sampler.rule.weights[q] * params.value(jumps[f * nq + q].abs() / h);
        }
        m += h * face.length * s;
    }
    m
}

/// The DG norm `(‖∇̃ u‖_p^p + ‖h^{-1/p'}⟦u⊗n⟧‖_{p,Γ}^p)^{1/p}` with `∇̃` the
/// chosen gradient; [`GradientVariant::Local`] gives `‖u‖_{h,p}`.
pub fn dg_norm(u: &FEFunction, p: f64, variant: GradientVariant, degree: usize) -> Result<f64> {
    let mesh = u.space().mesh();
    let g = dg_gradient(u, variant)?;
    let mut vol = 0.0;
    for k in 0..mesh.num_triangles() {
        vol += mesh.area(k) * norm(g.vector(k)).powf(p);
    }
    let sampler = FaceSampler::new(u.space(), degree)?;
    let jumps = sampler.jumps(u.coeffs());
    let nq = sampler.points_per_face();
    let mut face_sum = 0.0;
    for (f, face) in mesh.faces().iter().enumerate() {
        let mut s = 0.0;
        for q in 0..nq {
            s += sampler.rule.weights[q] * jumps[f * nq + q].abs().powf(p);
        }
        face_sum += face.diam().powf(1.0 - p) * face.length * s;
    }
    Ok((vol + face_sum).powf(1.0 / p))
}

/// Element-wise L² projection of a vector field onto the P0 tensor space
/// (cell means). `f` receives the element index and the physical point.
pub fn project_p0(space: &Arc<FESpace>, f: impl Fn(usize, Point) -> [f64; 2], degree: usize) -> Result<FEFunction> {
    if space.kind() != SpaceKind::P0Tensor {
        return Err(Error::Unsupported("P0 projection needs the P0 tensor space".into()));
    }
    let mesh = space.mesh();
    let rule = triangle_rule(degree)?;
    let mut c = Vec::with_capacity(space.ndof());
    for k in 0..mesh.num_triangles() {
        let mut s = [0.0; 2];
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let v = f(k, mesh.map_point(k, *b));
            s[0] += 2.0 * w * v[0];
            s[1] += 2.0 * w * v[1];
        }
        c.extend_from_slice(&s);
    }
    FEFunction::new(space.clone(), c)
}

/// Element-wise L² projection of a scalar field onto broken P1 by a local
/// 3x3 mass solve.
pub fn project_broken_p1(space: &Arc<FESpace>, f: impl Fn(usize, Point) -> f64, degree: usize) -> Result<FEFunction> {
    if space.kind() != SpaceKind::BrokenP1 {
        return Err(Error::Unsupported("P1 projection needs the broken P1 space".into()));
    }
    let mesh = space.mesh();
    let rule = triangle_rule(degree.max(2))?;
    let mut c = vec![0.0; space.ndof()];
    for k in 0..mesh.num_triangles() {
        // reference mass matrix (1 + δ_ij)/12 scaled by |K|; its inverse is
        // (12 δ_ij - 3) / |K|
        let mut r = [0.0; 3];
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let v = f(k, mesh.map_point(k, *b));
            for i in 0..3 {
                r[i] += 2.0 * w * mesh.area(k) * v * b[i];
            }
        }
        let a = mesh.area(k);
        for i in 0..3 {
            let mut s = 0.0;
            for (j, rj) in r.iter().enumerate() {
                s += (if i == j { 12.0 } else { 0.0 } - 3.0) * rj;
            }
            c[3 * k + i] = s / a;
        }
    }
    FEFunction::new(space.clone(), c)
}
