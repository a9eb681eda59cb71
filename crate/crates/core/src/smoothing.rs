//! The moment-preserving smoothing operator `E_h = A_h + B_h(id - A_h)` from
//! broken P1 (or Crouzeix-Raviart) functions into conforming P2 functions
//! vanishing on the boundary.
//!
//! `A_h` takes the value at each interior vertex from the lowest-index
//! element containing it. `B_h` adds on every interior face `F` the facet
//! bubble `φ_F = λ_a λ_b` with coefficient `∫_F {{w}} ds / ∫_F φ_F ds`, so
//! that `∫_F E_h w ds = ∫_F {{w}} ds`.

use crate::error::{Error, Result};
use crate::quadrature::{edge_rule, triangle_rule};
use crate::spaces::{face_bary, FEFunction, FESpace, SpaceKind};
use crate::sparse::SparseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

const VERTEX_BARY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn check_pair(input: &FESpace, target: &FESpace, kind: SpaceKind) -> Result<()> {
    if !Arc::ptr_eq(input.mesh(), target.mesh()) && input.mesh().triangles() != target.mesh().triangles() {
        return Err(Error::InvalidParameter("spaces live on different meshes".into()));
    }
    if target.kind() != kind {
        return Err(Error::InvalidParameter(format!(
            "expected a {kind:?} target space, got {:?}",
            target.kind()
        )));
    }
    if input.kind() == SpaceKind::P0Tensor {
        return Err(Error::Unsupported("smoothing of P0 tensor fields".into()));
    }
    Ok(())
}

/// `A_h` as a matrix from input dofs to conforming P1 dofs.
pub fn averaging_matrix(input: &FESpace, conf_p1: &FESpace) -> Result<SparseMatrix> {
    check_pair(input, conf_p1, SpaceKind::ConfP1)?;
    let mesh = input.mesh();
    let mut t = Vec::new();
    let mut vals = [0.0; 6];
    for (v, &(k, i)) in mesh.vertex_owners().iter().enumerate() {
        if mesh.is_boundary_vertex(v) {
            continue;
        }
        input.values(VERTEX_BARY[i], &mut vals);
        for (j, &d) in input.dofs(k).iter().enumerate() {
            if vals[j] != 0.0 {
                t.push((v, d, vals[j]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(mesh.num_vertices(), input.ndof(), &t))
}

/// `B_h` as a matrix from input dofs to conforming P2 dofs. Only the P2
/// edge dofs of interior faces are populated; since `φ_F` is a quarter of
/// the P2 edge basis function, the coefficient written is
/// `(3 / (2|F|)) ∫_F {{w}} ds`.
pub fn facet_bubble_matrix(input: &FESpace, conf_p2: &FESpace) -> Result<SparseMatrix> {
    check_pair(input, conf_p2, SpaceKind::ConfP2)?;
    let mesh = input.mesh();
    let nv = mesh.num_vertices();
    let rule = edge_rule(4)?;
    let mut t = Vec::new();
    let mut vals = [0.0; 6];
    for (f, face) in mesh.faces().iter().enumerate() {
        if face.is_boundary() {
            continue;
        }
        for (side, loc, _) in face.sides() {
            for (tq, w) in rule.edge_points().zip(&rule.weights) {
                input.values(face_bary(loc, tq), &mut vals);
                for (j, &d) in input.dofs(side).iter().enumerate() {
                    if vals[j] != 0.0 {
                        // ½ for the average, 3/2 · |F|⁻¹ · (w |F|) for the moment
                        t.push((nv + f, d, 0.75 * w * vals[j]));
                    }
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(conf_p2.ndof(), input.ndof(), &t))
}

/// Embedding of conforming P1 into P2 coefficients.
pub fn p1_to_p2_matrix(conf_p1: &FESpace, conf_p2: &FESpace) -> Result<SparseMatrix> {
    check_pair(conf_p1, conf_p2, SpaceKind::ConfP2)?;
    let mesh = conf_p1.mesh();
    let nv = mesh.num_vertices();
    let mut t: Vec<(usize, usize, f64)> = (0..nv).map(|v| (v, v, 1.0)).collect();
    for (f, face) in mesh.faces().iter().enumerate() {
        t.push((nv + f, face.vertices[0], 0.5));
        t.push((nv + f, face.vertices[1], 0.5));
    }
    Ok(SparseMatrix::from_triplets(conf_p2.ndof(), nv, &t))
}

/// `E_h` together with the spaces it connects.
#[derive(Debug, Clone)]
pub struct SmoothingOperator {
    pub input: Arc<FESpace>,
    pub target: Arc<FESpace>,
    pub matrix: SparseMatrix,
}

impl SmoothingOperator {
    /// `E_h z` as a P2 function.
    pub fn apply(&self, z: &FEFunction) -> Result<FEFunction> {
        FEFunction::new(self.target.clone(), self.matrix.matvec(z.coeffs()))
    }
}

/// `E_h = P A_h + B_h (id - A_h)` with `P` the P1-to-P2 embedding.
pub fn smoothing_matrix(input: &Arc<FESpace>, conf_p2: &Arc<FESpace>) -> Result<SmoothingOperator> {
    let mesh = input.mesh().clone();
    let p1 = FESpace::new(mesh, SpaceKind::ConfP1);
    let a = averaging_matrix(input, &p1)?;
    let emb = p1_to_p2_matrix(&p1, conf_p2)?;
    let b_in = facet_bubble_matrix(input, conf_p2)?;
    let b_p1 = facet_bubble_matrix(&p1, conf_p2)?;
    // P A + B_in - B_P1 A
    let correction = emb.add_scaled(1.0, &b_p1, -1.0).matmul(&a);
    let matrix = correction.add_scaled(1.0, &b_in, 1.0).prune_relative(1e-14);
    Ok(SmoothingOperator {
        input: input.clone(),
        target: conf_p2.clone(),
        matrix,
    })
}

/// Integrals `∫_K ∂_c ψ_j dx` of the gradients of the P2 basis: row `2k + c`,
/// column `j`.
pub fn p2_gradient_moments(conf_p2: &FESpace) -> Result<SparseMatrix> {
    if conf_p2.kind() != SpaceKind::ConfP2 {
        return Err(Error::InvalidParameter("gradient moments need the P2 space".into()));
    }
    let mesh = conf_p2.mesh();
    let rule = triangle_rule(1)?;
    let mut t = Vec::new();
    let mut g = [[0.0; 2]; 6];
    for k in 0..mesh.num_triangles() {
        let a = mesh.area(k);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            conf_p2.grads(k, *b, &mut g);
            for (i, &d) in conf_p2.dofs(k).iter().enumerate() {
                t.push((2 * k, d, 2.0 * w * a * g[i][0]));
                t.push((2 * k + 1, d, 2.0 * w * a * g[i][1]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(2 * mesh.num_triangles(), conf_p2.ndof(), &t))
}

/// Result of [`verify_moments`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub trials: usize,
    /// Largest `|∫_F (E_h z - {{z}}) ds|` over interior faces and trials.
    pub max_defect: f64,
    /// Largest `‖z‖_∞` over the trials.
    pub max_input: f64,
    pub pass: bool,
}

/// Face-moment defect of `E_h z` for `z` itself.
pub fn moment_defect(op: &SmoothingOperator, z: &FEFunction) -> Result<f64> {
    let mesh = op.input.mesh();
    let ez = op.apply(z)?;
    let rule = edge_rule(4)?;
    let mut worst = 0.0f64;
    for face in mesh.faces().iter().filter(|f| !f.is_boundary()) {
        let (km, lm) = (face.minus.unwrap(), face.minus_local.unwrap());
        let mut d = 0.0;
        for (t, w) in rule.edge_points().zip(&rule.weights) {
            let avg = 0.5 * (z.value(face.plus, face_bary(face.plus_local, t)) + z.value(km, face_bary(lm, t)));
            let e = ez.value(face.plus, face_bary(face.plus_local, t));
            d += w * face.length * (e - avg);
        }
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

/// Largest face-moment defect over random inputs with coefficients in
/// `[-1, 1]`; passes iff the defect is at most `1e-11 (1 + ‖z‖_∞)`.
pub fn verify_moments(op: &SmoothingOperator, trials: usize, seed: u64) -> Result<MomentReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_defect = 0.0f64;
    let mut max_input = 0.0f64;
    let mut pass = true;
    for _ in 0..trials {
        let c: Vec<f64> = (0..op.input.ndof()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = FEFunction::new(op.input.clone(), c)?;
        let d = moment_defect(op, &z)?;
        let zn = z.max_abs();
        pass &= d <= 1e-11 * (1.0 + zn);
        max_defect = max_defect.max(d);
        max_input = max_input.max(zn);
    }
    Ok(MomentReport {
        trials,
        max_defect,
        max_input,
        pass,
    })
}
