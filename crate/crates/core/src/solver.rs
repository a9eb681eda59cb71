//! Discrete primal (IIDG, LDG, Crouzeix-Raviart, conforming P1) and mixed
//! LDG formulations, solved by damped Newton iterations inside a fixed-point
//! loop on the max-shift `β`.
//!
//! All gradients are piecewise constant, so the volume term of the residual is
//! `Wᵀ`-weighted: with `s_K = S(∇̃u|_K)` the residual reads
//! `W s + α Jᵀ(w σ_β(J u)) - b`, where `W = (C E)ᵀ` with `C_{(K,c), j} =
//! ∫_K ∂_c ψ_j` over P2 basis functions `ψ_j` and `J` samples face jumps.
//! For the mixed scheme the element flux is eliminated, `S_h|_K =
//! D⁻¹(G_h u|_K)`, and the same residual is used with `s_K = S_h|_K`.

use crate::dgops::{dg_gradient_matrix, FaceSampler, GradientVariant};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::nfunc::{norm, ConstitutiveLaw, Mat2, NFunctionParams};
use crate::quadrature::triangle_rule;
use crate::smoothing::{p2_gradient_moments, smoothing_matrix, SmoothingOperator};
use crate::spaces::{FEFunction, FESpace, SpaceKind};
use crate::sparse::{SparseLu, SparseMatrix};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// Broken P1, local gradient in the law.
    Iidg,
    /// Broken P1, DG gradient in the law.
    Ldg,
    /// Mixed LDG with the flux eliminated element by element.
    MixedLdg,
    /// Crouzeix-Raviart with the jump penalty.
    CrStab,
    /// Crouzeix-Raviart without stabilisation.
    CrPlain,
    /// Conforming P1 Galerkin.
    ConfP1,
}

impl Formulation {
    pub const ALL: [Formulation; 6] = [
        Formulation::Iidg,
        Formulation::Ldg,
        Formulation::MixedLdg,
        Formulation::CrStab,
        Formulation::CrPlain,
        Formulation::ConfP1,
    ];

    pub fn space_kind(self) -> SpaceKind {
        match self {
            Formulation::Iidg | Formulation::Ldg | Formulation::MixedLdg => SpaceKind::BrokenP1,
            Formulation::CrStab | Formulation::CrPlain => SpaceKind::Cr,
            Formulation::ConfP1 => SpaceKind::ConfP1,
        }
    }

    /// The gradient `∇̃` entering the constitutive law.
    pub fn gradient_variant(self) -> GradientVariant {
        match self {
            Formulation::Ldg | Formulation::MixedLdg => GradientVariant::Lifted,
            _ => GradientVariant::Local,
        }
    }

    pub fn has_penalty(self) -> bool {
        matches!(
            self,
            Formulation::Iidg | Formulation::Ldg | Formulation::MixedLdg | Formulation::CrStab
        )
    }

    pub fn is_mixed(self) -> bool {
        self == Formulation::MixedLdg
    }

    pub fn name(self) -> &'static str {
        match self {
            Formulation::Iidg => "iidg",
            Formulation::Ldg => "ldg",
            Formulation::MixedLdg => "mixed",
            Formulation::CrStab => "cr-stab",
            Formulation::CrPlain => "cr",
            Formulation::ConfP1 => "conforming",
        }
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Formulation::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown formulation {s:?}")))
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub p: f64,
    pub delta: f64,
    pub alpha: f64,
    pub formulation: Formulation,
    /// Tolerance on the Euclidean norm of the discrete residual.
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Relative tolerance of the shift fixed point.
    pub shift_tol: f64,
    pub shift_max: usize,
    pub quad_degree: usize,
    pub damping: f64,
    pub max_halvings: usize,
}

impl SolverConfig {
    pub fn new(p: f64, delta: f64, alpha: f64, formulation: Formulation) -> Result<Self> {
        let c = Self {
            p,
            delta,
            alpha,
            formulation,
            newton_tol: 1e-10,
            newton_max: 50,
            shift_tol: 1e-8,
            shift_max: 20,
            quad_degree: 8,
            damping: 0.5,
            max_halvings: 30,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        NFunctionParams::new(self.p, self.delta, 0.0)?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return Err(Error::InvalidParameter("Newton tolerance and iteration cap must be positive".into()));
        }
        if !(self.shift_tol > 0.0) || self.shift_max == 0 {
            return Err(Error::InvalidParameter("shift tolerance and iteration cap must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidParameter(format!("damping factor {} outside (0, 1)", self.damping)));
        }
        Ok(())
    }

    pub fn law(&self) -> ConstitutiveLaw {
        ConstitutiveLaw::primal(self.p, self.delta).expect("validated parameters")
    }

    pub fn mixed_law(&self) -> ConstitutiveLaw {
        ConstitutiveLaw::paper_d(self.p, self.delta).expect("validated parameters")
    }

    /// Law of the jump penalty, `S_β`.
    pub fn penalty_law(&self, beta: f64) -> ConstitutiveLaw {
        ConstitutiveLaw::shifted(self.p, self.delta, beta).expect("validated parameters")
    }
}

/// Mesh-dependent matrices of one formulation.
#[derive(Debug, Clone)]
pub struct Operators {
    pub formulation: Formulation,
    pub mesh: Arc<Mesh>,
    pub space: Arc<FESpace>,
    /// P2 space and smoothing operator (absent for conforming P1).
    pub p2: Option<Arc<FESpace>>,
    pub smoothing: Option<SmoothingOperator>,
    /// `∇̃`: rows `2k + c`.
    pub grad: SparseMatrix,
    /// `W`: columns `2k + c`.
    pub test: SparseMatrix,
    pub sampler: Option<FaceSampler>,
    sampler_t: Option<SparseMatrix>,
    /// `w_q |F|` and `h_F` for each sampler row.
    face_weight: Vec<f64>,
    face_h: Vec<f64>,
    free: Vec<usize>,
    free_pos: Vec<usize>,
}

impl Operators {
    pub fn new(mesh: Arc<Mesh>, config: &SolverConfig) -> Result<Self> {
        let formulation = config.formulation;
        let space = Arc::new(FESpace::new(mesh.clone(), formulation.space_kind()));
        let grad = dg_gradient_matrix(&space, formulation.gradient_variant())?;
        let (p2, smoothing, test) = if formulation == Formulation::ConfP1 {
            let mut wt = grad.clone();
            let areas: Vec<f64> = (0..grad.nrows()).map(|r| mesh.area(r / 2)).collect();
            wt.scale_rows(&areas);
            (None, None, wt.transpose())
        } else {
            let p2 = Arc::new(FESpace::new(mesh.clone(), SpaceKind::ConfP2));
            let e = smoothing_matrix(&space, &p2)?;
            // round-off fill from cancellations is dropped so that W and ∇̃
            // share their element pattern
            let ce = p2_gradient_moments(&p2)?.matmul(&e.matrix).prune_relative(1e-12);
            (Some(p2), Some(e), ce.transpose())
        };
        let (sampler, sampler_t, face_weight, face_h) = if formulation.has_penalty() {
            let s = FaceSampler::new(&space, config.quad_degree)?;
            let nq = s.points_per_face();
            let mut w = Vec::with_capacity(mesh.num_faces() * nq);
            let mut h = Vec::with_capacity(mesh.num_faces() * nq);
            for face in mesh.faces() {
                for q in 0..nq {
                    w.push(s.rule.weights[q] * face.length);
                    h.push(face.diam());
                }
            }
            let st = s.matrix.transpose();
            (Some(s), Some(st), w, h)
        } else {
            (None, None, Vec::new(), Vec::new())
        };
        let free = space.free_dofs();
        let mut free_pos = vec![usize::MAX; space.ndof()];
        for (i, &d) in free.iter().enumerate() {
            free_pos[d] = i;
        }
        Ok(Self {
            formulation,
            mesh,
            space,
            p2,
            smoothing,
            grad,
            test,
            sampler,
            sampler_t,
            face_weight,
            face_h,
            free,
            free_pos,
        })
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    /// Full coefficient vector from free values (constrained dofs are zero).
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.space.ndof()];
        for (&d, &v) in self.free.iter().zip(x) {
            u[d] = v;
        }
        u
    }

    pub fn restrict_vec(&self, v: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| v[d]).collect()
    }

    fn restrict_mat(&self, a: &SparseMatrix) -> SparseMatrix {
        if self.free.len() == self.space.ndof() {
            return a.clone();
        }
        let mut t = Vec::with_capacity(a.nnz());
        for (i, &d) in self.free.iter().enumerate() {
            for (j, v) in a.row(d) {
                let fj = self.free_pos[j];
                if fj != usize::MAX {
                    t.push((i, fj, v));
                }
            }
        }
        SparseMatrix::from_triplets(self.free.len(), self.free.len(), &t)
    }

    /// Element gradients `∇̃u`.
    pub fn gradients(&self, u: &[f64]) -> Vec<[f64; 2]> {
        self.grad.matvec(u).chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    /// Right-hand side `b_i = (flux, ∇E_h φ_i)_Ω` (or `(flux, ∇φ_i)_Ω` for
    /// conforming P1) over all dofs, where `flux` is `S(∇u)` of the exact
    /// solution.
    pub fn rhs(&self, flux: impl Fn(Point) -> [f64; 2], degree: usize) -> Result<Vec<f64>> {
        match (&self.p2, &self.smoothing) {
            (Some(p2), Some(e)) => {
                let r = rhs_functional(&flux, p2, degree)?;
                Ok(e.matrix.matvec_transpose(&r))
            }
            _ => rhs_functional(&flux, &self.space, degree),
        }
    }
}

/// `r_j = ∫_Ω flux · ∇ψ_j dx` over the basis of `space`.
pub fn rhs_functional(flux: impl Fn(Point) -> [f64; 2], space: &FESpace, degree: usize) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let rule = triangle_rule(degree)?;
    let mut r = vec![0.0; space.ndof()];
    let mut g = [[0.0; 2]; 6];
    for k in 0..mesh.num_triangles() {
        let a = mesh.area(k);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.map_point(k, *b);
            let s = flux(x);
            if !(s[0].is_finite() && s[1].is_finite()) {
                return Err(Error::NonFinite(format!("right-hand side integrand at {x:?}")));
            }
            space.grads(k, *b, &mut g);
            for (i, &d) in space.dofs(k).iter().enumerate() {
                r[d] += 2.0 * w * a * (s[0] * g[i][0] + s[1] * g[i][1]);
            }
        }
    }
    Ok(r)
}

/// The max-shift `β(u) = ‖∇̃u‖_∞` for `p > 2`, zero otherwise.
pub fn beta_shift(u: &FEFunction, p: f64, variant: GradientVariant) -> Result<f64> {
    if p <= 2.0 {
        return Ok(0.0);
    }
    let g = dg_gradient_matrix(u.space(), variant)?.matvec(u.coeffs());
    Ok(g.chunks(2).map(|c| c[0].hypot(c[1])).fold(0.0, f64::max))
}

fn max_gradient(grads: &[[f64; 2]]) -> f64 {
    grads.iter().map(|g| norm(*g)).fold(0.0, f64::max)
}

fn inverse2(m: Mat2) -> Result<Mat2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return Err(Error::NonFinite("singular flux Jacobian".into()));
    }
    Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// Element values `s_K` entering the volume term and optionally their
/// derivatives with respect to `∇̃u|_K`.
fn element_fluxes(config: &SolverConfig, grads: &[[f64; 2]], with_jac: bool) -> Result<(Vec<[f64; 2]>, Vec<Mat2>)> {
    let mut s = Vec::with_capacity(grads.len());
    let mut jac = Vec::with_capacity(if with_jac { grads.len() } else { 0 });
    if config.formulation.is_mixed() {
        let d = config.mixed_law();
        for g in grads {
            let sk = d.d_inverse(*g)?;
            if with_jac {
                jac.push(inverse2(d.d_jacobian(sk)?)?);
            }
            s.push(sk);
        }
    } else {
        let law = config.law();
        for g in grads {
            s.push(law.s_value(*g));
            if with_jac {
                jac.push(law.s_jacobian(*g)?);
            }
        }
    }
    Ok((s, jac))
}

/// Residual over free dofs and, if requested, the Jacobian over free dofs,
/// at full coefficient vector `u` with the penalty shift frozen at `beta`.
/// Covers every formulation; for the mixed scheme the flux is eliminated.
pub fn assemble_primal(
    u: &[f64],
    beta: f64,
    config: &SolverConfig,
    ops: &Operators,
    rhs: &[f64],
    with_jacobian: bool,
) -> Result<(Vec<f64>, Option<SparseMatrix>)> {
    let grads = ops.gradients(u);
    let (s, blocks) = element_fluxes(config, &grads, with_jacobian)?;
    let flat: Vec<f64> = s.iter().flat_map(|v| v.iter().copied()).collect();
    let mut r = ops.test.matvec(&flat);
    let mut pen_jac = None;
    if let (Some(sampler), Some(st)) = (&ops.sampler, &ops.sampler_t) {
        let law = config.penalty_law(beta);
        let jumps = sampler.jumps(u);
        let mut sig = Vec::with_capacity(jumps.len());
        let mut dsig = Vec::with_capacity(if with_jacobian { jumps.len() } else { 0 });
        for (q, &j) in jumps.iter().enumerate() {
            let h = ops.face_h[q];
            let scale = config.alpha * ops.face_weight[q];
            let qv = [j / h, 0.0];
            sig.push(scale * law.s_value(qv)[0]);
            if with_jacobian {
                dsig.push(scale * law.s_jacobian(qv)?[0][0] / h);
            }
        }
        let pen = st.matvec(&sig);
        for (ri, pi) in r.iter_mut().zip(&pen) {
            *ri += pi;
        }
        if with_jacobian {
            let mut scaled = sampler.matrix.clone();
            scaled.scale_rows(&dsig);
            pen_jac = Some(st.matmul(&scaled));
        }
    }
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri -= bi;
    }
    let r = ops.restrict_vec(&r);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("residual".into()));
    }
    if !with_jacobian {
        return Ok((r, None));
    }
    // block-diagonal law derivative applied to the rows of ∇̃
    let g = &ops.grad;
    let mut t = Vec::with_capacity(2 * g.nnz());
    for (k, b) in blocks.iter().enumerate() {
        for c in 0..2 {
            for d in 0..2 {
                if b[c][d] != 0.0 || c == d {
                    t.extend(g.row(2 * k + d).map(|(j, v)| (2 * k + c, j, b[c][d] * v)));
                }
            }
        }
    }
    let dg = SparseMatrix::from_triplets(g.nrows(), g.ncols(), &t);
    let mut jac = ops.test.matmul(&dg);
    if let Some(pj) = pen_jac {
        jac = jac.add_scaled(1.0, &pj, 1.0);
    }
    Ok((r, Some(ops.restrict_mat(&jac))))
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Converged discrete solution.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub formulation: Formulation,
    pub u: FEFunction,
    /// Element fluxes `S_h` (mixed scheme only).
    pub flux: Option<FEFunction>,
    /// Shift used in the last inner solve.
    pub beta: f64,
    pub newton_iterations: usize,
    pub shift_iterations: usize,
    pub residual_norm: f64,
}

/// Damped Newton for a frozen shift. Returns the new free vector, the
/// residual norm and the number of Newton steps.
fn inner_newton(
    config: &SolverConfig,
    ops: &Operators,
    rhs: &[f64],
    x0: Vec<f64>,
    beta: f64,
    lu: &mut SparseLu,
) -> Result<(Vec<f64>, f64, usize)> {
    let mut x = x0;
    let mut trace = String::new();
    let (mut r, _) = assemble_primal(&ops.expand(&x), beta, config, ops, rhs, false)?;
    let mut rn = euclid(&r);
    for it in 0..config.newton_max {
        if rn <= config.newton_tol {
            return Ok((x, rn, it));
        }
        let (_, jac) = assemble_primal(&ops.expand(&x), beta, config, ops, rhs, true)?;
        lu.factorize(&jac.unwrap())?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=config.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + t * b).collect();
            match assemble_primal(&ops.expand(&trial), beta, config, ops, rhs, false) {
                Ok((rt, _)) => {
                    let rtn = euclid(&rt);
                    if rtn <= (1.0 - 1e-4 * t) * rn {
                        let _ = writeln!(trace, "  step {it}: |R| {rn:.3e} -> {rtn:.3e}, t = {t}");
                        x = trial;
                        r = rt;
                        rn = rtn;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::NonFinite(_)) | Err(Error::SingularLaw { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= config.damping;
        }
        if !accepted {
            let _ = writeln!(trace, "  step {it}: no decrease from |R| = {rn:.3e}");
            return Err(Error::NewtonStagnation {
                iteration: it,
                residual: rn,
                trace,
            });
        }
    }
    if rn <= config.newton_tol {
        return Ok((x, rn, config.newton_max));
    }
    Err(Error::NewtonMaxIterations {
        iterations: config.newton_max,
        residual: rn,
    })
}

/// Outer fixed point on the shift with inner damped Newton iterations.
/// `initial` must live in `ops.space`; constrained dofs are ignored.
pub fn newton_solve(config: &SolverConfig, ops: &Operators, rhs: &[f64], initial: &FEFunction) -> Result<DiscreteSolution> {
    config.validate()?;
    if config.formulation != ops.formulation {
        return Err(Error::InvalidParameter(format!(
            "operators built for {:?}, config asks for {:?}",
            ops.formulation, config.formulation
        )));
    }
    if initial.coeffs().len() != ops.space.ndof() || rhs.len() != ops.space.ndof() {
        return Err(Error::InvalidParameter("initial guess or right-hand side has the wrong length".into()));
    }
    let mut lu = SparseLu::new();
    let mut x = ops.restrict_vec(initial.coeffs());
    let shifted = config.p > 2.0 && config.formulation.has_penalty();
    let mut beta = if shifted { max_gradient(&ops.gradients(&ops.expand(&x))) } else { 0.0 };
    let mut total = 0;
    let mut shift_iterations = 0;
    loop {
        let (xn, rn, its) = inner_newton(config, ops, rhs, x, beta, &mut lu)?;
        x = xn;
        total += its;
        shift_iterations += 1;
        let converged = if shifted {
            let new_beta = max_gradient(&ops.gradients(&ops.expand(&x)));
            let change = (new_beta - beta).abs();
            if change <= config.shift_tol * (1.0 + beta) {
                true
            } else if shift_iterations >= config.shift_max {
                return Err(Error::ShiftNotConverged {
                    iterations: shift_iterations,
                    change,
                });
            } else {
                beta = new_beta;
                false
            }
        } else {
            true
        };
        if converged {
            let coeffs = ops.expand(&x);
            let flux = if config.formulation.is_mixed() {
                let (s, _) = element_fluxes(config, &ops.gradients(&coeffs), false)?;
                let p0 = Arc::new(FESpace::new(ops.mesh.clone(), SpaceKind::P0Tensor));
                Some(FEFunction::new(p0, s.iter().flat_map(|v| v.iter().copied()).collect())?)
            } else {
                None
            };
            return Ok(DiscreteSolution {
                formulation: config.formulation,
                u: FEFunction::new(ops.space.clone(), coeffs)?,
                flux,
                beta,
                newton_iterations: total,
                shift_iterations,
                residual_norm: rn,
            });
        }
    }
}

/// Mixed LDG solve: [`newton_solve`] restricted to [`Formulation::MixedLdg`].
pub fn solve_mixed(config: &SolverConfig, ops: &Operators, rhs: &[f64], initial: &FEFunction) -> Result<DiscreteSolution> {
    if !config.formulation.is_mixed() {
        return Err(Error::InvalidParameter("solve_mixed needs the mixed formulation".into()));
    }
    newton_solve(config, ops, rhs, initial)
}

/// Euclidean norm of the residual of `u` with shift `beta`.
pub fn residual_norm(config: &SolverConfig, ops: &Operators, rhs: &[f64], u: &FEFunction, beta: f64) -> Result<f64> {
    let (r, _) = assemble_primal(u.coeffs(), beta, config, ops, rhs, false)?;
    Ok(euclid(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgops::modular_from_jumps;
    use crate::mesh::Square;
    use crate::nfunc::phi_eval;
    use crate::nfunc::PhiQuantity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_mesh(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::generate(n, Square::new(-1.0, 1.0)).unwrap())
    }

    fn smooth_grad(x: Point) -> [f64; 2] {
        [-2.0 * x[0] * (1.0 - x[1] * x[1]), -2.0 * x[1] * (1.0 - x[0] * x[0])]
    }

    fn solve(config: &SolverConfig, mesh: &Arc<Mesh>, flux: impl Fn(Point) -> [f64; 2]) -> (Operators, Vec<f64>, DiscreteSolution) {
        let ops = Operators::new(mesh.clone(), config).unwrap();
        let b = ops.rhs(flux, config.quad_degree).unwrap();
        let sol = newton_solve(config, &ops, &b, &FEFunction::zeros(ops.space.clone())).unwrap();
        (ops, b, sol)
    }

    fn random_free(ops: &Operators, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
        ops.expand(&(0..ops.num_free()).map(|_| scale * rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    #[test]
    fn names_round_trip() {
        for f in Formulation::ALL {
            assert_eq!(f.name().parse::<Formulation>().unwrap(), f);
        }
        assert_eq!("cr".parse::<Formulation>().unwrap(), Formulation::CrPlain);
        assert!("sip".parse::<Formulation>().is_err());
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = square_mesh(4);
        for f in Formulation::ALL {
            let cfg = SolverConfig::new(3.0, 0.01, 10.0, f).unwrap();
            let (_, _, sol) = solve(&cfg, &mesh, |_| [0.0, 0.0]);
            assert!(sol.newton_iterations <= 1, "{f:?}");
            assert_eq!(sol.u.max_abs(), 0.0, "{f:?}");
            if let Some(s) = &sol.flux {
                assert_eq!(s.max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn linear_case_converges_in_one_step() {
        let mesh = square_mesh(4);
        for f in Formulation::ALL {
            let cfg = SolverConfig::new(2.0, 0.0, 10.0, f).unwrap();
            let (ops, b, sol) = solve(&cfg, &mesh, smooth_grad);
            assert_eq!(sol.newton_iterations, 1, "{f:?}");
            assert!(residual_norm(&cfg, &ops, &b, &sol.u, sol.beta).unwrap() <= cfg.newton_tol);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mesh = square_mesh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in Formulation::ALL {
            for p in [1.5, 3.0] {
                let cfg = SolverConfig::new(p, 0.01, 10.0, f).unwrap();
                let ops = Operators::new(mesh.clone(), &cfg).unwrap();
                let b = ops.rhs(smooth_grad, 4).unwrap();
                let beta = 0.7;
                for _ in 0..20 {
                    let u = random_free(&ops, &mut rng, 1.0);
                    let d = random_free(&ops, &mut rng, 1.0);
                    let (_, jac) = assemble_primal(&u, beta, &cfg, &ops, &b, true).unwrap();
                    let jd = jac.unwrap().matvec(&ops.restrict_vec(&d));
                    let eps = 1e-6;
                    let shifted = |s: f64| -> Vec<f64> {
                        let v: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                        assemble_primal(&v, beta, &cfg, &ops, &b, false).unwrap().0
                    };
                    let (rp, rm) = (shifted(eps), shifted(-eps));
                    let err = rp
                        .iter()
                        .zip(&rm)
                        .zip(&jd)
                        .map(|((a, b), j)| ((a - b) / (2.0 * eps) - j).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(err <= 1e-5 * euclid(&jd), "{f:?} p={p}: {err:e} vs {:e}", euclid(&jd));
                }
            }
        }
    }

    #[test]
    fn linear_jacobian_is_constant() {
        let mesh = square_mesh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in Formulation::ALL {
            let cfg = SolverConfig::new(2.0, 0.0, 10.0, f).unwrap();
            let ops = Operators::new(mesh.clone(), &cfg).unwrap();
            let b = vec![0.0; ops.space.ndof()];
            let j0 = assemble_primal(&random_free(&ops, &mut rng, 1.0), 0.0, &cfg, &ops, &b, true).unwrap().1.unwrap();
            let j1 = assemble_primal(&random_free(&ops, &mut rng, 5.0), 0.0, &cfg, &ops, &b, true).unwrap().1.unwrap();
            let diff = j0.add_scaled(1.0, &j1, -1.0).max_abs();
            assert!(diff <= 1e-12 * j0.max_abs(), "{f:?}: {diff:e}");
        }
    }

    #[test]
    fn beta_shift_is_max_gradient() {
        let mesh = square_mesh(2);
        let space = Arc::new(FESpace::new(mesh.clone(), SpaceKind::BrokenP1));
        let mut c = vec![0.0; space.ndof()];
        for (k, g) in [1.0, 2.0, 0.5].into_iter().enumerate() {
            for (i, &d) in space.dofs(k).iter().enumerate() {
                c[d] = g * mesh.vertex(mesh.triangle(k)[i])[0];
            }
        }
        let u = FEFunction::new(space, c).unwrap();
        assert!((beta_shift(&u, 3.0, GradientVariant::Local).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(beta_shift(&u, 1.5, GradientVariant::Local).unwrap(), 0.0);
    }

    #[test]
    fn rhs_is_zero_and_linear_in_the_flux() {
        let mesh = square_mesh(2);
        let cfg = SolverConfig::new(2.0, 0.0, 10.0, Formulation::Iidg).unwrap();
        let ops = Operators::new(mesh, &cfg).unwrap();
        assert!(ops.rhs(|_| [0.0, 0.0], 4).unwrap().iter().all(|&v| v == 0.0));
        let g = |x: Point| [x[0] * x[1], 1.0 - x[0]];
        let h = |x: Point| [x[1].sin(), x[0] * x[0]];
        let (bg, bh) = (ops.rhs(g, 6).unwrap(), ops.rhs(h, 6).unwrap());
        let bs = ops
            .rhs(|x| [2.0 * g(x)[0] - 3.0 * h(x)[0], 2.0 * g(x)[1] - 3.0 * h(x)[1]], 6)
            .unwrap();
        for i in 0..bs.len() {
            assert!((bs[i] - (2.0 * bg[i] - 3.0 * bh[i])).abs() < 1e-13);
        }
    }

    #[test]
    fn rhs_matches_strong_form() {
        // (∇u, ∇E z) = (f, E z) with f = -Δu for u = (1 - x²)(1 - y²)
        let mesh = square_mesh(4);
        for f in [Formulation::Iidg, Formulation::CrPlain] {
            let cfg = SolverConfig::new(2.0, 0.0, 10.0, f).unwrap();
            let ops = Operators::new(mesh.clone(), &cfg).unwrap();
            let b = ops.rhs(smooth_grad, 6).unwrap();
            let p2 = ops.p2.as_ref().unwrap();
            let rule = triangle_rule(6).unwrap();
            let mut m = vec![0.0; p2.ndof()];
            let mut vals = [0.0; 6];
            for k in 0..mesh.num_triangles() {
                for (bq, w) in rule.points.iter().zip(&rule.weights) {
                    let x = mesh.map_point(k, *bq);
                    let fx = 2.0 * (1.0 - x[0] * x[0]) + 2.0 * (1.0 - x[1] * x[1]);
                    p2.values(*bq, &mut vals);
                    for (i, &d) in p2.dofs(k).iter().enumerate() {
                        m[d] += 2.0 * w * mesh.area(k) * fx * vals[i];
                    }
                }
            }
            let strong = ops.smoothing.as_ref().unwrap().matrix.matvec_transpose(&m);
            for &d in ops.free_dofs() {
                assert!((b[d] - strong[d]).abs() < 1e-10, "{f:?} dof {d}: {} vs {}", b[d], strong[d]);
            }
        }
    }

    #[test]
    fn mixed_agrees_with_ldg_in_the_linear_case() {
        let mesh = square_mesh(4);
        let cfg_l = SolverConfig::new(2.0, 0.0, 10.0, Formulation::Ldg).unwrap();
        let cfg_m = SolverConfig::new(2.0, 0.0, 10.0, Formulation::MixedLdg).unwrap();
        let (_, _, l) = solve(&cfg_l, &mesh, smooth_grad);
        let (_, _, m) = solve(&cfg_m, &mesh, smooth_grad);
        let diff = l.u.coeffs().iter().zip(m.u.coeffs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff:e}");
    }

    #[test]
    fn mixed_flux_satisfies_first_equation() {
        let mesh = square_mesh(4);
        for p in [1.5, 3.0] {
            let cfg = SolverConfig::new(p, 0.01, 10.0, Formulation::MixedLdg).unwrap();
            let (ops, _, sol) = solve(&cfg, &mesh, smooth_grad);
            let g = ops.gradients(sol.u.coeffs());
            let d = cfg.mixed_law();
            let s = sol.flux.as_ref().unwrap();
            for (k, gk) in g.iter().enumerate() {
                let ds = d.d_value(s.vector(k));
                assert!((ds[0] - gk[0]).abs().max((ds[1] - gk[1]).abs()) <= 1e-9);
            }
        }
    }

    #[test]
    fn nonlinear_iteration_count_is_bounded() {
        // measured: 6 (no shift loop) to 23 Newton steps summed over shift updates
        let mesh = square_mesh(4);
        for f in Formulation::ALL {
            let cfg = SolverConfig::new(3.0, 0.01, 10.0, f).unwrap();
            let (ops, b, sol) = solve(&cfg, &mesh, smooth_grad);
            assert!(sol.newton_iterations <= 25, "{f:?}: {}", sol.newton_iterations);
            assert!(residual_norm(&cfg, &ops, &b, &sol.u, sol.beta).unwrap() <= cfg.newton_tol);
        }
    }

    /// `⟨T u - T v, u - v⟩` for the schemes whose test gradient equals `∇̃`.
    #[test]
    fn operator_is_monotone() {
        let mesh = square_mesh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in [Formulation::Ldg, Formulation::MixedLdg, Formulation::ConfP1, Formulation::CrPlain] {
            for p in [2.0, 3.0, 4.5] {
                let cfg = SolverConfig::new(p, 0.01, 10.0, f).unwrap();
                let ops = Operators::new(mesh.clone(), &cfg).unwrap();
                let b = vec![0.0; ops.space.ndof()];
                for _ in 0..20 {
                    let u = random_free(&ops, &mut rng, 2.0);
                    let v = random_free(&ops, &mut rng, 2.0);
                    let ru = assemble_primal(&u, 1.0, &cfg, &ops, &b, false).unwrap().0;
                    let rv = assemble_primal(&v, 1.0, &cfg, &ops, &b, false).unwrap().0;
                    let (fu, fv) = (ops.restrict_vec(&u), ops.restrict_vec(&v));
                    let pair: f64 = (0..fu.len()).map(|i| (ru[i] - rv[i]) * (fu[i] - fv[i])).sum();
                    let scale: f64 = (0..fu.len()).map(|i| (ru[i] - rv[i]).abs() * (fu[i] - fv[i]).abs()).sum();
                    assert!(pair >= -1e-12 * scale, "{f:?} p={p}: {pair:e}");
                }
            }
        }
    }

    /// `(S(∇̃v), ∇̃v) + α m_{φ_β}(v) ≥ c (ρ_φ(∇̃v) + m_φ(v)) - C δ^p |Ω|`
    /// with `c = 1`, `C = 0`: `φ(t) ≤ φ'(t) t` by convexity and `φ_β ≥ φ`
    /// for `p ≥ 2`, `α ≥ 1`.
    #[test]
    fn coercivity_smoke() {
        let mesh = square_mesh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for f in [Formulation::Ldg, Formulation::Iidg, Formulation::CrStab] {
            for p in [1.5, 2.5, 4.5] {
                let cfg = SolverConfig::new(p, 0.01, 10.0, f).unwrap();
                let ops = Operators::new(mesh.clone(), &cfg).unwrap();
                let sampler = ops.sampler.as_ref().unwrap();
                let plain = NFunctionParams::new(p, 0.01, 0.0).unwrap();
                for _ in 0..20 {
                    let v = random_free(&ops, &mut rng, 3.0);
                    let beta = if p > 2.0 { max_gradient(&ops.gradients(&v)) } else { 0.0 };
                    let shifted = NFunctionParams::new(p, 0.01, beta).unwrap();
                    let law = cfg.law();
                    let mut lhs = 0.0;
                    let mut rho = 0.0;
                    for (k, g) in ops.gradients(&v).iter().enumerate() {
                        let s = law.s_value(*g);
                        lhs += mesh.area(k) * (s[0] * g[0] + s[1] * g[1]);
                        rho += mesh.area(k) * phi_eval(&plain, norm(*g), PhiQuantity::Value).unwrap();
                    }
                    let jumps = sampler.jumps(&v);
                    lhs += cfg.alpha * modular_from_jumps(&mesh, sampler, &jumps, &shifted);
                    let rhs = rho + modular_from_jumps(&mesh, sampler, &jumps, &plain);
                    assert!(lhs >= rhs * (1.0 - 1e-12), "{f:?} p={p}: {lhs} < {rhs}");
                }
            }
        }
    }
}
