//! Manufactured solutions, error measures, experimental orders of
//! convergence and the refinement-study driver.
//!
//! The singular solutions are `u(x) = (1 - x₁²)(1 - x₂²)|x|^β` on `(-1, 1)²`.
//! In the mixed case the exact flux is `S = (δ² + |∇u|²)^{(p-2)/2} ∇u` and
//! the exact gradient is `D(S)`.

use crate::dgops::{modular_from_jumps, FaceSampler};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::nfunc::{ConstitutiveLaw, NFunctionParams};
use crate::quadrature::triangle_rule;
use crate::solver::{newton_solve, DiscreteSolution, Formulation, Operators, SolverConfig};
use crate::spaces::{FEFunction, FESpace};
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    PrimalSingular,
    MixedSingular,
    /// `u = (1 - x₁²)(1 - x₂²)`.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub kind: CaseKind,
    pub p: f64,
    pub delta: f64,
    pub beta_exponent: f64,
}

/// `β = 1 - 2(1 - ρ)/p + margin`, the singularity exponent for rate `ρ`.
pub fn beta_for_rate(rho: f64, p: f64, margin: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!("rate {rho} outside (0, 1]")));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    let beta = 1.0 - 2.0 * (1.0 - rho) / p + margin;
    if beta <= 1.0 - 2.0 / p {
        return Err(Error::InvalidParameter(format!(
            "exponent {beta} does not give a W^{{1,p}} solution"
        )));
    }
    Ok(beta)
}

impl ManufacturedCase {
    pub fn new(kind: CaseKind, p: f64, delta: f64, beta_exponent: f64) -> Result<Self> {
        NFunctionParams::new(p, delta, 0.0)?;
        if kind != CaseKind::Smooth && !(beta_exponent > 1.0 - 2.0 / p) {
            return Err(Error::InvalidParameter(format!(
                "singularity exponent {beta_exponent} must exceed 1 - 2/p = {}",
                1.0 - 2.0 / p
            )));
        }
        Ok(Self {
            kind,
            p,
            delta,
            beta_exponent,
        })
    }

    fn exponent(&self) -> f64 {
        match self.kind {
            CaseKind::Smooth => 0.0,
            _ => self.beta_exponent,
        }
    }

    /// The closed-form potential `(1 - x₁²)(1 - x₂²)|x|^β`. For the mixed
    /// case with `δ > 0` this is the function generating the flux, whose
    /// gradient differs from `D(S)`.
    pub fn value(&self, x: Point) -> f64 {
        let b = (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]);
        let e = self.exponent();
        if e == 0.0 {
            return b;
        }
        b * (x[0] * x[0] + x[1] * x[1]).powf(0.5 * e)
    }

    fn potential_gradient(&self, x: Point) -> [f64; 2] {
        let b = (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]);
        let db = [-2.0 * x[0] * (1.0 - x[1] * x[1]), -2.0 * x[1] * (1.0 - x[0] * x[0])];
        let e = self.exponent();
        if e == 0.0 {
            return db;
        }
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return if e > 1.0 { [0.0, 0.0] } else { [f64::NAN; 2] };
        }
        let re = r2.powf(0.5 * e);
        let c = b * e * re / r2;
        [db[0] * re + c * x[0], db[1] * re + c * x[1]]
    }

    /// Exact flux: `S(∇u)` for the primal cases, the prescribed `S` for the
    /// mixed case.
    pub fn flux(&self, x: Point) -> [f64; 2] {
        let g = self.potential_gradient(x);
        match self.kind {
            CaseKind::MixedSingular => {
                let n2 = g[0] * g[0] + g[1] * g[1];
                let c = (self.delta * self.delta + n2).powf(0.5 * (self.p - 2.0));
                if n2 == 0.0 {
                    return [0.0, 0.0];
                }
                [c * g[0], c * g[1]]
            }
            _ => ConstitutiveLaw::primal(self.p, self.delta).unwrap().s_value(g),
        }
    }

    /// Exact gradient: `∇u`, or `D(S)` in the mixed case.
    pub fn gradient(&self, x: Point) -> [f64; 2] {
        match self.kind {
            CaseKind::MixedSingular => ConstitutiveLaw::paper_d(self.p, self.delta).unwrap().d_value(self.flux(x)),
            _ => self.potential_gradient(x),
        }
    }
}

/// Error contributions of one discrete solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorComponents {
    /// `‖F(∇̃u_h) - F(∇u)‖₂`.
    pub f_dist: f64,
    /// `(α m_{φ_β}(u_h))^{1/2}`.
    pub jump: f64,
    /// `‖F*(S_h) - F*(S)‖₂` (mixed only).
    pub flux: Option<f64>,
    pub total: f64,
}

/// Error measures of `sol` against `case`, integrals by the configured
/// quadrature degree.
pub fn compute_errors(sol: &DiscreteSolution, case: &ManufacturedCase, config: &SolverConfig, ops: &Operators) -> Result<ErrorComponents> {
    let mesh = &ops.mesh;
    let law = config.law();
    let rule = triangle_rule(config.quad_degree)?;
    let grads = ops.gradients(sol.u.coeffs());
    let (mut e_f, mut e_s) = (0.0, 0.0);
    for k in 0..mesh.num_triangles() {
        let fh = law.f_value(grads[k]);
        let sh = sol.flux.as_ref().map(|s| law.fstar_value(s.vector(k)));
        let a = 2.0 * mesh.area(k);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.map_point(k, *b);
            let f = law.f_value(case.gradient(x));
            e_f += w * a * ((fh[0] - f[0]).powi(2) + (fh[1] - f[1]).powi(2));
            if let Some(sh) = sh {
                let s = law.fstar_value(case.flux(x));
                e_s += w * a * ((sh[0] - s[0]).powi(2) + (sh[1] - s[1]).powi(2));
            }
        }
    }
    let sampler = match &ops.sampler {
        Some(s) => s.clone(),
        None => FaceSampler::new(&ops.space, config.quad_degree)?,
    };
    let params = NFunctionParams::new(config.p, config.delta, sol.beta)?;
    let m = modular_from_jumps(mesh, &sampler, &sampler.jumps(sol.u.coeffs()), &params);
    let f_dist = e_f.sqrt();
    let jump = (config.alpha * m).sqrt();
    let flux = sol.flux.as_ref().map(|_| e_s.sqrt());
    Ok(ErrorComponents {
        f_dist,
        jump,
        flux,
        total: f_dist + jump + flux.unwrap_or(0.0),
    })
}

/// `log₂(e_{ℓ-1} / e_ℓ)`, the order for mesh-size ratio 1/2; in general
/// `log(e_ℓ / e_{ℓ-1}) / log(h_ℓ / h_{ℓ-1})`.
pub fn eoc(e_prev: f64, e: f64, h_prev: f64, h: f64) -> f64 {
    (e / e_prev).ln() / (h / h_prev).ln()
}

/// Barycentric coordinates of the corners of child `c` of a red-refined
/// parent, as produced by [`Mesh::refine_uniform`].
const CHILD_CORNERS: [[[f64; 3]; 3]; 4] = [
    [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
    [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]],
    [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]],
    [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]],
];

/// Transfers `coarse` to the space `fine` on the red refinement of its mesh
/// by evaluating the parent polynomial at the fine nodes.
pub fn prolongate(coarse: &FEFunction, fine: &Arc<FESpace>) -> Result<FEFunction> {
    let cm = coarse.space().mesh();
    let fm = fine.mesh();
    if fm.num_triangles() != 4 * cm.num_triangles() || coarse.space().kind() != fine.kind() {
        return Err(Error::InvalidParameter("fine space is not the red refinement of the coarse one".into()));
    }
    let nodes = fine.local_nodes();
    let mut c = vec![f64::NAN; fine.ndof()];
    for k in 0..fm.num_triangles() {
        let (parent, child) = (k / 4, k % 4);
        let corners = CHILD_CORNERS[child];
        for (&d, b) in fine.dofs(k).iter().zip(&nodes) {
            if c[d].is_nan() {
                let mut pb = [0.0; 3];
                for i in 0..3 {
                    for (j, pbj) in pb.iter_mut().enumerate() {
                        *pbj += b[i] * corners[i][j];
                    }
                }
                c[d] = coarse.value(parent, pb);
            }
        }
    }
    for &d in fine.boundary_dofs() {
        c[d] = 0.0;
    }
    FEFunction::new(fine.clone(), c)
}

/// One row of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub level: usize,
    pub h: f64,
    pub ndof: usize,
    pub num_elements: usize,
    pub errors: ErrorComponents,
    pub eoc: Option<f64>,
    pub beta: f64,
    pub newton_iterations: usize,
    pub shift_iterations: usize,
    pub residual_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub config: SolverConfig,
    pub case: ManufacturedCase,
    pub levels: Vec<LevelResult>,
}

pub const CSV_HEADER: &str = "level,h,ndof,err_F,err_jump,err_flux,err_total,eoc";

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.levels {
            let flux = r.errors.flux.map(|v| format!("{v:.10e}")).unwrap_or_default();
            let eoc = r.eoc.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{:.10e},{},{:.10e},{:.10e},{},{:.10e},{}\n",
                r.level, r.h, r.ndof, r.errors.f_dist, r.errors.jump, flux, r.errors.total, eoc
            ));
        }
        s
    }

    pub fn totals(&self) -> Vec<f64> {
        self.levels.iter().map(|r| r.errors.total).collect()
    }

    pub fn eocs(&self) -> Vec<f64> {
        self.levels.iter().filter_map(|r| r.eoc).collect()
    }

    pub fn final_eoc(&self) -> Option<f64> {
        self.levels.last().and_then(|r| r.eoc)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// A study aborted by a solver failure, with the levels completed so far.
#[derive(Debug)]
pub struct StudyFailure {
    pub report: StudyReport,
    pub level: usize,
    pub error: Error,
}

impl fmt::Display for StudyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "study failed at level {}: {}", self.level, self.error)
    }
}

impl std::error::Error for StudyFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Solves on `levels` meshes, `mesh0` and its successive red refinements,
/// starting each level from the prolongated previous solution. Writes the
/// CSV table to `out` if given, also when a level fails.
pub fn run_study(
    config: &SolverConfig,
    case: &ManufacturedCase,
    mesh0: Mesh,
    levels: usize,
    out: Option<&Path>,
) -> std::result::Result<StudyReport, StudyFailure> {
    let mut report = StudyReport {
        config: config.clone(),
        case: *case,
        levels: Vec::new(),
    };
    let fail = |report: StudyReport, level: usize, error: Error| {
        if let Some(path) = out {
            let _ = report.write_csv(path);
        }
        StudyFailure { report, level, error }
    };
    if levels == 0 {
        return Err(fail(report, 0, Error::InvalidParameter("at least one level is required".into())));
    }
    if let Err(e) = config.validate() {
        return Err(fail(report, 0, e));
    }
    if (case.p - config.p).abs() > 0.0 || (case.delta - config.delta).abs() > 0.0 {
        return Err(fail(report, 0, Error::InvalidParameter("case and solver disagree on p or delta".into())));
    }
    let paired = match case.kind {
        CaseKind::PrimalSingular => !config.formulation.is_mixed(),
        CaseKind::MixedSingular => config.formulation.is_mixed(),
        // the mixed law is the inverse of the primal one only in the linear case
        CaseKind::Smooth => !config.formulation.is_mixed() || (case.p == 2.0 && case.delta == 0.0),
    };
    if !paired {
        return Err(fail(
            report,
            0,
            Error::InvalidParameter(format!("case {:?} is not paired with formulation {}", case.kind, config.formulation)),
        ));
    }
    let mut mesh = Arc::new(mesh0);
    let mut previous: Option<FEFunction> = None;
    for level in 0..levels {
        if level > 0 {
            mesh = Arc::new(mesh.refine_uniform());
        }
        let start = Instant::now();
        let step = || -> Result<(DiscreteSolution, ErrorComponents, usize)> {
            let ops = Operators::new(mesh.clone(), config)?;
            let b = ops.rhs(|x| case.flux(x), config.quad_degree)?;
            let init = match &previous {
                Some(u) => prolongate(u, &ops.space)?,
                None => FEFunction::zeros(ops.space.clone()),
            };
            let sol = newton_solve(config, &ops, &b, &init)?;
            let err = compute_errors(&sol, case, config, &ops)?;
            Ok((sol, err, ops.num_free()))
        };
        match step() {
            Ok((sol, errors, ndof)) => {
                let h = mesh.h_max();
                let eoc = report.levels.last().map(|r| eoc(r.errors.total, errors.total, r.h, h));
                report.levels.push(LevelResult {
                    level,
                    h,
                    ndof,
                    num_elements: mesh.num_triangles(),
                    errors,
                    eoc,
                    beta: sol.beta,
                    newton_iterations: sol.newton_iterations,
                    shift_iterations: sol.shift_iterations,
                    residual_norm: sol.residual_norm,
                    seconds: start.elapsed().as_secs_f64(),
                });
                previous = Some(sol.u);
            }
            Err(e) => return Err(fail(report, level, e)),
        }
    }
    if let Some(path) = out {
        if let Err(e) = report.write_csv(path) {
            let n = report.levels.len();
            return Err(fail(report, n, e));
        }
    }
    Ok(report)
}

/// Case matching a formulation: the mixed case for the mixed scheme, the
/// primal singular case otherwise.
pub fn singular_case_for(formulation: Formulation, p: f64, delta: f64, beta_exponent: f64) -> Result<ManufacturedCase> {
    let kind = if formulation.is_mixed() {
        CaseKind::MixedSingular
    } else {
        CaseKind::PrimalSingular
    };
    ManufacturedCase::new(kind, p, delta, beta_exponent)
}
