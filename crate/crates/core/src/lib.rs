//! Finite element discretisations of p-Dirichlet problems with
//! `(p, δ)`-structure in two dimensions.
//!
//! The crate provides meshes, quadrature, N-functions and constitutive laws,
//! broken and conforming finite element spaces, DG operators (jumps,
//! liftings, DG gradient), a moment-preserving smoothing operator, nonlinear
//! solvers for the primal DG, Crouzeix-Raviart, conforming and mixed schemes,
//! and a convergence-study driver.

pub mod dgops;
pub mod error;
pub mod mesh;
pub mod nfunc;
pub mod quadrature;
pub mod smoothing;
pub mod solver;
pub mod spaces;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
pub use mesh::{Face, Mesh, Point, Square};
pub use nfunc::{ConstitutiveLaw, LawVariant, NFunctionParams};
pub use quadrature::QuadRule;
pub use sparse::{SparseLu, SparseMatrix};
pub use spaces::{FEFunction, FESpace, SpaceKind};
pub use smoothing::SmoothingOperator;
pub use solver::{DiscreteSolution, Formulation, Operators, SolverConfig};
pub use study::{CaseKind, ManufacturedCase, StudyReport};
