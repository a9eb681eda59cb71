//! Fixtures shared by the benchmarks.

use pdg_core::study::{beta_for_rate, singular_case_for, ManufacturedCase};
use pdg_core::{Formulation, Mesh, SolverConfig, Square};

/// Union-jack mesh of `(-1, 1)²` refined `levels` times.
pub fn square_mesh(n_div: usize, levels: usize) -> Mesh {
    let mut mesh = Mesh::generate(n_div, Square::new(-1.0, 1.0)).expect("valid mesh size");
    for _ in 0..levels {
        mesh = mesh.refine_uniform();
    }
    mesh
}

/// Solver configuration and singular case for rate `rho`, with `δ = 0.01` and `α = 10`.
pub fn protocol(formulation: Formulation, p: f64, rho: f64) -> (SolverConfig, ManufacturedCase) {
    let config = SolverConfig::new(p, 0.01, 10.0, formulation).expect("valid parameters");
    let beta = beta_for_rate(rho, p, 0.01).expect("valid rate");
    (config, singular_case_for(formulation, p, 0.01, beta).expect("valid case"))
}
