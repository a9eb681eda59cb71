//! `pdg`: runs a refinement study for one formulation and writes the error
//! table as CSV.
//!
//! Exit status 0 on success, 1 on bad input, 2 on solver failure.

use clap::{Parser, ValueEnum};
use pdg_core::study::{beta_for_rate, run_study, CaseKind, ManufacturedCase};
use pdg_core::{Error, Formulation, Mesh, SolverConfig, Square};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CaseArg {
    /// Point singularity `|x|^β` (mixed flux for `--formulation mixed`).
    Singular,
    /// `(1 - x₁²)(1 - x₂²)`.
    Smooth,
}

#[derive(Debug, Parser)]
#[command(name = "pdg", version, about = "Convergence study for a p-Dirichlet discretisation on (-1, 1)²")]
struct Cli {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    /// iidg, ldg, mixed, cr, cr-stab or conforming.
    #[arg(long, default_value = "iidg", value_parser = parse_formulation)]
    formulation: Formulation,
    /// Target rate ρ in (0, 1]; sets β = 1 - 2(1 - ρ)/p + 0.01.
    #[arg(long, conflicts_with = "beta")]
    rate: Option<f64>,
    /// Explicit singularity exponent β.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value_t = CaseArg::Singular)]
    case: CaseArg,
    /// Number of meshes: the initial one and `levels - 1` refinements.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Gmsh file or `builtin:N` (union-jack mesh with N subdivisions).
    #[arg(long, default_value = "builtin:18")]
    mesh: String,
    #[arg(long, default_value_t = 8)]
    quad_degree: usize,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    newton_max: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_formulation(s: &str) -> Result<Formulation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_mesh(source: &str) -> pdg_core::Result<Mesh> {
    match source.strip_prefix("builtin:") {
        Some(n) => {
            let n: usize = n
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad builtin mesh size {n:?}")))?;
            Mesh::generate(n, Square::new(-1.0, 1.0))
        }
        None => Mesh::read_msh(source),
    }
}

fn setup(cli: &Cli) -> pdg_core::Result<(SolverConfig, ManufacturedCase, Mesh)> {
    let mut config = SolverConfig::new(cli.p, cli.delta, cli.alpha, cli.formulation)?;
    config.quad_degree = cli.quad_degree;
    if let Some(t) = cli.newton_tol {
        config.newton_tol = t;
    }
    if let Some(m) = cli.newton_max {
        config.newton_max = m;
    }
    config.validate()?;
    if cli.levels == 0 {
        return Err(Error::InvalidParameter("--levels must be at least 1".into()));
    }
    let kind = match (cli.case, cli.formulation.is_mixed()) {
        (CaseArg::Smooth, _) => CaseKind::Smooth,
        (CaseArg::Singular, true) => CaseKind::MixedSingular,
        (CaseArg::Singular, false) => CaseKind::PrimalSingular,
    };
    let beta = match (cli.rate, cli.beta) {
        (Some(rho), _) => beta_for_rate(rho, cli.p, 0.01)?,
        (None, Some(b)) => b,
        (None, None) if kind == CaseKind::Smooth => 0.0,
        (None, None) => return Err(Error::InvalidParameter("one of --rate or --beta is required".into())),
    };
    let case = ManufacturedCase::new(kind, cli.p, cli.delta, beta)?;
    Ok((config, case, load_mesh(&cli.mesh)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (config, case, mesh) = match setup(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run_study(&config, &case, mesh, cli.levels, cli.out.as_deref()) {
        Ok(report) => {
            if cli.out.is_none() {
                print!("{}", report.to_csv());
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            print!("{}", failure.report.to_csv());
            eprintln!("error: {failure}");
            match failure.error {
                Error::InvalidParameter(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
