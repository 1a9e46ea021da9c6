//! Helpers shared by the drivers: output files and solver construction.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cnpdg::assembly::Assembler;
use cnpdg::linalg::GmgLevels;
use cnpdg::mesh::MeshHierarchy;
use cnpdg::nonlinear::{BlockPc, LinearSolver};

use crate::config::SolverSection;
use crate::{solver_err, CliError};

pub fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let f = File::create(&path)?;
    Ok((path, BufWriter::new(f)))
}

pub fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<File>, CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(csv::Writer::from_path(dir.join(name))?)
}

/// Field name usable as a VTK array name.
pub fn vtk_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '+' || c == '-' { c } else { '_' }).collect()
}

/// Outer/inner solver stack over the hierarchy of `asm`; multigrid levels are
/// only built when some block asks for them.
pub fn linear_solver(h: &MeshHierarchy, asm: &Assembler, solver: &SolverSection) -> Result<LinearSolver, CliError> {
    let cfg = solver.linear();
    let space = asm.space();
    let levels = if cfg.potential.pc == BlockPc::Gmg || cfg.concentration.pc == BlockPc::Gmg {
        Some(Arc::new(GmgLevels::new(h, space.basis(), solver.smoother()).map_err(solver_err)?))
    } else {
        None
    };
    LinearSolver::new(space.mesh(), space.dofs_per_element(), levels, cfg).map_err(|e| CliError::Config(e.to_string()))
}
