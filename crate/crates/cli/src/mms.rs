//! Manufactured-solution convergence study on the unit box.

use std::path::Path;
use std::sync::Arc;

use cnpdg::assembly::{Assembler, DgParams, Problem};
use cnpdg::fespace::BlockState;
use cnpdg::mesh::{Mesh, MeshHierarchy};
use cnpdg::nonlinear::{initial_guess, solve_problem};
use cnpdg::physics::MmsCase;

use crate::config::RunConfig;
use crate::output::{create, csv_writer, linear_solver};
use crate::{solver_err, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub elements: usize,
    pub dofs: usize,
    /// L2 error of Φ followed by every retained concentration.
    pub errors: Vec<f64>,
    /// `log2(e_{l-1} / e_l)`; `None` on the first level.
    pub rates: Vec<Option<f64>>,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct MmsResult {
    pub labels: Vec<String>,
    pub rows: Vec<ConvergenceRow>,
}

impl MmsResult {
    /// Rate of field `f` between levels `l - 1` and `l`.
    pub fn rate(&self, l: usize, f: usize) -> Option<f64> {
        self.rows.get(l).and_then(|r| r.rates[f])
    }
}

pub fn run_mms(cfg: &RunConfig, out: &Path) -> Result<MmsResult, CliError> {
    let m = &cfg.mms;
    let case = MmsCase::new();
    let problem = Arc::new(Problem::mms(&case));
    let params = DgParams { penalty: cfg.dg.penalty };
    let base = Mesh::unit_box(m.dim, &vec![m.coarse; m.dim]).map_err(|e| CliError::Config(e.to_string()))?;
    let mut h = MeshHierarchy::by_coarsening(Arc::new(base), 16, 1);
    let mut csv = csv_writer(out, "convergence.csv")?;
    let mut labels = Vec::new();
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for level in 0..m.levels {
        if level > 0 {
            h = h.refine_uniform();
        }
        let asm = Assembler::multilevel(&h, cfg.order, problem.clone(), params).map_err(solver_err)?;
        let lin = linear_solver(&h, &asm, &cfg.solver)?;
        let space = asm.space().clone();
        if level == 0 {
            labels = asm.field_labels();
            let mut header = vec!["level".to_string(), "elements".into(), "dofs".into()];
            header.extend(labels.iter().map(|l| format!("l2_error_{l}")));
            header.extend(labels.iter().map(|l| format!("rate_{l}")));
            header.push("newton_iterations".into());
            csv.write_record(&header)?;
            csv.flush()?;
        }
        let nf = asm.n_fields();
        let x0 = if m.exact_initial_guess {
            let mut fields = vec![space.interpolate(MmsCase::potential)];
            fields.extend((1..nf).map(|_| space.interpolate(MmsCase::concentration)));
            BlockState::from_fields(&fields).map_err(solver_err)?
        } else {
            initial_guess(&asm, &lin, cfg.solver.initial_guess_rtol).map_err(solver_err)?
        };
        let (x, report) = solve_problem(&asm, x0, &lin, &cfg.solver.newton()).map_err(|f| {
            CliError::Solver(format!("level {level} ({} elements): {}\n{}", space.mesh().n_elements(), f.error, f.report.summary()))
        })?;
        let errors: Vec<f64> = (0..nf)
            .map(|f| {
                let exact = if f == 0 { MmsCase::potential } else { MmsCase::concentration };
                space.l2_error(x.field(f), exact)
            })
            .collect();
        let rates = match rows.last() {
            Some(prev) => prev.errors.iter().zip(&errors).map(|(a, b)| Some((a / b).log2())).collect(),
            None => vec![None; nf],
        };
        let row = ConvergenceRow {
            level,
            elements: space.mesh().n_elements(),
            dofs: nf * space.n_dofs(),
            errors,
            rates,
            newton_iterations: report.iterations(),
        };
        let mut rec = vec![row.level.to_string(), row.elements.to_string(), row.dofs.to_string()];
        rec.extend(row.errors.iter().map(|e| format!("{e:.6e}")));
        rec.extend(row.rates.iter().map(|r| r.map_or(String::new(), |r| format!("{r:.4}"))));
        rec.push(row.newton_iterations.to_string());
        csv.write_record(&rec)?;
        csv.flush()?;
        if m.vtk {
            let (_, w) = create(out, &format!("fields_level{level}.vtk"))?;
            let named: Vec<(&str, &[f64])> = labels.iter().enumerate().map(|(f, l)| (l.as_str(), x.field(f))).collect();
            cnpdg::vtk::write_fields(w, &space, 1.0, &named, &[])?;
        }
        rows.push(row);
    }
    Ok(MmsResult { labels, rows })
}
