//! Preconditioner comparison on the first Newton step of the reactor.

use std::path::Path;
use std::time::Instant;

use cnpdg::nonlinear::initial_guess;

use crate::config::{PcChoice, RunConfig};
use crate::output::csv_writer;
use crate::reactor::setup;
use crate::{solver_err, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct SolvecheckRow {
    pub elements: usize,
    pub dofs: usize,
    pub concentration_pc: PcChoice,
    /// Schwarz subdomains of the concentration blocks; 0 for multigrid.
    pub asm_subdomains: usize,
    pub outer_iterations: usize,
    pub outer_converged: bool,
    /// Mean and max inner iterations per field, potential first.
    pub inner_mean: Vec<f64>,
    pub inner_max: Vec<usize>,
    /// s
    pub wall_time: f64,
}

impl SolvecheckRow {
    /// Mean inner iterations over all concentration blocks.
    pub fn concentration_mean(&self) -> f64 {
        let c = &self.inner_mean[1..];
        c.iter().sum::<f64>() / c.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct SolvecheckResult {
    pub labels: Vec<String>,
    pub rows: Vec<SolvecheckRow>,
}

impl SolvecheckResult {
    pub fn find(&self, elements: usize, pc: PcChoice, subdomains: usize) -> Option<&SolvecheckRow> {
        self.rows
            .iter()
            .find(|r| r.elements == elements && r.concentration_pc == pc && r.asm_subdomains == subdomains)
    }

    /// Element counts of the meshes, coarsest first.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.rows.iter().map(|r| r.elements).collect();
        s.dedup();
        s
    }
}

/// Solves the first Newton system at the initial guess on `sizes` reactor
/// meshes, coarsest first, with multigrid and with ASM at each configured
/// subdomain count on the concentration blocks. Nested sizes refine the
/// channel coarsened `sizes - 1` times; otherwise every size is a channel
/// built with halved element counts, ending at the configured one.
pub fn run_solvecheck(cfg: &RunConfig, out: &Path) -> Result<SolvecheckResult, CliError> {
    let sc = &cfg.solvecheck;
    let mut csv = csv_writer(out, "solvecheck.csv")?;
    let mut timing = csv_writer(out, "solvecheck_timing.csv")?;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for i in 0..sc.sizes {
        let rs = if sc.nested {
            setup(cfg, sc.sizes - 1, i)?
        } else {
            setup(cfg, sc.sizes - 1 - i, 0)?
        };
        let asm = &rs.assembler;
        if labels.is_empty() {
            labels = asm.field_labels();
            let mut header: Vec<String> = [
                "elements",
                "dofs",
                "concentration_pc",
                "asm_subdomains",
                "outer_iterations",
                "outer_converged",
            ]
            .map(String::from)
            .to_vec();
            header.extend(labels.iter().map(|l| format!("inner_mean_{l}")));
            header.extend(labels.iter().map(|l| format!("inner_max_{l}")));
            csv.write_record(&header)?;
            timing.write_record(["elements", "concentration_pc", "asm_subdomains", "wall_time_s"])?;
        }
        let x0 = {
            let lin = rs.linear_solver(cfg)?;
            initial_guess(asm, &lin, cfg.solver.initial_guess_rtol).map_err(solver_err)?
        };
        let (r, jac) = asm.residual_and_jacobian(&x0).map_err(solver_err)?;
        let b: Vec<f64> = r.as_slice().iter().map(|v| -v).collect();
        let elements = asm.space().mesh().n_elements();

        let mut variants = vec![(PcChoice::Gmg, 0)];
        variants.extend(sc.subdomains.iter().map(|&n| (PcChoice::Asm, n)));
        for (pc, nsub) in variants {
            let mut c = cfg.clone();
            c.solver.concentration.pc_type = pc;
            if pc == PcChoice::Asm {
                c.solver.asm_subdomains = nsub;
            }
            let lin = rs.linear_solver(&c)?;
            let mut x = vec![0.0; b.len()];
            let t = Instant::now();
            let stats = lin.solve(&jac, &b, &mut x).map_err(solver_err)?;
            let row = SolvecheckRow {
                elements,
                dofs: b.len(),
                concentration_pc: pc,
                asm_subdomains: nsub,
                outer_iterations: stats.outer.iterations,
                outer_converged: stats.outer.converged,
                inner_mean: stats.inner.iter().map(|s| s.mean()).collect(),
                inner_max: stats.inner.iter().map(|s| s.max_iterations).collect(),
                wall_time: t.elapsed().as_secs_f64(),
            };
            let mut rec = vec![
                row.elements.to_string(),
                row.dofs.to_string(),
                pc_name(pc).into(),
                nsub.to_string(),
                row.outer_iterations.to_string(),
                (row.outer_converged as u8).to_string(),
            ];
            rec.extend(row.inner_mean.iter().map(|m| format!("{m:.3}")));
            rec.extend(row.inner_max.iter().map(|m| m.to_string()));
            csv.write_record(&rec)?;
            csv.flush()?;
            timing.write_record([elements.to_string(), pc_name(pc).into(), nsub.to_string(), format!("{:.3}", row.wall_time)])?;
            timing.flush()?;
            rows.push(row);
        }
    }
    Ok(SolvecheckResult { labels, rows })
}

pub fn pc_name(pc: PcChoice) -> &'static str {
    match pc {
        PcChoice::Gmg => "gmg",
        PcChoice::Asm => "asm",
    }
}
