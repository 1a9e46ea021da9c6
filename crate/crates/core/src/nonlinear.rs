//! Newton's method with backtracking line search, the block-preconditioned
//! linear solver used for each step, and the standard initial guess.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::assembly::{Assembler, AssemblyError, BlockMatrix};
use crate::fespace::BlockState;
use crate::linalg::{
    norm2, solve, Asm, AsmPartition, Fieldsplit, Gmg, GmgLevels, InnerSolver, KrylovConfig, KrylovMethod,
    KrylovResult, LinalgError, Preconditioner,
};
use crate::mesh::{BoundaryTag, Mesh};
use crate::par;

#[derive(Debug, Error)]
pub enum NonlinearError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("linear solve failed at Newton iteration {iteration}: {source}")]
    Linear {
        iteration: usize,
        #[source]
        source: LinalgError,
    },
    #[error("line search failed at Newton iteration {iteration} (residual {residual:e})")]
    LineSearch { iteration: usize, residual: f64 },
    #[error("no convergence in {iterations} Newton iterations (residual {residual:e}, target {target:e})")]
    MaxIterations { iterations: usize, residual: f64, target: f64 },
    #[error("non-finite residual at Newton iteration {iteration}")]
    NotFinite { iteration: usize },
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

/// Preconditioner of one diagonal block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockPc {
    Gmg,
    Asm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerConfig {
    pub ksp: KrylovConfig,
    pub pc: BlockPc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConfig {
    pub outer: KrylovConfig,
    pub potential: InnerConfig,
    pub concentration: InnerConfig,
    /// Schwarz subdomains of the block ASM preconditioner; 0 uses the thread count.
    pub asm_subdomains: usize,
    pub asm_overlap: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            outer: KrylovConfig {
                max_iters: 500,
                restart: 100,
                ..KrylovConfig::new(KrylovMethod::Fgmres, 1e-3)
            },
            potential: InnerConfig {
                ksp: KrylovConfig {
                    max_iters: 500,
                    ..KrylovConfig::new(KrylovMethod::Cg, 1e-1)
                },
                pc: BlockPc::Gmg,
            },
            concentration: InnerConfig {
                ksp: KrylovConfig {
                    max_iters: 500,
                    ..KrylovConfig::new(KrylovMethod::Gmres, 1e-1)
                },
                pc: BlockPc::Gmg,
            },
            asm_subdomains: 0,
            asm_overlap: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease factor `c` in `‖R(x+λδ)‖ ≤ (1 − cλ)‖R(x)‖`.
    pub ls_decrease: f64,
    pub ls_ratio: f64,
    pub ls_max_backtracks: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            rtol: 1e-6,
            atol: 1e-14,
            max_iters: 50,
            ls_decrease: 1e-4,
            ls_ratio: 0.5,
            ls_max_backtracks: 25,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), NonlinearError> {
        let bad = |m: &str| Err(NonlinearError::Config(m.to_string()));
        if !(self.rtol > 0.0 && self.atol >= 0.0) {
            return bad("Newton tolerances must be positive");
        }
        if !(self.ls_ratio > 0.0 && self.ls_ratio < 1.0) {
            return bad("backtracking ratio must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.ls_decrease) {
            return bad("sufficient-decrease factor must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Per-field inner solver counters of one linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerSummary {
    pub applications: usize,
    pub iterations: usize,
    pub max_iterations: usize,
    pub unconverged: usize,
}

impl InnerSummary {
    pub fn mean(&self) -> f64 {
        if self.applications == 0 {
            0.0
        } else {
            self.iterations as f64 / self.applications as f64
        }
    }

    fn add(&mut self, o: &InnerSummary) {
        self.applications += o.applications;
        self.iterations += o.iterations;
        self.max_iterations = self.max_iterations.max(o.max_iterations);
        self.unconverged += o.unconverged;
    }
}

#[derive(Debug, Clone)]
pub struct LinearStats {
    pub outer: KrylovResult,
    pub inner: Vec<InnerSummary>,
}

/// FGMRES preconditioned by the upper block-triangular fieldsplit.
pub struct LinearSolver {
    cfg: LinearConfig,
    levels: Option<Arc<GmgLevels>>,
    partition: Arc<AsmPartition>,
}

impl LinearSolver {
    pub fn new(mesh: &Mesh, dofs_per_element: usize, levels: Option<Arc<GmgLevels>>, cfg: LinearConfig) -> Result<Self, NonlinearError> {
        let uses_gmg = cfg.potential.pc == BlockPc::Gmg || cfg.concentration.pc == BlockPc::Gmg;
        if uses_gmg && levels.is_none() {
            return Err(NonlinearError::Config("multigrid requested without a mesh hierarchy".into()));
        }
        let n = mesh.n_elements() * dofs_per_element;
        if let Some(l) = &levels {
            if l.n_dofs(l.n_levels() - 1) != n {
                return Err(NonlinearError::Config(format!(
                    "hierarchy finest level has {} dofs, problem has {n}",
                    l.n_dofs(l.n_levels() - 1)
                )));
            }
        }
        let nsub = if cfg.asm_subdomains == 0 {
            par::current_num_threads().max(1)
        } else {
            cfg.asm_subdomains
        };
        let partition = Arc::new(AsmPartition::from_mesh(mesh, nsub, cfg.asm_overlap, dofs_per_element));
        Ok(LinearSolver { cfg, levels, partition })
    }

    pub fn config(&self) -> &LinearConfig {
        &self.cfg
    }

    pub fn levels(&self) -> Option<&Arc<GmgLevels>> {
        self.levels.as_ref()
    }

    /// Preconditioner for diagonal block `i`. Multigrid uses the coarse
    /// Jacobians carried by `jac` when there is one per level, otherwise
    /// Galerkin coarse operators.
    pub fn block_preconditioner(&self, jac: &BlockMatrix, i: usize, kind: BlockPc) -> Result<Box<dyn Preconditioner>, LinalgError> {
        let a = jac.block(i, i).ok_or_else(|| LinalgError::BadPattern(format!("missing block {i}")))?;
        Ok(match kind {
            BlockPc::Gmg => {
                let levels = self.levels.clone().expect("checked at construction");
                if jac.coarse_levels().len() + 1 == levels.n_levels() {
                    let mut ops = jac
                        .coarse_levels()
                        .iter()
                        .map(|c| c.block(i, i).cloned().ok_or_else(|| LinalgError::BadPattern(format!("missing coarse block {i}"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    ops.push(a.clone());
                    Box::new(Gmg::with_operators(levels, ops)?)
                } else {
                    Box::new(Gmg::new(levels, a.clone())?)
                }
            }
            BlockPc::Asm => Box::new(Asm::new(a, self.partition.clone())?),
        })
    }

    pub fn fieldsplit(&self, jac: &BlockMatrix) -> Result<Fieldsplit, LinalgError> {
        let inner = (0..jac.n_fields())
            .map(|i| {
                let ic = if i == 0 { &self.cfg.potential } else { &self.cfg.concentration };
                let pc = self.block_preconditioner(jac, i, ic.pc).map_err(|e| LinalgError::Inner {
                    block: jac.labels()[i].clone(),
                    source: Box::new(e),
                })?;
                Ok(InnerSolver::new(jac.labels()[i].clone(), ic.ksp.clone(), pc))
            })
            .collect::<Result<Vec<_>, LinalgError>>()?;
        Fieldsplit::new(jac.operator().clone(), inner)
    }

    /// Solves `J x = b` from `x = 0`.
    pub fn solve(&self, jac: &BlockMatrix, b: &[f64], x: &mut [f64]) -> Result<LinearStats, LinalgError> {
        let fs = self.fieldsplit(jac)?;
        x.fill(0.0);
        let outer = solve(jac.operator().as_ref(), &fs, b, x, &self.cfg.outer)?;
        let inner = fs
            .inner()
            .iter()
            .map(|s| InnerSummary {
                applications: s.stats.applications(),
                iterations: s.stats.iterations(),
                max_iterations: s.stats.max_iterations(),
                unconverged: s.stats.unconverged(),
            })
            .collect();
        Ok(LinearStats { outer, inner })
    }
}

/// Record of one Newton solve. Entry `i` of the per-step vectors belongs to
/// the step taken from iterate `i`.
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub converged: bool,
    pub field_labels: Vec<String>,
    /// Residual 2-norm of every iterate, the initial one included.
    pub residual_norms: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub outer_iterations: Vec<usize>,
    pub inner: Vec<Vec<InnerSummary>>,
    pub wall_time: f64,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.step_lengths.len()
    }

    pub fn total_outer_iterations(&self) -> usize {
        self.outer_iterations.iter().sum()
    }

    pub fn inner_totals(&self) -> Vec<InnerSummary> {
        let mut t = vec![InnerSummary::default(); self.field_labels.len()];
        for step in &self.inner {
            for (a, b) in t.iter_mut().zip(step) {
                a.add(b);
            }
        }
        t
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_norms.last().copied().unwrap_or(f64::NAN)
    }

    /// One row per Newton iterate.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "iteration,residual_norm,step_length,outer_iterations")?;
        for l in &self.field_labels {
            write!(w, ",inner_{l}_applications,inner_{l}_iterations")?;
        }
        writeln!(w)?;
        for (i, r) in self.residual_norms.iter().enumerate() {
            write!(w, "{i},{r:.12e}")?;
            match self.step_lengths.get(i) {
                Some(l) => write!(w, ",{l},{}", self.outer_iterations[i])?,
                None => write!(w, ",,")?,
            }
            for f in 0..self.field_labels.len() {
                match self.inner.get(i) {
                    Some(s) => write!(w, ",{},{}", s[f].applications, s[f].iterations)?,
                    None => write!(w, ",,")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "Newton: {} ({} iterations, residual {:.3e} -> {:.3e}, {:.2} s)\nouter Krylov iterations: {} {:?}\n",
            if self.converged { "converged" } else { "not converged" },
            self.iterations(),
            self.residual_norms.first().copied().unwrap_or(f64::NAN),
            self.final_residual(),
            self.wall_time,
            self.total_outer_iterations(),
            self.outer_iterations,
        );
        for (l, t) in self.field_labels.iter().zip(self.inner_totals()) {
            s += &format!(
                "inner {l}: {} applications, {} iterations (mean {:.1}, max {}, unconverged {})\n",
                t.applications,
                t.iterations,
                t.mean(),
                t.max_iterations,
                t.unconverged
            );
        }
        s
    }
}

/// Newton failure with the partial report and the last accepted iterate.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct NewtonFailure {
    #[source]
    pub error: NonlinearError,
    pub report: SolveReport,
    pub state: BlockState,
}

/// Newton iteration on `R(x) = 0`. `jacobian` returns the derivative of
/// `residual` at `x`.
pub fn newton_solve<R, J>(
    residual: R,
    jacobian: J,
    x0: BlockState,
    linear: &LinearSolver,
    cfg: &NewtonConfig,
) -> Result<(BlockState, SolveReport), Box<NewtonFailure>>
where
    R: Fn(&BlockState) -> Result<BlockState, AssemblyError>,
    J: Fn(&BlockState) -> Result<BlockMatrix, AssemblyError>,
{
    let start = Instant::now();
    let mut report = SolveReport::default();
    let mut x = x0;
    macro_rules! fail {
        ($e:expr) => {{
            report.wall_time = start.elapsed().as_secs_f64();
            return Err(Box::new(NewtonFailure {
                error: $e,
                report,
                state: x,
            }));
        }};
    }
    if let Err(e) = cfg.validate() {
        fail!(e);
    }
    let mut r = match residual(&x) {
        Ok(r) => r,
        Err(e) => fail!(e.into()),
    };
    let mut rnorm = norm2(r.as_slice());
    report.residual_norms.push(rnorm);
    if !rnorm.is_finite() {
        fail!(NonlinearError::NotFinite { iteration: 0 });
    }
    let target = (cfg.rtol * rnorm).max(cfg.atol);
    let n = x.as_slice().len();
    let mut delta = vec![0.0; n];
    for it in 0..cfg.max_iters {
        if rnorm <= target {
            break;
        }
        let jac = match jacobian(&x) {
            Ok(j) => j,
            Err(e) => fail!(e.into()),
        };
        if report.field_labels.is_empty() {
            report.field_labels = jac.labels().to_vec();
        }
        let b: Vec<f64> = r.as_slice().iter().map(|v| -v).collect();
        let stats = match linear.solve(&jac, &b, &mut delta) {
            Ok(s) => s,
            Err(e) => fail!(NonlinearError::Linear { iteration: it, source: e }),
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.ls_max_backtracks {
            let mut trial = x.clone();
            for (t, d) in trial.as_mut_slice().iter_mut().zip(&delta) {
                *t += lambda * d;
            }
            let rt = match residual(&trial) {
                Ok(r) => r,
                Err(e) => fail!(e.into()),
            };
            let tn = norm2(rt.as_slice());
            if tn.is_finite() && tn <= (1.0 - cfg.ls_decrease * lambda) * rnorm {
                accepted = Some((trial, rt, tn));
                break;
            }
            lambda *= cfg.ls_ratio;
        }
        report.outer_iterations.push(stats.outer.iterations);
        report.inner.push(stats.inner);
        let Some((xn, rn, nn)) = accepted else {
            report.outer_iterations.pop();
            report.inner.pop();
            fail!(NonlinearError::LineSearch { iteration: it, residual: rnorm });
        };
        report.step_lengths.push(lambda);
        x = xn;
        r = rn;
        rnorm = nn;
        report.residual_norms.push(rnorm);
    }
    report.wall_time = start.elapsed().as_secs_f64();
    if rnorm <= target {
        report.converged = true;
        Ok((x, report))
    } else {
        fail!(NonlinearError::MaxIterations {
            iterations: report.iterations(),
            residual: rnorm,
            target,
        })
    }
}

/// Newton solve of the assembled system.
pub fn solve_problem(
    asm: &Assembler,
    x0: BlockState,
    linear: &LinearSolver,
    cfg: &NewtonConfig,
) -> Result<(BlockState, SolveReport), Box<NewtonFailure>> {
    newton_solve(|x| asm.residual(x), |x| asm.jacobian(x), x0, linear, cfg)
}

/// Concentrations at their inlet values; potential from the charge equation
/// linearized about `Φ = 0` with the concentrations frozen, solved by CG to
/// relative tolerance `rtol`.
pub fn initial_guess(asm: &Assembler, linear: &LinearSolver, rtol: f64) -> Result<BlockState, NonlinearError> {
    let pr = asm.problem();
    let mut x = asm.zero_state();
    for (j, &k) in pr.system.retained().iter().enumerate() {
        x.field_mut(1 + j).fill(pr.inlet[k]);
    }
    let (r, jac) = asm.residual_and_jacobian(&x)?;
    let mut b: Vec<f64> = r.field(0).iter().map(|v| -v).collect();
    let tags = asm.space().mesh().boundary_tags();
    let pinned = tags.iter().any(|&t| t == BoundaryTag::Exterior || (t.is_electrode() && pr.kinetics.is_some()));
    if !pinned {
        remove_mean(&mut b);
    }
    if norm2(&b) == 0.0 {
        return Ok(x);
    }
    let a = jac.block(0, 0).expect("potential block is always present");
    // multigrid's coarse LU cannot handle the singular all-Neumann operator
    let kind = if pinned { linear.config().potential.pc } else { BlockPc::Asm };
    let pc = linear
        .block_preconditioner(&jac, 0, kind)
        .map_err(|e| NonlinearError::Linear { iteration: 0, source: e })?;
    let cfg = KrylovConfig {
        max_iters: 1000,
        ..KrylovConfig::new(KrylovMethod::Cg, rtol)
    };
    let phi = x.field_mut(0);
    solve(a.as_ref(), &pc, &b, phi, &cfg).map_err(|e| NonlinearError::Linear { iteration: 0, source: e })?;
    if !pinned {
        remove_mean(phi);
    }
    Ok(x)
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(NewtonConfig::default().validate().is_ok());
        let c = NewtonConfig {
            ls_ratio: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = NewtonConfig {
            rtol: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn report_totals_and_csv() {
        let s = |a, i| InnerSummary {
            applications: a,
            iterations: i,
            max_iterations: i,
            unconverged: 0,
        };
        let rep = SolveReport {
            converged: true,
            field_labels: vec!["phi".into(), "c1".into()],
            residual_norms: vec![1.0, 0.1, 1e-7],
            step_lengths: vec![1.0, 0.5],
            outer_iterations: vec![4, 6],
            inner: vec![vec![s(4, 8), s(4, 12)], vec![s(6, 10), s(6, 30)]],
            wall_time: 0.0,
        };
        assert_eq!(rep.iterations(), 2);
        assert_eq!(rep.total_outer_iterations(), 10);
        let t = rep.inner_totals();
        assert_eq!((t[1].applications, t[1].iterations, t[1].max_iterations), (10, 42, 30));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("iteration,residual_norm"));
        assert!(lines[2].starts_with("1,1.0"));
        assert_eq!(lines[3].split(',').count(), lines[0].split(',').count());
    }
}
