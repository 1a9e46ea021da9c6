//! Geometric multigrid on nested tensor meshes for one DG field.
//!
//! Prolongation is the natural embedding of the coarse DG space in the fine
//! one, restriction is its transpose and coarse operators are the Galerkin
//! products `R A P`. Each level below the finest is smoothed by damped
//! Richardson with an additive Schwarz / ILU(0) preconditioner; the coarsest
//! level is solved with dense LU.

use std::sync::Arc;

use super::{norm2, residual, Asm, AsmPartition, CsrMatrix, DenseLu, LinalgError, LinearOperator, Preconditioner};
use crate::fespace::ReferenceBasis;
use crate::mesh::{Mesh, MeshHierarchy};
use crate::par;

/// Largest coarse problem handed to the dense solver.
pub const MAX_COARSE_DOFS: usize = 6000;

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherConfig {
    /// Richardson damping, 1 by default. `None` estimates `1/λ_max(M⁻¹A)`
    /// per level.
    pub damping: Option<f64>,
    /// Schwarz subdomains per level; 0 uses the worker thread count.
    pub subdomains: usize,
    /// Overlap in element layers.
    pub overlap: usize,
    /// Restricted Schwarz: each dof keeps only its owner's correction.
    pub restricted: bool,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            damping: Some(1.0),
            subdomains: 0,
            overlap: 1,
            restricted: true,
            pre_sweeps: 1,
            post_sweeps: 1,
        }
    }
}

impl SmootherConfig {
    pub fn effective_subdomains(&self) -> usize {
        if self.subdomains == 0 {
            par::current_num_threads().max(1)
        } else {
            self.subdomains
        }
    }
}

/// Injection of the coarse DG space into the fine one: row `(e, i)` holds the
/// coarse basis functions of `parent[e]` evaluated at fine node `i` of `e`.
pub fn dg_prolongation(fine: &Mesh, coarse: &Mesh, parents: &[usize], basis: &ReferenceBasis) -> CsrMatrix {
    let nd = basis.n_basis();
    let dim = basis.dim();
    let rows = par::map_range(fine.n_elements(), |e| {
        let gf = fine.geometry(e);
        let pe = parents[e];
        let gc = coarse.geometry(pe);
        let mut vals = vec![0.0; nd];
        let mut grads = vec![[0.0; 3]; nd];
        let mut out = Vec::with_capacity(nd * nd);
        for i in 0..nd {
            let x = gf.map(&basis.node(i));
            let mut xi = [0.0; 3];
            for a in 0..dim {
                xi[a] = (x[a] - gc.origin[a]) / gc.size[a];
            }
            basis.eval(&xi, &mut vals, &mut grads);
            for (j, &v) in vals.iter().enumerate() {
                if v.abs() > 1e-14 {
                    out.push((e * nd + i, pe * nd + j, v));
                }
            }
        }
        out
    });
    let t: Vec<(usize, usize, f64)> = rows.into_iter().flatten().collect();
    CsrMatrix::from_triplets(fine.n_elements() * nd, coarse.n_elements() * nd, &t)
        .expect("prolongation triplets are in range")
}

/// Nodal interpolation of a fine DG function onto the coarse space: coarse
/// node values are averaged over the children whose closure holds the node.
pub fn dg_interpolation(fine: &Mesh, coarse: &Mesh, parents: &[usize], basis: &ReferenceBasis) -> CsrMatrix {
    let nd = basis.n_basis();
    let dim = basis.dim();
    let mut children = vec![Vec::new(); coarse.n_elements()];
    for (e, &pe) in parents.iter().enumerate() {
        children[pe].push(e);
    }
    let rows = par::map_range(coarse.n_elements(), |ce| {
        let gc = coarse.geometry(ce);
        let mut vals = vec![0.0; nd];
        let mut grads = vec![[0.0; 3]; nd];
        let mut out = Vec::new();
        for i in 0..nd {
            let x = gc.map(&basis.node(i));
            let holders: Vec<(usize, [f64; 3])> = children[ce]
                .iter()
                .filter_map(|&e| {
                    let gf = fine.geometry(e);
                    let mut xi = [0.0; 3];
                    for a in 0..dim {
                        xi[a] = (x[a] - gf.origin[a]) / gf.size[a];
                    }
                    xi[..dim].iter().all(|&t| (-1e-10..=1.0 + 1e-10).contains(&t)).then_some((e, xi))
                })
                .collect();
            let w = 1.0 / holders.len() as f64;
            for (e, xi) in holders {
                basis.eval(&xi, &mut vals, &mut grads);
                for (j, &v) in vals.iter().enumerate() {
                    if v.abs() > 1e-14 {
                        out.push((ce * nd + i, e * nd + j, w * v));
                    }
                }
            }
        }
        out
    });
    let t: Vec<(usize, usize, f64)> = rows.into_iter().flatten().collect();
    CsrMatrix::from_triplets(coarse.n_elements() * nd, fine.n_elements() * nd, &t)
        .expect("interpolation triplets are in range")
}

/// Operator-independent part of the hierarchy: transfers and subdomains.
#[derive(Debug, Clone)]
pub struct GmgLevels {
    prolong: Vec<CsrMatrix>,
    restrict: Vec<CsrMatrix>,
    partitions: Vec<Arc<AsmPartition>>,
    n_dofs: Vec<usize>,
    smoother: SmootherConfig,
}

impl GmgLevels {
    pub fn new(h: &MeshHierarchy, basis: &ReferenceBasis, smoother: SmootherConfig) -> Result<Self, LinalgError> {
        let nd = basis.n_basis();
        let n_dofs: Vec<usize> = h.levels().iter().map(|m| m.n_elements() * nd).collect();
        if n_dofs[0] > MAX_COARSE_DOFS {
            return Err(LinalgError::Level {
                level: 0,
                msg: format!("coarsest level has {} dofs (limit {MAX_COARSE_DOFS})", n_dofs[0]),
            });
        }
        let prolong: Vec<CsrMatrix> = (0..h.n_levels() - 1)
            .map(|l| dg_prolongation(h.level(l + 1), h.level(l), h.parent_map(l), basis))
            .collect();
        let restrict = prolong.iter().map(|p| p.transpose()).collect();
        let nsub = smoother.effective_subdomains();
        let partitions = h
            .levels()
            .iter()
            .map(|m| Arc::new(AsmPartition::from_mesh(m, nsub.min(m.n_elements()), smoother.overlap, nd)))
            .collect();
        Ok(GmgLevels {
            prolong,
            restrict,
            partitions,
            n_dofs,
            smoother,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.n_dofs.len()
    }

    pub fn n_dofs(&self, level: usize) -> usize {
        self.n_dofs[level]
    }

    /// Prolongation from level `l` to level `l + 1`.
    pub fn prolongation(&self, l: usize) -> &CsrMatrix {
        &self.prolong[l]
    }

    pub fn restriction(&self, l: usize) -> &CsrMatrix {
        &self.restrict[l]
    }

    pub fn smoother(&self) -> &SmootherConfig {
        &self.smoother
    }
}

/// One V-cycle per application.
pub struct Gmg {
    levels: Arc<GmgLevels>,
    ops: Vec<Arc<CsrMatrix>>,
    smoothers: Vec<Asm>,
    damping: Vec<f64>,
    coarse: DenseLu,
}

impl Gmg {
    /// Coarse operators by Galerkin projection `Pᵀ A P` of the fine one.
    pub fn new(levels: Arc<GmgLevels>, fine: Arc<CsrMatrix>) -> Result<Self, LinalgError> {
        let nl = levels.n_levels();
        if fine.nrows() != levels.n_dofs(nl - 1) {
            return Err(LinalgError::DimensionMismatch {
                expected: levels.n_dofs(nl - 1),
                got: fine.nrows(),
            });
        }
        let mut ops = vec![fine];
        for l in (0..nl - 1).rev() {
            let a = ops.last().unwrap();
            let ap = a.matmul(&levels.prolong[l])?;
            ops.push(Arc::new(levels.restrict[l].matmul(&ap)?));
        }
        ops.reverse();
        Self::with_operators(levels, ops)
    }

    /// Caller-supplied operator per level, coarsest first.
    pub fn with_operators(levels: Arc<GmgLevels>, ops: Vec<Arc<CsrMatrix>>) -> Result<Self, LinalgError> {
        let nl = levels.n_levels();
        if ops.len() != nl {
            return Err(LinalgError::DimensionMismatch { expected: nl, got: ops.len() });
        }
        for (l, a) in ops.iter().enumerate() {
            if a.nrows() != levels.n_dofs(l) || a.ncols() != levels.n_dofs(l) {
                return Err(LinalgError::DimensionMismatch { expected: levels.n_dofs(l), got: a.nrows() });
            }
        }
        let coarse = DenseLu::from_csr(&ops[0]).map_err(|e| LinalgError::Level { level: 0, msg: e.to_string() })?;
        let mut smoothers = Vec::with_capacity(nl - 1);
        let mut damping = Vec::with_capacity(nl - 1);
        for l in 1..nl {
            let build = if levels.smoother.restricted { Asm::restricted } else { Asm::new };
            let asm = build(&ops[l], levels.partitions[l].clone())
                .map_err(|e| LinalgError::Level { level: l, msg: e.to_string() })?;
            let w = match levels.smoother.damping {
                Some(w) => w,
                None => 1.0 / estimate_lambda_max(ops[l].as_ref(), &asm)?.max(1.0),
            };
            smoothers.push(asm);
            damping.push(w);
        }
        Ok(Gmg {
            levels,
            ops,
            smoothers,
            damping,
            coarse,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.ops.len()
    }

    pub fn operator(&self, level: usize) -> &CsrMatrix {
        &self.ops[level]
    }

    /// Richardson damping used on `level` (≥ 1).
    pub fn damping(&self, level: usize) -> f64 {
        self.damping[level - 1]
    }

    fn smooth(&self, l: usize, b: &[f64], x: &mut [f64], sweeps: usize, r: &mut [f64], z: &mut [f64]) -> Result<(), LinalgError> {
        let w = self.damping[l - 1];
        for _ in 0..sweeps {
            residual(self.ops[l].as_ref(), x, b, r);
            self.smoothers[l - 1].apply(r, z)?;
            for (x, z) in x.iter_mut().zip(z.iter()) {
                *x += w * z;
            }
        }
        Ok(())
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) -> Result<(), LinalgError> {
        if l == 0 {
            self.coarse.solve(b, x);
            return Ok(());
        }
        let cfg = &self.levels.smoother;
        let n = b.len();
        let mut r = vec![0.0; n];
        let mut z = vec![0.0; n];
        x.fill(0.0);
        self.smooth(l, b, x, cfg.pre_sweeps, &mut r, &mut z)?;
        residual(self.ops[l].as_ref(), x, b, &mut r);
        let nc = self.levels.n_dofs(l - 1);
        let mut rc = vec![0.0; nc];
        self.levels.restrict[l - 1].spmv_unchecked(&r, &mut rc);
        let mut ec = vec![0.0; nc];
        self.cycle(l - 1, &rc, &mut ec)?;
        self.levels.prolong[l - 1].spmv_unchecked(&ec, &mut z);
        for (x, z) in x.iter_mut().zip(&z) {
            *x += z;
        }
        self.smooth(l, b, x, cfg.post_sweeps, &mut r, &mut z)?;
        if !norm2(x).is_finite() {
            return Err(LinalgError::Level { level: l, msg: "non-finite correction".into() });
        }
        Ok(())
    }

    /// Stationary iteration `x ← x + V(b − A x)`; returns the residual norms
    /// before each cycle and after the last one.
    pub fn iterate(&self, b: &[f64], x: &mut [f64], cycles: usize) -> Result<Vec<f64>, LinalgError> {
        let a = self.ops.last().unwrap();
        let n = b.len();
        let mut r = vec![0.0; n];
        let mut e = vec![0.0; n];
        let mut hist = Vec::with_capacity(cycles + 1);
        for _ in 0..cycles {
            residual(a.as_ref(), x, b, &mut r);
            hist.push(norm2(&r));
            self.apply(&r, &mut e)?;
            for (x, e) in x.iter_mut().zip(&e) {
                *x += e;
            }
        }
        residual(a.as_ref(), x, b, &mut r);
        hist.push(norm2(&r));
        Ok(hist)
    }
}

impl Preconditioner for Gmg {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        self.cycle(self.ops.len() - 1, r, z)
    }
}

/// Power-iteration estimate of the spectral radius of `M⁻¹A`.
fn estimate_lambda_max<A: LinearOperator + ?Sized, M: Preconditioner + ?Sized>(a: &A, m: &M) -> Result<f64, LinalgError> {
    let n = a.nrows();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).fract()).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut av = vec![0.0; n];
    let mut lambda = 1.0;
    for _ in 0..12 {
        a.apply(&v, &mut av);
        m.apply(&av, &mut v)?;
        lambda = norm2(&v);
        if !(lambda.is_finite() && lambda > 0.0) {
            return Ok(1.0);
        }
        v.iter_mut().for_each(|x| *x /= lambda);
    }
    Ok(1.1 * lambda)
}
