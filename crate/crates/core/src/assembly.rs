//! Residual and Jacobian of the DG discretization of the charge-conservation
//! Nernst–Planck system.
//!
//! Unknowns are ordered `(Φ, c_1, …, c_{m−1})`, all on one DG space. Every
//! element assembles the rows of its own test functions, so interior faces are
//! visited once from each side and no two threads write the same row.

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::fespace::{physical, BlockState, FeError, FeSpace};
use crate::linalg::{dg_interpolation, mmio, BlockOperator, CsrMatrix, SparsityPattern};
use crate::mesh::{BoundaryTag, FaceLink, MeshHierarchy};
use crate::par;
use crate::physics::{Electrode, ElectrodeKinetics, MmsCase, ParabolicFlow, PhysicsError, ScaledSystem};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("state has {got} entries per field, space has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("state has {got} fields, problem needs {expected}")]
    FieldMismatch { expected: usize, got: usize },
    #[error("boundary tag {0:?} present but the problem has no data for it")]
    MissingBoundaryData(BoundaryTag),
    #[error("penalty constant and face size must be positive (eta = {eta}, h = {h})")]
    BadPenalty { eta: f64, h: f64 },
    #[error("species index {0} out of range")]
    BadSpecies(usize),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Space(#[from] FeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Interior-penalty parameter `η (p+1)² / h`.
pub fn penalty(eta: f64, p: usize, h: f64) -> Result<f64, AssemblyError> {
    if !(eta > 0.0 && h > 0.0) {
        return Err(AssemblyError::BadPenalty { eta, h });
    }
    Ok(eta * ((p + 1) * (p + 1)) as f64 / h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgParams {
    /// η in the penalty law.
    pub penalty: f64,
}

impl Default for DgParams {
    fn default() -> Self {
        DgParams { penalty: 4.0 }
    }
}

pub type ScalarField = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;
/// Field indexed by full-system species number.
pub type SpeciesField = Arc<dyn Fn(usize, [f64; 3]) -> f64 + Send + Sync>;

/// Exterior data for weakly imposed Dirichlet conditions.
#[derive(Clone)]
pub struct Dirichlet {
    pub concentration: SpeciesField,
    pub potential: ScalarField,
}

/// Nondimensional problem data.
#[derive(Clone)]
pub struct Problem {
    pub system: ScaledSystem,
    pub velocity: VectorField,
    /// Bulk sources `r̂_k` of the retained species.
    pub species_source: Option<SpeciesField>,
    pub charge_source: Option<ScalarField>,
    pub dirichlet: Option<Dirichlet>,
    /// Scaled inlet concentration of every species.
    pub inlet: Vec<f64>,
    pub kinetics: Option<ElectrodeKinetics>,
}

impl Problem {
    /// Manufactured-solution problem with Dirichlet data on every face.
    pub fn mms(case: &MmsCase) -> Self {
        let c2 = case.clone();
        Problem {
            system: case.system.clone(),
            velocity: Arc::new(MmsCase::velocity),
            species_source: Some(Arc::new(move |k, x| c2.source_of(k, x))),
            charge_source: Some({
                let c3 = case.clone();
                Arc::new(move |x| c3.charge_source(x))
            }),
            dirichlet: Some(Dirichlet {
                concentration: Arc::new(|_, x| MmsCase::concentration(x)),
                potential: Arc::new(MmsCase::potential),
            }),
            inlet: vec![1.0; case.system.n_species()],
            kinetics: None,
        }
    }

    /// Channel reactor: parabolic inflow, inlet-scaled concentrations equal to
    /// one at the inlet, Butler–Volmer electrodes.
    pub fn reactor(system: ScaledSystem, flow: ParabolicFlow, kinetics: ElectrodeKinetics) -> Self {
        let scales = kinetics.scales.clone();
        let n = system.n_species();
        Problem {
            system,
            velocity: Arc::new(move |x: [f64; 3]| {
                let xd = [scales.position_dim(x[0]), scales.position_dim(x[1]), scales.position_dim(x[2])];
                let u = flow.velocity(xd);
                [u[0] / scales.velocity, u[1] / scales.velocity, u[2] / scales.velocity]
            }),
            species_source: None,
            charge_source: None,
            dirichlet: None,
            inlet: vec![1.0; n],
            kinetics: Some(kinetics),
        }
    }

    pub fn n_fields(&self) -> usize {
        1 + self.system.n_retained()
    }

    pub fn charge_source(&self, x: [f64; 3]) -> f64 {
        self.charge_source.as_ref().map_or(0.0, |f| f(x))
    }
}

/// Field-labelled block Jacobian.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    labels: Vec<String>,
    op: Arc<BlockOperator>,
    coarse: Vec<BlockMatrix>,
}

impl BlockMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_fields(&self) -> usize {
        self.op.n_fields()
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&Arc<CsrMatrix>> {
        self.op.block(i, j)
    }

    pub fn operator(&self) -> &Arc<BlockOperator> {
        &self.op
    }

    /// Jacobians rediscretized on the coarser mesh levels, coarsest first.
    /// Empty unless assembled by a multilevel [`Assembler`].
    pub fn coarse_levels(&self) -> &[BlockMatrix] {
        &self.coarse
    }

    /// Writes every nonzero block to `dir/A_<row>_<col>.mtx`.
    pub fn write_matrix_market(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for i in 0..self.n_fields() {
            for j in 0..self.n_fields() {
                if let Some(b) = self.block(i, j) {
                    let f = std::fs::File::create(dir.join(format!("A_{}_{}.mtx", self.labels[i], self.labels[j])))?;
                    let mut w = std::io::BufWriter::new(f);
                    mmio::write_matrix(b, &mut w)?;
                    w.flush()?;
                }
            }
        }
        Ok(())
    }
}

/// Element + face-neighbour coupling of a scalar DG field: the rows of
/// element `e` span the dofs of `e` and its neighbours in element order.
pub fn dg_pattern(space: &FeSpace) -> SparsityPattern {
    let mesh = space.mesh();
    let nd = space.dofs_per_element();
    let ne = mesh.n_elements();
    let slots: Vec<Vec<usize>> = par::map_range(ne, |e| element_slots(space, e));
    let mut row_ptr = Vec::with_capacity(ne * nd + 1);
    row_ptr.push(0);
    let mut nnz = 0;
    for s in &slots {
        for _ in 0..nd {
            nnz += s.len() * nd;
            row_ptr.push(nnz);
        }
    }
    let mut col_idx = Vec::with_capacity(nnz);
    for s in &slots {
        for _ in 0..nd {
            for &o in s {
                col_idx.extend(o * nd..(o + 1) * nd);
            }
        }
    }
    SparsityPattern::new(ne * nd, ne * nd, row_ptr, col_idx).expect("DG pattern is well formed")
}

fn element_slots(space: &FeSpace, e: usize) -> Vec<usize> {
    let mut s: Vec<usize> = std::iter::once(e).chain(space.mesh().neighbors(e)).collect();
    s.sort_unstable();
    s
}

/// Per-retained-species constants.
#[derive(Debug, Clone, Copy)]
struct SpeciesParams {
    /// Full-system index.
    k: usize,
    d: f64,
    z: f64,
    /// Electrode flux per unit current density.
    ff: f64,
}

/// One species residual to assemble: its constants, coefficient vector and
/// the field row it occupies (if any, for Jacobian output).
struct SpeciesView<'a> {
    sp: SpeciesParams,
    coeffs: &'a [f64],
    field: Option<usize>,
}

/// Mutable output of one element.
struct ElemOut<'a> {
    res: Vec<&'a mut [f64]>,
    jac: Vec<Option<&'a mut [f64]>>,
}

/// Row-local Jacobian writer for one element.
struct JacRows<'a, 'b> {
    blocks: &'b mut [Option<&'a mut [f64]>],
    nf: usize,
    nd: usize,
    ns: usize,
}

impl JacRows<'_, '_> {
    #[inline]
    fn block(&mut self, fi: usize, fj: usize) -> Option<&mut [f64]> {
        self.blocks[fi * self.nf + fj].as_deref_mut()
    }

    #[inline]
    fn idx(&self, a: usize, slot: usize, b: usize) -> usize {
        a * self.ns * self.nd + slot * self.nd + b
    }
}

/// Geometry of the element being assembled.
struct ElemCtx {
    e: usize,
    h: [f64; 3],
    slots: Vec<usize>,
    self_slot: usize,
}

impl ElemCtx {
    fn slot_of(&self, o: usize) -> usize {
        self.slots.binary_search(&o).expect("neighbour is in the slot list")
    }
}

/// Derivatives of the scaled current density with respect to the retained
/// concentrations, per retained species.
fn kinetic_chain(sys: &ScaledSystem, kin: &ElectrodeKinetics) -> (Vec<f64>, Vec<f64>) {
    let nr = sys.n_retained();
    let map = |idx: Option<usize>| -> Vec<f64> {
        (0..nr)
            .map(|l| match idx {
                Some(k) if k == sys.retained()[l] => 1.0,
                Some(k) if k == sys.eliminated => sys.recovery(l),
                _ => 0.0,
            })
            .collect()
    };
    (map(Some(kin.oxidant)), map(kin.reductant))
}

pub struct Assembler {
    space: Arc<FeSpace>,
    problem: Arc<Problem>,
    params: DgParams,
    pattern: Arc<SparsityPattern>,
    species: Vec<SpeciesParams>,
    /// `Σ_k z_k w_k · flux factor(k)`.
    charge_ff: f64,
    d_ox: Vec<f64>,
    d_red: Vec<f64>,
    mask: Vec<bool>,
    /// Coarser levels, coarsest first, each with the interpolation from the
    /// next finer level.
    coarse: Vec<(Assembler, CsrMatrix)>,
}

impl Assembler {
    pub fn new(space: Arc<FeSpace>, problem: Arc<Problem>, params: DgParams) -> Result<Self, AssemblyError> {
        penalty(params.penalty, space.order(), 1.0)?;
        let sys = &problem.system;
        if problem.inlet.len() != sys.n_species() {
            return Err(AssemblyError::FieldMismatch {
                expected: sys.n_species(),
                got: problem.inlet.len(),
            });
        }
        let mesh = space.mesh();
        for &t in mesh.boundary_tags() {
            match t {
                BoundaryTag::Exterior if problem.dirichlet.is_none() => return Err(AssemblyError::MissingBoundaryData(t)),
                t if t.is_electrode() && problem.kinetics.is_none() => return Err(AssemblyError::MissingBoundaryData(t)),
                _ => {}
            }
        }
        if let Some(kin) = &problem.kinetics {
            kin.bv.validate()?;
            if kin.oxidant >= sys.n_species() || kin.reductant.is_some_and(|r| r >= sys.n_species()) {
                return Err(AssemblyError::BadSpecies(kin.oxidant));
            }
        }
        let ff = |k: usize| problem.kinetics.as_ref().map_or(0.0, |kin| kin.flux_factor(k));
        let species: Vec<SpeciesParams> = sys
            .retained()
            .iter()
            .map(|&k| SpeciesParams {
                k,
                d: sys.dhat[k],
                z: sys.z[k],
                ff: ff(k),
            })
            .collect();
        let charge_ff = (0..sys.n_species()).map(|k| sys.z[k] * sys.w[k] * ff(k)).sum();
        let nr = sys.n_retained();
        let (d_ox, d_red) = match &problem.kinetics {
            Some(kin) => kinetic_chain(sys, kin),
            None => (vec![0.0; nr], vec![0.0; nr]),
        };
        let nf = 1 + nr;
        let mut mask = vec![false; nf * nf];
        for i in 0..nf {
            mask[i * nf] = true;
            mask[i] = true;
            mask[i * nf + i] = true;
        }
        let has_electrodes = mesh.boundary_tags().iter().any(|t| t.is_electrode());
        if has_electrodes {
            for (j, s) in species.iter().enumerate() {
                for l in 0..nr {
                    if s.ff != 0.0 && (d_ox[l] != 0.0 || d_red[l] != 0.0) {
                        mask[(1 + j) * nf + 1 + l] = true;
                    }
                }
            }
        }
        let pattern = Arc::new(dg_pattern(&space));
        Ok(Assembler {
            space,
            problem,
            params,
            pattern,
            species,
            charge_ff,
            d_ox,
            d_red,
            mask,
            coarse: Vec::new(),
        })
    }

    /// Assembler on the finest level of `h` whose Jacobians also carry the
    /// coarse-level Jacobians, assembled at the state interpolated downward.
    pub fn multilevel(h: &MeshHierarchy, order: usize, problem: Arc<Problem>, params: DgParams) -> Result<Self, AssemblyError> {
        let nl = h.n_levels();
        let spaces = h
            .levels()
            .iter()
            .map(|m| FeSpace::new(m.clone(), order).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        let mut coarse = Vec::with_capacity(nl - 1);
        for l in 0..nl - 1 {
            let interp = dg_interpolation(h.level(l + 1), h.level(l), h.parent_map(l), spaces[l].basis());
            coarse.push((Assembler::new(spaces[l].clone(), problem.clone(), params)?, interp));
        }
        let mut fine = Assembler::new(spaces[nl - 1].clone(), problem, params)?;
        fine.coarse = coarse;
        Ok(fine)
    }

    /// Number of mesh levels the Jacobian is assembled on.
    pub fn n_levels(&self) -> usize {
        1 + self.coarse.len()
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn problem(&self) -> &Arc<Problem> {
        &self.problem
    }

    pub fn params(&self) -> DgParams {
        self.params
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n_fields(&self) -> usize {
        self.problem.n_fields()
    }

    pub fn block_len(&self) -> usize {
        self.space.n_dofs()
    }

    pub fn field_labels(&self) -> Vec<String> {
        std::iter::once("phi".to_string())
            .chain((0..self.species.len()).map(|j| format!("c{}", j + 1)))
            .collect()
    }

    /// Whether block `(i, j)` of the Jacobian is structurally nonzero.
    pub fn block_present(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n_fields() + j]
    }

    pub fn zero_state(&self) -> BlockState {
        BlockState::zeros(self.n_fields(), self.block_len())
    }

    fn check(&self, state: &BlockState) -> Result<(), AssemblyError> {
        if state.n_fields() != self.n_fields() {
            return Err(AssemblyError::FieldMismatch {
                expected: self.n_fields(),
                got: state.n_fields(),
            });
        }
        if state.block_len() != self.block_len() {
            return Err(AssemblyError::SizeMismatch {
                expected: self.block_len(),
                got: state.block_len(),
            });
        }
        Ok(())
    }

    /// Coefficients of the eliminated concentration.
    pub fn recover_eliminated(&self, state: &BlockState) -> Vec<f64> {
        let sys = &self.problem.system;
        let mut out = vec![0.0; self.block_len()];
        for j in 0..sys.n_retained() {
            let r = sys.recovery(j);
            for (o, c) in out.iter_mut().zip(state.field(1 + j)) {
                *o += r * c;
            }
        }
        out
    }

    pub fn residual(&self, state: &BlockState) -> Result<BlockState, AssemblyError> {
        Ok(self.assemble(state, false)?.0)
    }

    pub fn jacobian(&self, state: &BlockState) -> Result<BlockMatrix, AssemblyError> {
        Ok(self.assemble(state, true)?.1.expect("jacobian requested"))
    }

    pub fn residual_and_jacobian(&self, state: &BlockState) -> Result<(BlockState, BlockMatrix), AssemblyError> {
        let (r, j) = self.assemble(state, true)?;
        Ok((r, j.expect("jacobian requested")))
    }

    /// Mass-balance residual of species `k` (full-system index) with
    /// concentration coefficients `c`, potential and electrode state taken
    /// from `state`. Works for the eliminated species too.
    pub fn species_residual(&self, k: usize, c: &[f64], state: &BlockState) -> Result<Vec<f64>, AssemblyError> {
        self.check(state)?;
        let sys = &self.problem.system;
        if k >= sys.n_species() {
            return Err(AssemblyError::BadSpecies(k));
        }
        if c.len() != self.block_len() {
            return Err(AssemblyError::SizeMismatch {
                expected: self.block_len(),
                got: c.len(),
            });
        }
        let sp = SpeciesParams {
            k,
            d: sys.dhat[k],
            z: sys.z[k],
            ff: self.problem.kinetics.as_ref().map_or(0.0, |kin| kin.flux_factor(k)),
        };
        let nd = self.space.dofs_per_element();
        let mut out = vec![0.0; self.block_len()];
        let err = Mutex::new(None);
        par::for_each_chunk_mut(&mut out, nd, |e, res| {
            let ctx = self.ctx(e);
            let view = SpeciesView { sp, coeffs: c, field: None };
            if let Err(x) = self.species_element(&ctx, &view, state, res, None) {
                *err.lock().unwrap() = Some(x);
            }
        });
        match err.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    fn ctx(&self, e: usize) -> ElemCtx {
        let slots = element_slots(&self.space, e);
        let self_slot = slots.binary_search(&e).unwrap();
        ElemCtx {
            e,
            h: self.space.mesh().element_size(e),
            slots,
            self_slot,
        }
    }

    fn coarse_jacobians(&self, state: &BlockState) -> Result<Vec<BlockMatrix>, AssemblyError> {
        let mut out = Vec::with_capacity(self.coarse.len());
        let mut x = state.clone();
        for (asm, interp) in self.coarse.iter().rev() {
            let nc = asm.block_len();
            let mut v = vec![0.0; x.n_fields() * nc];
            for f in 0..x.n_fields() {
                interp.spmv_unchecked(x.field(f), &mut v[f * nc..(f + 1) * nc]);
            }
            x = BlockState::from_vec(x.n_fields(), nc, v).expect("sized by the coarse space");
            out.push(asm.jacobian(&x)?);
        }
        out.reverse();
        Ok(out)
    }

    fn assemble(&self, state: &BlockState, want_jac: bool) -> Result<(BlockState, Option<BlockMatrix>), AssemblyError> {
        self.check(state)?;
        let nf = self.n_fields();
        let n = self.block_len();
        let nd = self.space.dofs_per_element();
        let ne = self.space.mesh().n_elements();
        let nnz = self.pattern.nnz();
        let mut res = vec![0.0; nf * n];
        let mut blocks: Vec<Option<Vec<f64>>> = self
            .mask
            .iter()
            .map(|&m| (want_jac && m).then(|| vec![0.0; nnz]))
            .collect();
        {
            let rp = self.pattern.row_ptr();
            let offsets: Vec<usize> = (0..=ne).map(|e| rp[e * nd]).collect();
            let mut res_it: Vec<_> = res.chunks_mut(n).map(|f| f.chunks_mut(nd)).collect();
            let mut jac_it: Vec<_> = blocks
                .iter_mut()
                .map(|b| b.as_mut().map(|v| par::split_at_offsets(v, &offsets).into_iter()))
                .collect();
            let mut work: Vec<ElemOut> = (0..ne)
                .map(|_| ElemOut {
                    res: res_it.iter_mut().map(|it| it.next().unwrap()).collect(),
                    jac: jac_it.iter_mut().map(|it| it.as_mut().map(|i| i.next().unwrap())).collect(),
                })
                .collect();
            let err = Mutex::new(None);
            par::for_each_mut(&mut work, |e, out| {
                if let Err(x) = self.element(e, state, out, want_jac) {
                    *err.lock().unwrap() = Some(x);
                }
            });
            if let Some(x) = err.into_inner().unwrap() {
                return Err(x);
            }
        }
        let residual = BlockState::from_vec(nf, n, res).expect("residual sized to the state");
        let jac = if want_jac {
            let blocks = blocks
                .into_iter()
                .map(|b| b.map(|v| Arc::new(CsrMatrix::from_parts(self.pattern.clone(), v).expect("pattern-sized values"))))
                .collect();
            Some(BlockMatrix {
                labels: self.field_labels(),
                op: Arc::new(BlockOperator::new(nf, n, blocks).expect("blocks share the DG pattern")),
                coarse: self.coarse_jacobians(state)?,
            })
        } else {
            None
        };
        Ok((residual, jac))
    }

    fn element(&self, e: usize, state: &BlockState, out: &mut ElemOut, want_jac: bool) -> Result<(), AssemblyError> {
        let ctx = self.ctx(e);
        let nf = self.n_fields();
        let nd = self.space.dofs_per_element();
        let ns = ctx.slots.len();
        let (res0, res_rest) = out.res.split_first_mut().unwrap();
        let mut jac = want_jac.then(|| JacRows {
            blocks: &mut out.jac,
            nf,
            nd,
            ns,
        });
        for (j, r) in res_rest.iter_mut().enumerate() {
            let view = SpeciesView {
                sp: self.species[j],
                coeffs: state.field(1 + j),
                field: Some(1 + j),
            };
            self.species_element(&ctx, &view, state, r, jac.as_mut())?;
        }
        self.charge_element(&ctx, state, res0, jac.as_mut())
    }

    /// Scaled current density and its derivatives at a face point of `e`.
    fn current_at(&self, tag: BoundaryTag, x: [f64; 3], c_ret: &[f64], phi: f64) -> Result<(f64, f64, Vec<f64>), AssemblyError> {
        let kin = self.problem.kinetics.as_ref().expect("checked at construction");
        let sys = &self.problem.system;
        let mut c_all = vec![0.0; sys.n_species()];
        for (j, &k) in sys.retained().iter().enumerate() {
            c_all[k] = c_ret[j];
        }
        c_all[sys.eliminated] = sys.recover(c_ret);
        let which = if tag == BoundaryTag::ElectrodeAnode {
            Electrode::Anode
        } else {
            Electrode::Cathode
        };
        let s = kin.current(which, x, &c_all, phi)?;
        let dc = (0..sys.n_retained())
            .map(|l| s.dj_dc_ox * self.d_ox[l] + s.dj_dc_red * self.d_red[l])
            .collect();
        Ok((s.j, s.dj_dphi, dc))
    }

    fn species_element(
        &self,
        ctx: &ElemCtx,
        view: &SpeciesView,
        state: &BlockState,
        res: &mut [f64],
        mut jac: Option<&mut JacRows>,
    ) -> Result<(), AssemblyError> {
        let space = &*self.space;
        let mesh = space.mesh();
        let dim = space.dim();
        let nd = space.dofs_per_element();
        let p = space.order();
        let e = ctx.e;
        let h = ctx.h;
        let g = mesh.geometry(e);
        let SpeciesParams { k, d, z, ff } = view.sp;
        let zd = z * d;
        let ce = &view.coeffs[e * nd..(e + 1) * nd];
        let phi = state.field(0);
        let pe = &phi[e * nd..(e + 1) * nd];
        let jf = if jac.is_some() { view.field } else { None };
        let ss = ctx.self_slot;

        // volume
        let tab = space.volume_tab();
        let det = g.volume(dim);
        let mut gv = vec![[0.0; 3]; nd];
        for q in 0..tab.n_points() {
            let vals = tab.values_at(q);
            for (gb, rg) in gv.iter_mut().zip(tab.grads_at(q)) {
                *gb = [rg[0] / h[0], rg[1] / h[1], rg[2] / h[2]];
            }
            let x = physical(&g, &tab.points[q], dim);
            let wq = tab.weights[q] * det;
            let (c, gc) = eval(ce, vals, &gv);
            let (_, gp) = eval(pe, vals, &gv);
            let u = (self.problem.velocity)(x);
            let qv = [u[0] - zd * gp[0], u[1] - zd * gp[1], u[2] - zd * gp[2]];
            let r = self.problem.species_source.as_ref().map_or(0.0, |s| s(k, x));
            for a in 0..nd {
                res[a] += wq * (d * dot3(&gc, &gv[a]) - c * dot3(&qv, &gv[a]) - r * vals[a]);
            }
            if let (Some(f), Some(jr)) = (jf, jac.as_deref_mut()) {
                let i_cc = jr.idx(0, ss, 0);
                let stride = jr.ns * nd;
                if let Some(bcc) = jr.block(f, f) {
                    for a in 0..nd {
                        let qa = dot3(&qv, &gv[a]);
                        let row = &mut bcc[i_cc + a * stride..i_cc + a * stride + nd];
                        for b in 0..nd {
                            row[b] += wq * (d * dot3(&gv[b], &gv[a]) - vals[b] * qa);
                        }
                    }
                }
                if let Some(bcp) = jr.block(f, 0) {
                    for a in 0..nd {
                        let row = &mut bcp[i_cc + a * stride..i_cc + a * stride + nd];
                        for b in 0..nd {
                            row[b] += wq * c * zd * dot3(&gv[b], &gv[a]);
                        }
                    }
                }
            }
        }

        // faces
        for lf in 0..2 * dim {
            let ax = lf / 2;
            let sgn = if lf % 2 == 0 { -1.0 } else { 1.0 };
            let mut nrm = [0.0; 3];
            nrm[ax] = sgn;
            let ft = space.face_tab(lf);
            let detf: f64 = (0..dim).filter(|&t| t != ax).map(|t| h[t]).product();
            let dn_e: Vec<f64> = ft.grads.iter().map(|rg| sgn * rg[ax] / h[ax]).collect();
            match mesh.link(e, lf) {
                FaceLink::Interior { neighbor: o, neighbor_face } => {
                    let ho = mesh.element_size(o);
                    let delta = penalty(self.params.penalty, p, 0.5 * (h[ax] + ho[ax]))?;
                    let ot = space.face_tab(neighbor_face);
                    let dn_o: Vec<f64> = ot.grads.iter().map(|rg| sgn * rg[ax] / ho[ax]).collect();
                    let co = &view.coeffs[o * nd..(o + 1) * nd];
                    let po = &phi[o * nd..(o + 1) * nd];
                    let os = ctx.slot_of(o);
                    for q in 0..ft.n_points() {
                        let ve = ft.values_at(q);
                        let de = &dn_e[q * nd..(q + 1) * nd];
                        let vo = ot.values_at(q);
                        let do_ = &dn_o[q * nd..(q + 1) * nd];
                        let x = physical(&g, &ft.points[q], dim);
                        let wf = ft.weights[q] * detf;
                        let (c_e, dc_e) = eval_n(ce, ve, de);
                        let (c_o, dc_o) = eval_n(co, vo, do_);
                        let (_, dp_e) = eval_n(pe, ve, de);
                        let (_, dp_o) = eval_n(po, vo, do_);
                        let un = dot3(&(self.problem.velocity)(x), &nrm);
                        let qe = un - zd * dp_e;
                        let qo = un - zd * dp_o;
                        let s = 0.5 * (qe + qo);
                        let jump = c_e - c_o;
                        let flux = 0.5 * (c_e * qe + c_o * qo) + 0.5 * s.abs() * jump;
                        for a in 0..nd {
                            res[a] += wf
                                * (-0.5 * d * jump * de[a] - 0.5 * d * (dc_e + dc_o) * ve[a] + d * delta * jump * ve[a] + flux * ve[a]);
                        }
                        if let (Some(f), Some(jr)) = (jf, jac.as_deref_mut()) {
                            let sg = sign(s);
                            let stride = jr.ns * nd;
                            let (ie, io) = (jr.idx(0, ss, 0), jr.idx(0, os, 0));
                            if let Some(b) = jr.block(f, f) {
                                for a in 0..nd {
                                    for bb in 0..nd {
                                        b[ie + a * stride + bb] += wf
                                            * (-0.5 * d * ve[bb] * de[a] - 0.5 * d * de[bb] * ve[a]
                                                + d * delta * ve[bb] * ve[a]
                                                + (0.5 * qe + 0.5 * s.abs()) * ve[bb] * ve[a]);
                                        b[io + a * stride + bb] += wf
                                            * (0.5 * d * vo[bb] * de[a] - 0.5 * d * do_[bb] * ve[a] - d * delta * vo[bb] * ve[a]
                                                + (0.5 * qo - 0.5 * s.abs()) * vo[bb] * ve[a]);
                                    }
                                }
                            }
                            if let Some(b) = jr.block(f, 0) {
                                let ke = 0.5 * c_e + 0.25 * sg * jump;
                                let ko = 0.5 * c_o + 0.25 * sg * jump;
                                for a in 0..nd {
                                    for bb in 0..nd {
                                        b[ie + a * stride + bb] -= wf * zd * ke * de[bb] * ve[a];
                                        b[io + a * stride + bb] -= wf * zd * ko * do_[bb] * ve[a];
                                    }
                                }
                            }
                        }
                    }
                }
                FaceLink::Boundary { tag, .. } => {
                    if tag == BoundaryTag::Wall {
                        continue;
                    }
                    let delta = penalty(self.params.penalty, p, h[ax])?;
                    for q in 0..ft.n_points() {
                        let ve = ft.values_at(q);
                        let de = &dn_e[q * nd..(q + 1) * nd];
                        let x = physical(&g, &ft.points[q], dim);
                        let wf = ft.weights[q] * detf;
                        let (c_e, dc_e) = eval_n(ce, ve, de);
                        let (p_e, dp_e) = eval_n(pe, ve, de);
                        let un = dot3(&(self.problem.velocity)(x), &nrm);
                        let qn = un - zd * dp_e;
                        let stride = nd * ctx.slots.len();
                        let ie = ss * nd;
                        match tag {
                            BoundaryTag::Inlet => {
                                let cin = self.problem.inlet[k];
                                for a in 0..nd {
                                    res[a] += wf * un * cin * ve[a];
                                }
                            }
                            BoundaryTag::Outlet => {
                                for a in 0..nd {
                                    res[a] += wf * qn * c_e * ve[a];
                                }
                                if let (Some(f), Some(jr)) = (jf, jac.as_deref_mut()) {
                                    if let Some(b) = jr.block(f, f) {
                                        for a in 0..nd {
                                            for bb in 0..nd {
                                                b[ie + a * stride + bb] += wf * qn * ve[bb] * ve[a];
                                            }
                                        }
                                    }
                                    if let Some(b) = jr.block(f, 0) {
                                        for a in 0..nd {
                                            for bb in 0..nd {
                                                b[ie + a * stride + bb] -= wf * zd * c_e * de[bb] * ve[a];
                                            }
                                        }
                                    }
                                }
                            }
                            BoundaryTag::Exterior => {
                                let dir = self.problem.dirichlet.as_ref().expect("checked at construction");
                                let gd = (dir.concentration)(k, x);
                                let jump = c_e - gd;
                                let flux = 0.5 * qn * (c_e + gd) + 0.5 * qn.abs() * jump;
                                for a in 0..nd {
                                    res[a] += wf * (-d * jump * de[a] - d * dc_e * ve[a] + d * delta * jump * ve[a] + flux * ve[a]);
                                }
                                if let (Some(f), Some(jr)) = (jf, jac.as_deref_mut()) {
                                    if let Some(b) = jr.block(f, f) {
                                        for a in 0..nd {
                                            for bb in 0..nd {
                                                b[ie + a * stride + bb] += wf
                                                    * (-d * ve[bb] * de[a] - d * de[bb] * ve[a]
                                                        + d * delta * ve[bb] * ve[a]
                                                        + 0.5 * (qn + qn.abs()) * ve[bb] * ve[a]);
                                            }
                                        }
                                    }
                                    if let Some(b) = jr.block(f, 0) {
                                        let kk = 0.5 * (c_e + gd) + 0.5 * sign(qn) * jump;
                                        for a in 0..nd {
                                            for bb in 0..nd {
                                                b[ie + a * stride + bb] -= wf * zd * kk * de[bb] * ve[a];
                                            }
                                        }
                                    }
                                }
                            }
                            t if t.is_electrode() => {
                                if ff == 0.0 {
                                    continue;
                                }
                                let c_ret = self.retained_at(state, e, ve);
                                let (jc, djp, djc) = self.current_at(t, x, &c_ret, p_e)?;
                                for a in 0..nd {
                                    res[a] -= wf * ff * jc * ve[a];
                                }
                                if let (Some(f), Some(jr)) = (jf, jac.as_deref_mut()) {
                                    if let Some(b) = jr.block(f, 0) {
                                        for a in 0..nd {
                                            for bb in 0..nd {
                                                b[ie + a * stride + bb] -= wf * ff * djp * ve[bb] * ve[a];
                                            }
                                        }
                                    }
                                    for (l, dl) in djc.iter().enumerate() {
                                        if *dl == 0.0 {
                                            continue;
                                        }
                                        if let Some(b) = jr.block(f, 1 + l) {
                                            for a in 0..nd {
                                                for bb in 0..nd {
                                                    b[ie + a * stride + bb] -= wf * ff * dl * ve[bb] * ve[a];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Retained concentrations at a point of element `e` with basis values `vals`.
    fn retained_at(&self, state: &BlockState, e: usize, vals: &[f64]) -> Vec<f64> {
        let nd = vals.len();
        (0..self.species.len())
            .map(|j| {
                state.field(1 + j)[e * nd..(e + 1) * nd]
                    .iter()
                    .zip(vals)
                    .map(|(c, v)| c * v)
                    .sum()
            })
            .collect()
    }

    fn charge_element(&self, ctx: &ElemCtx, state: &BlockState, res: &mut [f64], mut jac: Option<&mut JacRows>) -> Result<(), AssemblyError> {
        let space = &*self.space;
        let mesh = space.mesh();
        let sys = &self.problem.system;
        let dim = space.dim();
        let nd = space.dofs_per_element();
        let nr = sys.n_retained();
        let p = space.order();
        let e = ctx.e;
        let h = ctx.h;
        let g = mesh.geometry(e);
        let ss = ctx.self_slot;
        let aj: Vec<f64> = (0..nr).map(|j| sys.a(j)).collect();
        let kj: Vec<f64> = (0..nr).map(|j| sys.kappa_coeff(j)).collect();
        let phi = state.field(0);
        let pe = &phi[e * nd..(e + 1) * nd];
        let cs: Vec<&[f64]> = (0..nr).map(|j| state.field(1 + j)).collect();
        let ce: Vec<&[f64]> = cs.iter().map(|c| &c[e * nd..(e + 1) * nd]).collect();

        // volume
        let tab = space.volume_tab();
        let det = g.volume(dim);
        let mut gv = vec![[0.0; 3]; nd];
        let mut cval = vec![0.0; nr];
        let mut cgrad = vec![[0.0; 3]; nr];
        for q in 0..tab.n_points() {
            let vals = tab.values_at(q);
            for (gb, rg) in gv.iter_mut().zip(tab.grads_at(q)) {
                *gb = [rg[0] / h[0], rg[1] / h[1], rg[2] / h[2]];
            }
            let x = physical(&g, &tab.points[q], dim);
            let wq = tab.weights[q] * det;
            for j in 0..nr {
                (cval[j], cgrad[j]) = eval(ce[j], vals, &gv);
            }
            let (_, gp) = eval(pe, vals, &gv);
            let kappa: f64 = kj.iter().zip(&cval).map(|(k, c)| k * c).sum();
            let mut flux = [kappa * gp[0], kappa * gp[1], kappa * gp[2]];
            for j in 0..nr {
                for t in 0..3 {
                    flux[t] += aj[j] * cgrad[j][t];
                }
            }
            let f = self.problem.charge_source(x);
            for a in 0..nd {
                res[a] += wq * (dot3(&flux, &gv[a]) - f * vals[a]);
            }
            if let Some(jr) = jac.as_deref_mut() {
                let i0 = jr.idx(0, ss, 0);
                let stride = jr.ns * nd;
                if let Some(b) = jr.block(0, 0) {
                    for a in 0..nd {
                        for bb in 0..nd {
                            b[i0 + a * stride + bb] += wq * kappa * dot3(&gv[bb], &gv[a]);
                        }
                    }
                }
                for j in 0..nr {
                    if let Some(b) = jr.block(0, 1 + j) {
                        for a in 0..nd {
                            let pa = dot3(&gp, &gv[a]);
                            for bb in 0..nd {
                                b[i0 + a * stride + bb] += wq * (aj[j] * dot3(&gv[bb], &gv[a]) + kj[j] * vals[bb] * pa);
                            }
                        }
                    }
                }
            }
        }

        // faces
        let mut c_e = vec![0.0; nr];
        let mut dc_e = vec![0.0; nr];
        let mut c_o = vec![0.0; nr];
        let mut dc_o = vec![0.0; nr];
        for lf in 0..2 * dim {
            let ax = lf / 2;
            let sgn = if lf % 2 == 0 { -1.0 } else { 1.0 };
            let ft = space.face_tab(lf);
            let detf: f64 = (0..dim).filter(|&t| t != ax).map(|t| h[t]).product();
            let dn_e: Vec<f64> = ft.grads.iter().map(|rg| sgn * rg[ax] / h[ax]).collect();
            match mesh.link(e, lf) {
                FaceLink::Interior { neighbor: o, neighbor_face } => {
                    let ho = mesh.element_size(o);
                    let delta = penalty(self.params.penalty, p, 0.5 * (h[ax] + ho[ax]))?;
                    let ot = space.face_tab(neighbor_face);
                    let dn_o: Vec<f64> = ot.grads.iter().map(|rg| sgn * rg[ax] / ho[ax]).collect();
                    let po = &phi[o * nd..(o + 1) * nd];
                    let os = ctx.slot_of(o);
                    for q in 0..ft.n_points() {
                        let ve = ft.values_at(q);
                        let de = &dn_e[q * nd..(q + 1) * nd];
                        let vo = ot.values_at(q);
                        let do_ = &dn_o[q * nd..(q + 1) * nd];
                        let wf = ft.weights[q] * detf;
                        for j in 0..nr {
                            (c_e[j], dc_e[j]) = eval_n(ce[j], ve, de);
                            (c_o[j], dc_o[j]) = eval_n(&cs[j][o * nd..(o + 1) * nd], vo, do_);
                        }
                        let (p_e, dp_e) = eval_n(pe, ve, de);
                        let (p_o, dp_o) = eval_n(po, vo, do_);
                        let ke: f64 = kj.iter().zip(&c_e).map(|(k, c)| k * c).sum();
                        let ko: f64 = kj.iter().zip(&c_o).map(|(k, c)| k * c).sum();
                        let pj = p_e - p_o;
                        // coefficients of v and of ∂v/∂n
                        let mut cv = -0.5 * (ke * dp_e + ko * dp_o) + 0.5 * (ke + ko) * delta * pj;
                        let mut cdv = -0.5 * ke * pj;
                        for j in 0..nr {
                            cv -= 0.5 * aj[j] * (dc_e[j] + dc_o[j]);
                            cdv -= 0.5 * aj[j] * (c_e[j] - c_o[j]);
                        }
                        for a in 0..nd {
                            res[a] += wf * (cv * ve[a] + cdv * de[a]);
                        }
                        if let Some(jr) = jac.as_deref_mut() {
                            let stride = jr.ns * nd;
                            let (ie, io) = (jr.idx(0, ss, 0), jr.idx(0, os, 0));
                            let kav = 0.5 * (ke + ko);
                            if let Some(b) = jr.block(0, 0) {
                                for a in 0..nd {
                                    for bb in 0..nd {
                                        b[ie + a * stride + bb] += wf
                                            * (-0.5 * ke * ve[bb] * de[a] - 0.5 * ke * de[bb] * ve[a] + kav * delta * ve[bb] * ve[a]);
                                        b[io + a * stride + bb] += wf
                                            * (0.5 * ke * vo[bb] * de[a] - 0.5 * ko * do_[bb] * ve[a] - kav * delta * vo[bb] * ve[a]);
                                    }
                                }
                            }
                            for j in 0..nr {
                                if let Some(b) = jr.block(0, 1 + j) {
                                    let (a_, k_) = (aj[j], kj[j]);
                                    for a in 0..nd {
                                        for bb in 0..nd {
                                            b[ie + a * stride + bb] += wf
                                                * (-0.5 * a_ * ve[bb] * de[a] - 0.5 * a_ * de[bb] * ve[a] - 0.5 * k_ * pj * ve[bb] * de[a]
                                                    - 0.5 * k_ * dp_e * ve[bb] * ve[a]
                                                    + 0.5 * k_ * delta * pj * ve[bb] * ve[a]);
                                            b[io + a * stride + bb] += wf
                                                * (0.5 * a_ * vo[bb] * de[a] - 0.5 * a_ * do_[bb] * ve[a] - 0.5 * k_ * dp_o * vo[bb] * ve[a]
                                                    + 0.5 * k_ * delta * pj * vo[bb] * ve[a]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                FaceLink::Boundary { tag, .. } => {
                    let delta = penalty(self.params.penalty, p, h[ax])?;
                    match tag {
                        BoundaryTag::Exterior => {
                            let dir = self.problem.dirichlet.as_ref().expect("checked at construction");
                            for q in 0..ft.n_points() {
                                let ve = ft.values_at(q);
                                let de = &dn_e[q * nd..(q + 1) * nd];
                                let x = physical(&g, &ft.points[q], dim);
                                let wf = ft.weights[q] * detf;
                                for j in 0..nr {
                                    (c_e[j], dc_e[j]) = eval_n(ce[j], ve, de);
                                }
                                let (p_e, dp_e) = eval_n(pe, ve, de);
                                let kap: f64 = kj.iter().zip(&c_e).map(|(k, c)| k * c).sum();
                                let pj = p_e - (dir.potential)(x);
                                let mut cv = -kap * dp_e + kap * delta * pj;
                                let mut cdv = -kap * pj;
                                let mut gj = vec![0.0; nr];
                                for j in 0..nr {
                                    gj[j] = (dir.concentration)(sys.retained()[j], x);
                                    cv -= aj[j] * dc_e[j];
                                    cdv -= aj[j] * (c_e[j] - gj[j]);
                                }
                                for a in 0..nd {
                                    res[a] += wf * (cv * ve[a] + cdv * de[a]);
                                }
                                if let Some(jr) = jac.as_deref_mut() {
                                    let stride = jr.ns * nd;
                                    let ie = jr.idx(0, ss, 0);
                                    if let Some(b) = jr.block(0, 0) {
                                        for a in 0..nd {
                                            for bb in 0..nd {
                                                b[ie + a * stride + bb] +=
                                                    wf * (-kap * ve[bb] * de[a] - kap * de[bb] * ve[a] + kap * delta * ve[bb] * ve[a]);
                                            }
                                        }
                                    }
                                    for j in 0..nr {
                                        if let Some(b) = jr.block(0, 1 + j) {
                                            let (a_, k_) = (aj[j], kj[j]);
                                            for a in 0..nd {
                                                for bb in 0..nd {
                                                    b[ie + a * stride + bb] += wf
                                                        * (-a_ * ve[bb] * de[a] - a_ * de[bb] * ve[a] - k_ * pj * ve[bb] * de[a]
                                                            - k_ * dp_e * ve[bb] * ve[a]
                                                            + k_ * delta * pj * ve[bb] * ve[a]);
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        t if t.is_electrode() && self.charge_ff != 0.0 => {
                            let gff = self.charge_ff;
                            for q in 0..ft.n_points() {
                                let ve = ft.values_at(q);
                                let x = physical(&g, &ft.points[q], dim);
                                let wf = ft.weights[q] * detf;
                                let c_ret = self.retained_at(state, e, ve);
                                let (p_e, _) = eval_n(pe, ve, &dn_e[q * nd..(q + 1) * nd]);
                                let (jc, djp, djc) = self.current_at(t, x, &c_ret, p_e)?;
                                for a in 0..nd {
                                    res[a] -= wf * gff * jc * ve[a];
                                }
                                if let Some(jr) = jac.as_deref_mut() {
                                    let stride = jr.ns * nd;
                                    let ie = jr.idx(0, ss, 0);
                                    if let Some(b) = jr.block(0, 0) {
                                        for a in 0..nd {
                                            for bb in 0..nd {
                                                b[ie + a * stride + bb] -= wf * gff * djp * ve[bb] * ve[a];
                                            }
                                        }
                                    }
                                    for (l, dl) in djc.iter().enumerate() {
                                        if *dl == 0.0 {
                                            continue;
                                        }
                                        if let Some(b) = jr.block(0, 1 + l) {
                                            for a in 0..nd {
                                                for bb in 0..nd {
                                                    b[ie + a * stride + bb] -= wf * gff * dl * ve[bb] * ve[a];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// Boundary integral `∫ J` over the faces carrying `tag`, in scaled units
    /// (A/m² times scaled area).
    pub fn electrode_current(&self, state: &BlockState, tag: BoundaryTag) -> Result<f64, AssemblyError> {
        let faces = self.face_currents(state)?;
        Ok(self
            .space
            .mesh()
            .boundary_faces()
            .zip(&faces)
            .filter(|(f, _)| f.tag == tag)
            .map(|(_, (i, _))| i)
            .sum())
    }

    /// Per boundary face, in `Mesh::boundary_faces` order: `(∫ J, area)` in
    /// scaled units; zero on non-electrode faces.
    pub fn face_currents(&self, state: &BlockState) -> Result<Vec<(f64, f64)>, AssemblyError> {
        self.check(state)?;
        let space = &*self.space;
        let mesh = space.mesh();
        let dim = space.dim();
        let nd = space.dofs_per_element();
        let faces: Vec<_> = mesh.boundary_faces().collect();
        let parts = par::map_range(faces.len(), |i| -> Result<(f64, f64), AssemblyError> {
            let f = faces[i];
            if !f.tag.is_electrode() || self.problem.kinetics.is_none() {
                return Ok((0.0, 0.0));
            }
            let e = f.element;
            let lf = f.local_face;
            let g = mesh.geometry(e);
            let ax = lf / 2;
            let detf: f64 = (0..dim).filter(|&t| t != ax).map(|t| g.size[t]).product();
            let ft = space.face_tab(lf);
            let pe = &state.field(0)[e * nd..(e + 1) * nd];
            let mut s = 0.0;
            for q in 0..ft.n_points() {
                let ve = ft.values_at(q);
                let x = physical(&g, &ft.points[q], dim);
                let c_ret = self.retained_at(state, e, ve);
                let phi: f64 = pe.iter().zip(ve).map(|(c, v)| c * v).sum();
                s += ft.weights[q] * detf * self.current_at(f.tag, x, &c_ret, phi)?.0;
            }
            Ok((s, detf))
        });
        parts.into_iter().collect()
    }
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn sign(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Value and physical gradient of a local expansion.
#[inline]
fn eval(c: &[f64], vals: &[f64], grads: &[[f64; 3]]) -> (f64, [f64; 3]) {
    let mut v = 0.0;
    let mut g = [0.0; 3];
    for ((ci, vi), gi) in c.iter().zip(vals).zip(grads) {
        v += ci * vi;
        g[0] += ci * gi[0];
        g[1] += ci * gi[1];
        g[2] += ci * gi[2];
    }
    (v, g)
}

/// Value and normal derivative of a local expansion at a face point.
#[inline]
fn eval_n(c: &[f64], vals: &[f64], dn: &[f64]) -> (f64, f64) {
    let mut v = 0.0;
    let mut d = 0.0;
    for ((ci, vi), di) in c.iter().zip(vals).zip(dn) {
        v += ci * vi;
        d += ci * di;
    }
    (v, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    #[test]
    fn penalty_law() {
        assert_eq!(penalty(4.0, 1, 0.5).unwrap(), 32.0);
        assert_eq!(penalty(4.0, 1, 0.25).unwrap(), 2.0 * penalty(4.0, 1, 0.5).unwrap());
        assert!((penalty(4.0, 2, 0.3).unwrap() / penalty(4.0, 1, 0.3).unwrap() - 2.25).abs() < 1e-15);
        assert!(penalty(4.0, 1, 0.0).is_err());
        assert!(penalty(0.0, 1, 1.0).is_err());
    }

    #[test]
    fn pattern_row_lengths() {
        let mesh = Arc::new(Mesh::unit_box(2, &[3, 2]).unwrap());
        let space = FeSpace::new(mesh, 1).unwrap();
        let pat = dg_pattern(&space);
        // corner element: itself + 2 neighbours, 4 dofs each
        assert_eq!(pat.row(0).len(), 12);
        // middle bottom element: itself + 3 neighbours
        assert_eq!(pat.row(4).len(), 16);
        assert_eq!(pat.nrows(), 24);
    }

    #[test]
    fn missing_boundary_data_rejected() {
        let mesh = Arc::new(Mesh::unit_box(2, &[2, 2]).unwrap());
        let space = Arc::new(FeSpace::new(mesh, 1).unwrap());
        let mut pr = Problem::mms(&MmsCase::new());
        pr.dirichlet = None;
        let err = Assembler::new(space, Arc::new(pr), DgParams::default()).err().unwrap();
        assert!(matches!(err, AssemblyError::MissingBoundaryData(BoundaryTag::Exterior)));
    }

    #[test]
    fn recover_two_species() {
        let mesh = Arc::new(Mesh::unit_box(2, &[2, 2]).unwrap());
        let space = Arc::new(FeSpace::new(mesh, 1).unwrap());
        let asm = Assembler::new(space, Arc::new(Problem::mms(&MmsCase::new())), DgParams::default()).unwrap();
        let mut s = asm.zero_state();
        for (i, v) in s.field_mut(1).iter_mut().enumerate() {
            *v = 1.0 + 0.1 * i as f64;
        }
        assert_eq!(asm.recover_eliminated(&s), s.field(1).to_vec());
    }
}
