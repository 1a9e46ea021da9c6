//! Additive overlapping Schwarz with ILU(0) subdomain solves.

use std::sync::Arc;

use super::{CsrMatrix, Ilu0, LinalgError, Preconditioner};
use crate::mesh::Mesh;
use crate::par;

/// Recursive coordinate bisection of the mesh elements into `nsub` parts.
/// Each part is returned sorted.
pub fn rcb_partition(mesh: &Mesh, nsub: usize) -> Vec<Vec<usize>> {
    let centroids: Vec<[f64; 3]> = (0..mesh.n_elements())
        .map(|e| mesh.geometry(e).centroid())
        .collect();
    let mut out = Vec::with_capacity(nsub);
    let all: Vec<usize> = (0..mesh.n_elements()).collect();
    bisect(&centroids, mesh.dim(), all, nsub.clamp(1, mesh.n_elements().max(1)), &mut out);
    for p in out.iter_mut() {
        p.sort_unstable();
    }
    out
}

fn bisect(c: &[[f64; 3]], dim: usize, mut elems: Vec<usize>, nsub: usize, out: &mut Vec<Vec<usize>>) {
    if nsub <= 1 || elems.len() <= 1 {
        out.push(elems);
        return;
    }
    let extent = |a: usize| {
        let (lo, hi) = elems
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &e| (lo.min(c[e][a]), hi.max(c[e][a])));
        hi - lo
    };
    let axis = (0..dim)
        .max_by(|&a, &b| extent(a).partial_cmp(&extent(b)).unwrap().then(b.cmp(&a)))
        .unwrap_or(0);
    elems.sort_by(|&a, &b| c[a][axis].partial_cmp(&c[b][axis]).unwrap().then(a.cmp(&b)));
    let left_parts = nsub / 2;
    let split = elems.len() * left_parts / nsub;
    let right = elems.split_off(split);
    bisect(c, dim, elems, left_parts, out);
    bisect(c, dim, right, nsub - left_parts, out);
}

/// Overlapping subdomains expressed as sorted dof lists, plus the
/// subdomain owning each dof (the one it belonged to before overlap).
#[derive(Debug, Clone)]
pub struct AsmPartition {
    subdomains: Vec<Vec<usize>>,
    owner: Vec<usize>,
    n_dofs: usize,
}

impl AsmPartition {
    /// RCB partition extended by `overlap` layers of face neighbours. Element
    /// `e` owns dofs `e*nd .. (e+1)*nd`.
    pub fn from_mesh(mesh: &Mesh, nsub: usize, overlap: usize, nd: usize) -> Self {
        let parts = rcb_partition(mesh, nsub);
        let mut owner = vec![0; mesh.n_elements() * nd];
        for (s, part) in parts.iter().enumerate() {
            for &e in part {
                owner[e * nd..(e + 1) * nd].fill(s);
            }
        }
        let mut mark = vec![usize::MAX; mesh.n_elements()];
        let subdomains = parts
            .into_iter()
            .enumerate()
            .map(|(s, owned)| {
                let mut set = owned.clone();
                for &e in &set {
                    mark[e] = s;
                }
                let mut frontier = owned;
                for _ in 0..overlap {
                    let mut next = Vec::new();
                    for &e in &frontier {
                        for nb in mesh.neighbors(e) {
                            if mark[nb] != s {
                                mark[nb] = s;
                                next.push(nb);
                            }
                        }
                    }
                    set.extend_from_slice(&next);
                    frontier = next;
                }
                set.sort_unstable();
                set.iter().flat_map(|&e| e * nd..(e + 1) * nd).collect()
            })
            .collect();
        AsmPartition {
            subdomains,
            owner,
            n_dofs: mesh.n_elements() * nd,
        }
    }

    /// Explicit dof sets; a dof is owned by the first set listing it.
    pub fn from_dof_sets(n_dofs: usize, mut subdomains: Vec<Vec<usize>>) -> Result<Self, LinalgError> {
        let mut owner = vec![usize::MAX; n_dofs];
        for (i, s) in subdomains.iter_mut().enumerate() {
            s.sort_unstable();
            s.dedup();
            if s.last().is_some_and(|&d| d >= n_dofs) {
                return Err(LinalgError::DimensionMismatch { expected: n_dofs, got: s[s.len() - 1] + 1 });
            }
            for &d in s.iter() {
                if owner[d] == usize::MAX {
                    owner[d] = i;
                }
            }
        }
        if owner.contains(&usize::MAX) {
            return Err(LinalgError::Level { level: 0, msg: "subdomains do not cover every dof".into() });
        }
        Ok(AsmPartition { subdomains, owner, n_dofs })
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn subdomain(&self, i: usize) -> &[usize] {
        &self.subdomains[i]
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn owner(&self, dof: usize) -> usize {
        self.owner[dof]
    }
}

/// `z = Σ_i R_iᵀ (L_i U_i)⁻¹ R_i r`, where `L_i U_i` is the ILU(0) factor
/// of the subdomain block `R_i A R_iᵀ`. The restricted variant prolongs each
/// local solution only onto the dofs the subdomain owns.
#[derive(Debug, Clone)]
pub struct Asm {
    partition: Arc<AsmPartition>,
    local: Vec<Ilu0>,
    restricted: bool,
}

impl Asm {
    pub fn new(a: &CsrMatrix, partition: Arc<AsmPartition>) -> Result<Self, LinalgError> {
        if a.nrows() != partition.n_dofs() {
            return Err(LinalgError::DimensionMismatch { expected: partition.n_dofs(), got: a.nrows() });
        }
        let local = par::map_range(partition.n_subdomains(), |s| {
            let dofs = partition.subdomain(s);
            Ilu0::new(&a.submatrix(dofs)).map_err(|e| match e {
                LinalgError::ZeroPivot { row } => LinalgError::ZeroPivot { row: dofs[row] },
                other => other,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        Ok(Asm { partition, local, restricted: false })
    }

    pub fn restricted(a: &CsrMatrix, partition: Arc<AsmPartition>) -> Result<Self, LinalgError> {
        Ok(Asm { restricted: true, ..Asm::new(a, partition)? })
    }

    pub fn is_restricted(&self) -> bool {
        self.restricted
    }

    pub fn partition(&self) -> &AsmPartition {
        &self.partition
    }
}

impl Preconditioner for Asm {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        let p = &self.partition;
        let locals = par::map_range(p.n_subdomains(), |s| {
            let mut v: Vec<f64> = p.subdomain(s).iter().map(|&d| r[d]).collect();
            self.local[s].solve_in_place(&mut v);
            v
        });
        z.fill(0.0);
        for (s, v) in locals.iter().enumerate() {
            for (&d, x) in p.subdomain(s).iter().zip(v) {
                if !self.restricted || p.owner(d) == s {
                    z[d] += x;
                }
            }
        }
        Ok(())
    }
}
