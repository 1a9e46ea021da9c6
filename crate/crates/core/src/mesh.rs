//! Structured quadrilateral / hexahedral meshes.
//!
//! Every mesh is an axis-aligned tensor-product grid given by one sorted list
//! of node coordinates per axis. Elements are numbered lexicographically with
//! the x index running fastest, vertices likewise. Local faces of an element
//! are numbered `2 * axis + side`, where side 0 is the low-coordinate face.
//!
//! Interior faces are stored once with the normal pointing along `+axis`, from
//! the lower element (`minus`) to the upper one (`plus`). Boundary faces are
//! grouped by box side and carry exactly one [`BoundaryTag`].

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("element counts must be at least 1, got {0:?}")]
    BadCounts(Vec<usize>),
    #[error("mesh dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("axis {axis} nodes are not strictly increasing")]
    NonMonotoneAxis { axis: usize },
    #[error("invalid channel geometry: {0}")]
    BadChannel(String),
    #[error("cannot coarsen: element count {count} along axis {axis} is odd")]
    NotCoarsenable { axis: usize, count: usize },
    #[error("boundary tags of merged faces disagree on side {side}")]
    InconsistentTags { side: usize },
    #[error("velocity changes sign across boundary face {face}")]
    MixedInflow { face: usize },
    #[error("VTK output failed: {0}")]
    Io(String),
}

/// Classification of a boundary face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Inlet,
    Outlet,
    Wall,
    ElectrodeAnode,
    ElectrodeCathode,
    /// Dirichlet data supplied by an exact solution (manufactured problems).
    Exterior,
}

impl BoundaryTag {
    pub fn code(self) -> i32 {
        match self {
            BoundaryTag::Inlet => 1,
            BoundaryTag::Outlet => 2,
            BoundaryTag::Wall => 3,
            BoundaryTag::ElectrodeAnode => 4,
            BoundaryTag::ElectrodeCathode => 5,
            BoundaryTag::Exterior => 6,
        }
    }

    pub fn is_electrode(self) -> bool {
        matches!(self, BoundaryTag::ElectrodeAnode | BoundaryTag::ElectrodeCathode)
    }
}

/// Axis-aligned box occupied by one element. Unused axes (2D) have origin 0
/// and size 1 so that products over all three axes stay valid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub origin: [f64; 3],
    pub size: [f64; 3],
}

impl ElementGeometry {
    /// Maps reference coordinates in `[0,1]^dim` to physical coordinates.
    #[inline]
    pub fn map(&self, xi: &[f64; 3]) -> [f64; 3] {
        [
            self.origin[0] + self.size[0] * xi[0],
            self.origin[1] + self.size[1] * xi[1],
            self.origin[2] + self.size[2] * xi[2],
        ]
    }

    pub fn volume(&self, dim: usize) -> f64 {
        self.size[..dim].iter().product()
    }

    pub fn centroid(&self) -> [f64; 3] {
        self.map(&[0.5, 0.5, 0.5])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorFace {
    pub minus: usize,
    pub plus: usize,
    pub axis: usize,
}

impl InteriorFace {
    pub fn minus_local_face(&self) -> usize {
        2 * self.axis + 1
    }
    pub fn plus_local_face(&self) -> usize {
        2 * self.axis
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub element: usize,
    pub local_face: usize,
    pub tag: BoundaryTag,
}

/// What lies across a local face of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceLink {
    Interior {
        neighbor: usize,
        neighbor_face: usize,
    },
    Boundary {
        index: usize,
        tag: BoundaryTag,
    },
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    axes: Vec<Vec<f64>>,
    counts: [usize; 3],
    side_offsets: [usize; 7],
    boundary_tags: Vec<BoundaryTag>,
    interior_faces: Vec<InteriorFace>,
}

impl Mesh {
    /// Builds a tensor-product mesh from per-axis node coordinates. `tagger`
    /// receives the box side (`2 * axis + side`) and the face centroid.
    pub fn from_axes<T>(axes: Vec<Vec<f64>>, tagger: T) -> Result<Self, MeshError>
    where
        T: Fn(usize, [f64; 3]) -> BoundaryTag,
    {
        let dim = axes.len();
        if dim != 2 && dim != 3 {
            return Err(MeshError::BadDimension(dim));
        }
        let mut counts = [1usize; 3];
        for (a, nodes) in axes.iter().enumerate() {
            if nodes.len() < 2 {
                return Err(MeshError::BadCounts(axes.iter().map(|v| v.len().saturating_sub(1)).collect()));
            }
            if nodes.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(MeshError::NonMonotoneAxis { axis: a });
            }
            counts[a] = nodes.len() - 1;
        }
        let mut mesh = Mesh {
            dim,
            axes,
            counts,
            side_offsets: [0; 7],
            boundary_tags: Vec::new(),
            interior_faces: Vec::new(),
        };
        mesh.build_faces();
        let tags = (0..mesh.n_boundary_faces())
            .map(|i| {
                let f = mesh.boundary_face_unchecked(i);
                tagger(f.local_face, mesh.face_centroid(f.element, f.local_face))
            })
            .collect();
        mesh.boundary_tags = tags;
        Ok(mesh)
    }

    fn build_faces(&mut self) {
        let mut off = [0usize; 7];
        for s in 0..2 * self.dim {
            off[s + 1] = off[s] + self.n_elements() / self.counts[s / 2];
        }
        for s in 2 * self.dim..6 {
            off[s + 1] = off[s];
        }
        self.side_offsets = off;

        let mut faces = Vec::new();
        for e in 0..self.n_elements() {
            let idx = self.grid_index(e);
            for a in 0..self.dim {
                if idx[a] + 1 < self.counts[a] {
                    faces.push(InteriorFace {
                        minus: e,
                        plus: e + self.stride(a),
                        axis: a,
                    });
                }
            }
        }
        self.interior_faces = faces;
    }

    /// Uniform Cartesian mesh of the unit box with every boundary face tagged
    /// [`BoundaryTag::Exterior`].
    pub fn unit_box(dim: usize, counts: &[usize]) -> Result<Self, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::BadDimension(dim));
        }
        if counts.len() != dim || counts.iter().any(|&n| n == 0) {
            return Err(MeshError::BadCounts(counts.to_vec()));
        }
        let axes = counts
            .iter()
            .map(|&n| (0..=n).map(|i| i as f64 / n as f64).collect())
            .collect();
        Self::from_axes(axes, |_, _| BoundaryTag::Exterior)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub fn axis_nodes(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn n_elements(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn n_local_faces(&self) -> usize {
        2 * self.dim
    }

    pub fn n_vertices(&self) -> usize {
        (0..self.dim).map(|a| self.counts[a] + 1).product()
    }

    /// Distance between consecutive element indices along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.counts[0],
            _ => self.counts[0] * self.counts[1],
        }
    }

    #[inline]
    pub fn grid_index(&self, e: usize) -> [usize; 3] {
        let i = e % self.counts[0];
        let j = (e / self.counts[0]) % self.counts[1];
        let k = e / (self.counts[0] * self.counts[1]);
        [i, j, k]
    }

    #[inline]
    pub fn element_at(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.counts[0] * (idx[1] + self.counts[1] * idx[2])
    }

    #[inline]
    pub fn geometry(&self, e: usize) -> ElementGeometry {
        let idx = self.grid_index(e);
        let mut origin = [0.0; 3];
        let mut size = [1.0; 3];
        for a in 0..self.dim {
            origin[a] = self.axes[a][idx[a]];
            size[a] = self.axes[a][idx[a] + 1] - self.axes[a][idx[a]];
        }
        ElementGeometry { origin, size }
    }

    /// Per-axis extents of an element.
    pub fn element_size(&self, e: usize) -> [f64; 3] {
        self.geometry(e).size
    }

    pub fn vertex(&self, v: usize) -> [f64; 3] {
        let nx = self.counts[0] + 1;
        let ny = self.counts[1] + 1;
        let idx = [v % nx, (v / nx) % ny, v / (nx * ny)];
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.axes[a][idx[a]];
        }
        x
    }

    /// Vertex indices of an element in tensor-product corner ordering.
    pub fn element_vertices(&self, e: usize) -> Vec<usize> {
        let idx = self.grid_index(e);
        let nx = self.counts[0] + 1;
        let ny = self.counts[1] + 1;
        let corners = 1 << self.dim;
        (0..corners)
            .map(|c| {
                let i = idx[0] + (c & 1);
                let j = idx[1] + ((c >> 1) & 1);
                let k = if self.dim == 3 { idx[2] + ((c >> 2) & 1) } else { 0 };
                i + nx * (j + ny * k)
            })
            .collect()
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn n_boundary_faces(&self) -> usize {
        self.side_offsets[2 * self.dim]
    }

    fn boundary_face_unchecked(&self, i: usize) -> BoundaryFace {
        let side = (0..2 * self.dim)
            .find(|&s| i < self.side_offsets[s + 1])
            .expect("boundary face index out of range");
        let local = i - self.side_offsets[side];
        let axis = side / 2;
        let (t0, t1) = tangential_axes(axis);
        let mut idx = [0usize; 3];
        idx[axis] = if side % 2 == 0 { 0 } else { self.counts[axis] - 1 };
        idx[t0] = local % self.counts[t0];
        idx[t1] = local / self.counts[t0];
        BoundaryFace {
            element: self.element_at(idx),
            local_face: side,
            tag: self.boundary_tags.get(i).copied().unwrap_or(BoundaryTag::Exterior),
        }
    }

    pub fn boundary_face(&self, i: usize) -> BoundaryFace {
        self.boundary_face_unchecked(i)
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = BoundaryFace> + '_ {
        (0..self.n_boundary_faces()).map(move |i| self.boundary_face_unchecked(i))
    }

    pub fn boundary_tags(&self) -> &[BoundaryTag] {
        &self.boundary_tags
    }

    /// Index of the boundary face at local face `lf` of `e`, if any.
    #[inline]
    pub fn boundary_index(&self, e: usize, lf: usize) -> Option<usize> {
        let axis = lf / 2;
        let idx = self.grid_index(e);
        let on_boundary = if lf % 2 == 0 {
            idx[axis] == 0
        } else {
            idx[axis] + 1 == self.counts[axis]
        };
        on_boundary.then(|| {
            let (t0, t1) = tangential_axes(axis);
            self.side_offsets[lf] + idx[t0] + self.counts[t0] * idx[t1]
        })
    }

    /// Resolves local face `lf` of element `e`.
    #[inline]
    pub fn link(&self, e: usize, lf: usize) -> FaceLink {
        if let Some(index) = self.boundary_index(e, lf) {
            FaceLink::Boundary {
                index,
                tag: self.boundary_tags[index],
            }
        } else if lf % 2 == 0 {
            FaceLink::Interior {
                neighbor: e - self.stride(lf / 2),
                neighbor_face: lf + 1,
            }
        } else {
            FaceLink::Interior {
                neighbor: e + self.stride(lf / 2),
                neighbor_face: lf - 1,
            }
        }
    }

    /// Face-adjacent elements of `e`.
    pub fn neighbors(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        (0..2 * self.dim).filter_map(move |lf| match self.link(e, lf) {
            FaceLink::Interior { neighbor, .. } => Some(neighbor),
            FaceLink::Boundary { .. } => None,
        })
    }

    pub fn face_centroid(&self, e: usize, lf: usize) -> [f64; 3] {
        let g = self.geometry(e);
        let mut xi = [0.5; 3];
        xi[lf / 2] = (lf % 2) as f64;
        let mut x = g.map(&xi);
        for v in x.iter_mut().skip(self.dim) {
            *v = 0.0;
        }
        x
    }

    /// Outward unit normal of local face `lf`.
    pub fn face_normal(&self, lf: usize) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[lf / 2] = if lf % 2 == 0 { -1.0 } else { 1.0 };
        n
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.geometry(e).volume(self.dim))
            .sum()
    }

    /// Uniform refinement: every element is split into `2^dim` children.
    /// Returns the fine mesh and the child → parent map.
    pub fn refine(&self) -> (Mesh, Vec<usize>) {
        let axes: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|nodes| {
                let mut fine = Vec::with_capacity(2 * nodes.len() - 1);
                for w in nodes.windows(2) {
                    fine.push(w[0]);
                    fine.push(0.5 * (w[0] + w[1]));
                }
                fine.push(*nodes.last().unwrap());
                fine
            })
            .collect();
        let mut fine = Mesh {
            dim: self.dim,
            counts: [
                2 * self.counts[0],
                if self.dim >= 2 { 2 * self.counts[1] } else { 1 },
                if self.dim == 3 { 2 * self.counts[2] } else { 1 },
            ],
            axes,
            side_offsets: [0; 7],
            boundary_tags: Vec::new(),
            interior_faces: Vec::new(),
        };
        fine.build_faces();
        let parents = fine.parent_map_to_half();
        fine.boundary_tags = (0..fine.n_boundary_faces())
            .map(|i| {
                let f = fine.boundary_face_unchecked(i);
                match self.link(parents[f.element], f.local_face) {
                    FaceLink::Boundary { tag, .. } => tag,
                    FaceLink::Interior { .. } => unreachable!("child boundary face inside parent"),
                }
            })
            .collect();
        (fine, parents)
    }

    fn parent_map_to_half(&self) -> Vec<usize> {
        let half = [
            self.counts[0] / 2,
            (self.counts[1] / 2).max(1),
            (self.counts[2] / 2).max(1),
        ];
        (0..self.n_elements())
            .map(|e| {
                let idx = self.grid_index(e);
                let p = [idx[0] / 2, idx[1] / 2, idx[2] / 2];
                p[0] + half[0] * (p[1] + half[1] * p[2])
            })
            .collect()
    }

    /// Merges 2^dim sibling elements into one by dropping every other grid
    /// line. Returns the coarse mesh and the fine → coarse element map.
    pub fn coarsen(&self) -> Result<(Mesh, Vec<usize>), MeshError> {
        for a in 0..self.dim {
            if self.counts[a] % 2 != 0 {
                return Err(MeshError::NotCoarsenable {
                    axis: a,
                    count: self.counts[a],
                });
            }
        }
        let axes: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|nodes| nodes.iter().step_by(2).copied().collect())
            .collect();
        let mut coarse = Mesh {
            dim: self.dim,
            counts: [
                self.counts[0] / 2,
                if self.dim >= 2 { self.counts[1] / 2 } else { 1 },
                if self.dim == 3 { self.counts[2] / 2 } else { 1 },
            ],
            axes,
            side_offsets: [0; 7],
            boundary_tags: Vec::new(),
            interior_faces: Vec::new(),
        };
        coarse.build_faces();
        let parents = self.parent_map_to_half();
        let mut tags: Vec<Option<BoundaryTag>> = vec![None; coarse.n_boundary_faces()];
        for (i, f) in self.boundary_faces().enumerate() {
            let Some(ci) = coarse.boundary_index(parents[f.element], f.local_face) else {
                continue;
            };
            let t = self.boundary_tags[i];
            match tags[ci] {
                None => tags[ci] = Some(t),
                Some(prev) if prev != t => {
                    return Err(MeshError::InconsistentTags { side: f.local_face })
                }
                _ => {}
            }
        }
        coarse.boundary_tags = tags.into_iter().map(|t| t.unwrap()).collect();
        Ok((coarse, parents))
    }

    /// Retags `Exterior` faces from the sign of `u·n`: negative → Inlet,
    /// positive → Outlet, zero → Wall. The sign is sampled at the centroid and
    /// corners of each face; strictly mixed signs are rejected.
    pub fn classify_boundary<V>(&self, velocity: V) -> Result<Mesh, MeshError>
    where
        V: Fn([f64; 3]) -> [f64; 3],
    {
        let mut out = self.clone();
        for (i, f) in self.boundary_faces().enumerate() {
            if f.tag != BoundaryTag::Exterior {
                continue;
            }
            let n = self.face_normal(f.local_face);
            let g = self.geometry(f.element);
            let axis = f.local_face / 2;
            let (t0, t1) = tangential_axes(axis);
            let mut samples = vec![[0.5, 0.5, 0.5]];
            for c in 0..4 {
                let mut xi = [0.5; 3];
                xi[t0] = (c & 1) as f64;
                if self.dim == 3 {
                    xi[t1] = ((c >> 1) & 1) as f64;
                } else if c > 1 {
                    continue;
                }
                samples.push(xi);
            }
            let mut pos = false;
            let mut neg = false;
            let mut centre = 0.0;
            for (s, mut xi) in samples.into_iter().enumerate() {
                xi[axis] = (f.local_face % 2) as f64;
                let mut x = g.map(&xi);
                for v in x.iter_mut().skip(self.dim) {
                    *v = 0.0;
                }
                let u = velocity(x);
                let un: f64 = (0..3).map(|d| u[d] * n[d]).sum();
                let scale = u.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                let un = if un.abs() <= 1e-14 * scale { 0.0 } else { un };
                pos |= un > 0.0;
                neg |= un < 0.0;
                if s == 0 {
                    centre = un;
                }
            }
            if pos && neg {
                return Err(MeshError::MixedInflow { face: i });
            }
            out.boundary_tags[i] = if centre < 0.0 || (centre == 0.0 && neg) {
                BoundaryTag::Inlet
            } else if centre > 0.0 || pos {
                BoundaryTag::Outlet
            } else {
                BoundaryTag::Wall
            };
        }
        Ok(out)
    }

    /// Returns a copy with every boundary face retagged by `f(face, centroid)`.
    pub fn retag<T>(&self, f: T) -> Mesh
    where
        T: Fn(BoundaryFace, [f64; 3]) -> BoundaryTag,
    {
        let mut out = self.clone();
        for (i, face) in self.boundary_faces().enumerate() {
            out.boundary_tags[i] = f(face, self.face_centroid(face.element, face.local_face));
        }
        out
    }
}

#[inline]
fn tangential_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Geometry of the parallel-plate channel: inlet run, electrode pair, outlet
/// run, plate gap and channel width, with coarse element counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub inlet_length: f64,
    pub electrode_length: f64,
    pub outlet_length: f64,
    pub gap: f64,
    pub width: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Growth factor minus one between consecutive graded cells.
    pub grading_strength: f64,
}

impl ChannelSpec {
    /// The 64×16×8 parallel-plate reactor (lengths in metres).
    pub fn reference_reactor() -> Self {
        ChannelSpec {
            inlet_length: 0.05,
            electrode_length: 0.02,
            outlet_length: 0.05,
            gap: 0.01,
            width: 0.06,
            nx: 64,
            ny: 16,
            nz: 8,
            grading_strength: 0.1,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.inlet_length + self.electrode_length + self.outlet_length
    }

    /// Same geometry with every length divided by `length_scale`.
    pub fn scaled(&self, length_scale: f64) -> Self {
        ChannelSpec {
            inlet_length: self.inlet_length / length_scale,
            electrode_length: self.electrode_length / length_scale,
            outlet_length: self.outlet_length / length_scale,
            gap: self.gap / length_scale,
            width: self.width / length_scale,
            ..self.clone()
        }
    }

    /// Element counts of the inlet, electrode and outlet x-segments.
    pub fn segment_counts(&self) -> Result<(usize, usize, usize), MeshError> {
        if self.nx == 0 || self.nx % 8 != 0 {
            return Err(MeshError::BadChannel(format!(
                "nx = {} cannot be split into inlet/electrode/outlet segments (needs a multiple of 8)",
                self.nx
            )));
        }
        let ne = self.nx / 4;
        let na = (self.nx - ne) / 2;
        Ok((na, ne, self.nx - ne - na))
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let lengths = [
            self.inlet_length,
            self.electrode_length,
            self.outlet_length,
            self.gap,
            self.width,
        ];
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(MeshError::BadChannel("all lengths must be positive".into()));
        }
        if self.ny == 0 || self.nz == 0 {
            return Err(MeshError::BadChannel("ny and nz must be at least 1".into()));
        }
        if !(self.grading_strength >= 0.0) {
            return Err(MeshError::BadChannel("grading strength must be non-negative".into()));
        }
        self.segment_counts().map(|_| ())
    }
}

/// Nodes of `[a, b]` split into `n` cells whose widths grow geometrically by
/// `1 + strength` away from the flagged ends.
fn graded_nodes(a: f64, b: f64, n: usize, fine_at_a: bool, fine_at_b: bool, strength: f64) -> Vec<f64> {
    let rho = 1.0 + strength;
    let widths: Vec<f64> = (0..n)
        .map(|i| {
            let from_a = i;
            let from_b = n - 1 - i;
            let d = match (fine_at_a, fine_at_b) {
                (true, true) => from_a.min(from_b),
                (true, false) => from_a,
                (false, true) => from_b,
                (false, false) => 0,
            };
            rho.powi(d as i32)
        })
        .collect();
    let total: f64 = widths.iter().sum();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    nodes.push(a);
    for w in &widths[..n - 1] {
        x += w;
        nodes.push(a + (b - a) * x / total);
    }
    nodes.push(b);
    nodes
}

/// Hexahedral mesh of `[0, L_a+L+L_b] × [0, h] × [0, w]`, graded toward the
/// plates and toward the electrode interval, with electrode faces on `y = 0`
/// (cathode) and `y = h` (anode).
pub fn build_channel_mesh(spec: &ChannelSpec) -> Result<Mesh, MeshError> {
    spec.validate()?;
    let (na, ne, nb) = spec.segment_counts()?;
    let s = spec.grading_strength;
    let x0 = spec.inlet_length;
    let x1 = spec.inlet_length + spec.electrode_length;
    let xl = spec.total_length();
    let mut xs = graded_nodes(0.0, x0, na, false, true, s);
    xs.pop();
    let mut mid = graded_nodes(x0, x1, ne, false, false, s);
    mid.pop();
    xs.extend(mid);
    xs.extend(graded_nodes(x1, xl, nb, true, false, s));
    let ys = graded_nodes(0.0, spec.gap, spec.ny, true, true, s);
    let zs = graded_nodes(0.0, spec.width, spec.nz, false, false, 0.0);
    Mesh::from_axes(vec![xs, ys, zs], move |side, c| {
        let in_electrode = c[0] > x0 && c[0] < x1;
        match side {
            0 => BoundaryTag::Inlet,
            1 => BoundaryTag::Outlet,
            2 if in_electrode => BoundaryTag::ElectrodeCathode,
            3 if in_electrode => BoundaryTag::ElectrodeAnode,
            _ => BoundaryTag::Wall,
        }
    })
}

/// Nested meshes from coarse to fine with child → parent element maps.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<Arc<Mesh>>,
    parent_maps: Vec<Vec<usize>>,
}

impl MeshHierarchy {
    pub fn new(coarse: Mesh) -> Self {
        MeshHierarchy {
            levels: vec![Arc::new(coarse)],
            parent_maps: Vec::new(),
        }
    }

    /// Appends one uniformly refined level.
    pub fn refine_uniform(mut self) -> Self {
        let (fine, parents) = self.finest().refine();
        self.levels.push(Arc::new(fine));
        self.parent_maps.push(parents);
        self
    }

    /// Builds a hierarchy below `fine` by repeated coarsening. Stops after
    /// `max_levels` levels in total, when an axis count turns odd, or when
    /// the next coarse mesh would have fewer than `min_elements` elements.
    pub fn by_coarsening(fine: Arc<Mesh>, max_levels: usize, min_elements: usize) -> Self {
        let mut meshes = vec![fine];
        let mut maps = Vec::new();
        while meshes.len() < max_levels.max(1) {
            let cur = meshes.last().unwrap();
            if cur.n_elements() >> cur.dim() < min_elements.max(1) {
                break;
            }
            match cur.coarsen() {
                Ok((coarse, parents)) => {
                    maps.push(parents);
                    meshes.push(Arc::new(coarse));
                }
                Err(_) => break,
            }
        }
        meshes.reverse();
        maps.reverse();
        MeshHierarchy {
            levels: meshes,
            parent_maps: maps,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &Arc<Mesh> {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Arc<Mesh>] {
        &self.levels
    }

    pub fn finest(&self) -> &Arc<Mesh> {
        self.levels.last().unwrap()
    }

    pub fn coarsest(&self) -> &Arc<Mesh> {
        &self.levels[0]
    }

    /// Child → parent map from level `l + 1` to level `l`.
    pub fn parent_map(&self, l: usize) -> &[usize] {
        &self.parent_maps[l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    /// Brute-force face matching: every element face keyed by its sorted
    /// vertex ids; keys seen twice are interior faces.
    fn brute_force_face_count(mesh: &Mesh) -> (usize, usize) {
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        for e in 0..mesh.n_elements() {
            let verts = mesh.element_vertices(e);
            for lf in 0..mesh.n_local_faces() {
                let axis = lf / 2;
                let side = lf % 2;
                let mut key: Vec<usize> = (0..verts.len())
                    .filter(|c| (c >> axis) & 1 == side)
                    .map(|c| verts[c])
                    .collect();
                key.sort_unstable();
                *seen.entry(key).or_default() += 1;
            }
        }
        let interior = seen.values().filter(|&&c| c == 2).count();
        let boundary = seen.values().filter(|&&c| c == 1).count();
        (interior, boundary)
    }

    #[test]
    fn unit_box_counts() {
        let m = Mesh::unit_box(3, &[4, 4, 4]).unwrap();
        assert_eq!(m.n_elements(), 64);
        let m = Mesh::unit_box(2, &[1, 1]).unwrap();
        assert_eq!(m.n_elements(), 1);
        assert_eq!(m.n_boundary_faces(), 4);
        assert!(m.interior_faces().is_empty());
        assert!(m.boundary_faces().all(|f| f.tag == BoundaryTag::Exterior));
    }

    #[test]
    fn unit_box_interior_faces_match_brute_force() {
        let m = Mesh::unit_box(3, &[2, 3, 4]).unwrap();
        assert_eq!(m.n_elements(), 24);
        let (interior, boundary) = brute_force_face_count(&m);
        assert_eq!(interior, 46);
        assert_eq!(m.interior_faces().len(), interior);
        assert_eq!(m.n_boundary_faces(), boundary);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(matches!(Mesh::unit_box(3, &[0, 1, 1]), Err(MeshError::BadCounts(_))));
        assert!(Mesh::unit_box(4, &[1, 1, 1, 1]).is_err());
    }

    #[test]
    fn face_pairing_is_an_involution() {
        let m = Mesh::unit_box(3, &[3, 2, 2]).unwrap();
        for e in 0..m.n_elements() {
            for lf in 0..6 {
                if let FaceLink::Interior { neighbor, neighbor_face } = m.link(e, lf) {
                    assert_eq!(
                        m.link(neighbor, neighbor_face),
                        FaceLink::Interior { neighbor: e, neighbor_face: lf }
                    );
                    let a = m.face_centroid(e, lf);
                    let b = m.face_centroid(neighbor, neighbor_face);
                    for d in 0..3 {
                        assert!((a[d] - b[d]).abs() < 1e-12);
                    }
                }
            }
        }
        for f in m.interior_faces() {
            assert_eq!(
                m.link(f.minus, f.minus_local_face()),
                FaceLink::Interior { neighbor: f.plus, neighbor_face: f.plus_local_face() }
            );
        }
    }

    #[test]
    fn boundary_faces_partition_the_boundary() {
        let m = build_channel_mesh(&ChannelSpec { nx: 16, ny: 4, nz: 2, ..ChannelSpec::reference_reactor() }).unwrap();
        let mut seen = std::collections::HashSet::new();
        for f in m.boundary_faces() {
            assert!(seen.insert((f.element, f.local_face)));
            assert!(matches!(m.link(f.element, f.local_face), FaceLink::Boundary { .. }));
        }
        let expected: usize = 2 * (16 * 4 + 16 * 2 + 4 * 2);
        assert_eq!(seen.len(), expected);
    }

    #[test]
    fn reference_channel_mesh() {
        let spec = ChannelSpec::reference_reactor();
        let m = build_channel_mesh(&spec).unwrap();
        assert_eq!(m.n_elements(), 8192);
        let box_volume = spec.total_length() * spec.gap * spec.width;
        assert!((m.total_volume() - box_volume).abs() <= 1e-12 * box_volume);
        let count = |t| m.boundary_faces().filter(|f| f.tag == t).count();
        let (_, ne, _) = spec.segment_counts().unwrap();
        assert_eq!(count(BoundaryTag::ElectrodeCathode), ne * spec.nz);
        assert_eq!(count(BoundaryTag::ElectrodeAnode), ne * spec.nz);
        assert_eq!(count(BoundaryTag::Inlet), spec.ny * spec.nz);
        assert_eq!(count(BoundaryTag::Outlet), spec.ny * spec.nz);
        // electrode edges coincide with grid lines
        let xs = m.axis_nodes(0);
        assert!(xs.iter().any(|&x| (x - 0.05).abs() < 1e-15));
        assert!(xs.iter().any(|&x| (x - 0.07).abs() < 1e-15));
    }

    #[test]
    fn grading_concentrates_cells_near_plates_and_electrodes() {
        let m = build_channel_mesh(&ChannelSpec::reference_reactor()).unwrap();
        let ys = m.axis_nodes(1);
        let first = ys[1] - ys[0];
        let middle = ys[8] - ys[7];
        assert!(first < middle);
        let xs = m.axis_nodes(0);
        let inlet_first = xs[1] - xs[0];
        let inlet_last = xs[24] - xs[23];
        assert!(inlet_last < inlet_first);
    }

    #[test]
    fn zero_grading_gives_uniform_spacing_per_segment() {
        let spec = ChannelSpec { grading_strength: 0.0, ..ChannelSpec::reference_reactor() };
        let m = build_channel_mesh(&spec).unwrap();
        let ratio = |nodes: &[f64]| {
            let w: Vec<f64> = nodes.windows(2).map(|p| p[1] - p[0]).collect();
            w.iter().cloned().fold(0.0, f64::max) / w.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        assert!((ratio(m.axis_nodes(1)) - 1.0).abs() < 1e-12);
        assert!((ratio(m.axis_nodes(2)) - 1.0).abs() < 1e-12);
        let xs = m.axis_nodes(0);
        let (na, ne, _) = spec.segment_counts().unwrap();
        assert!((ratio(&xs[..=na]) - 1.0).abs() < 1e-12);
        assert!((ratio(&xs[na..=na + ne]) - 1.0).abs() < 1e-12);
        assert!((ratio(&xs[na + ne..]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unresolvable_electrode_rejected() {
        let spec = ChannelSpec { nx: 12, ..ChannelSpec::reference_reactor() };
        assert!(matches!(build_channel_mesh(&spec), Err(MeshError::BadChannel(_))));
    }

    #[test]
    fn refinement_multiplies_elements_and_keeps_volume() {
        let h = MeshHierarchy::new(Mesh::unit_box(3, &[4, 4, 4]).unwrap()).refine_uniform();
        assert_eq!(h.finest().n_elements(), 512);
        let m = build_channel_mesh(&ChannelSpec { nx: 16, ny: 4, nz: 2, ..ChannelSpec::reference_reactor() }).unwrap();
        let v0 = m.total_volume();
        let (fine, parents) = m.refine();
        assert!((fine.total_volume() - v0).abs() <= 1e-12 * v0);
        let mut child_volume = vec![0.0; m.n_elements()];
        for (c, &p) in parents.iter().enumerate() {
            child_volume[p] += fine.geometry(c).volume(3);
        }
        for (p, v) in child_volume.iter().enumerate() {
            let pv = m.geometry(p).volume(3);
            assert!((v - pv).abs() <= 1e-12 * pv);
        }
    }

    #[test]
    fn single_quad_splits_into_quadrants() {
        let h = MeshHierarchy::new(Mesh::unit_box(2, &[1, 1]).unwrap()).refine_uniform();
        let fine = h.finest();
        assert_eq!(fine.n_elements(), 4);
        let mut origins: Vec<[f64; 3]> = (0..4).map(|e| fine.geometry(e).origin).collect();
        origins.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(origins[0][..2], [0.0, 0.0]);
        for e in 0..4 {
            assert_eq!(fine.geometry(e).size[..2], [0.5, 0.5]);
            assert_eq!(h.parent_map(0)[e], 0);
        }
    }

    #[test]
    fn tags_are_inherited_by_refinement() {
        let m = build_channel_mesh(&ChannelSpec { nx: 8, ny: 2, nz: 2, ..ChannelSpec::reference_reactor() }).unwrap();
        let (fine, parents) = m.refine();
        for f in fine.boundary_faces() {
            match m.link(parents[f.element], f.local_face) {
                FaceLink::Boundary { tag, .. } => assert_eq!(tag, f.tag),
                _ => panic!("child boundary face maps to interior parent face"),
            }
        }
    }

    #[test]
    fn three_refinements_of_reference_channel() {
        let mut h = MeshHierarchy::new(build_channel_mesh(&ChannelSpec::reference_reactor()).unwrap());
        for _ in 0..3 {
            h = h.refine_uniform();
        }
        assert_eq!(h.finest().n_elements(), 4_194_304);
    }

    #[test]
    fn coarsening_inverts_refinement() {
        let m = build_channel_mesh(&ChannelSpec { nx: 16, ny: 4, nz: 2, ..ChannelSpec::reference_reactor() }).unwrap();
        let (fine, p1) = m.refine();
        let (back, p2) = fine.coarsen().unwrap();
        assert_eq!(p1, p2);
        assert_eq!(back.boundary_tags(), m.boundary_tags());
        for a in 0..3 {
            assert_eq!(back.axis_nodes(a), m.axis_nodes(a));
        }
        let h = MeshHierarchy::by_coarsening(Arc::new(fine), 10, 1);
        // 32x8x4 -> 16x4x2 -> 8x2x1 stops (z odd)
        assert_eq!(h.n_levels(), 3);
        assert_eq!(h.coarsest().counts(), &[8, 2, 1]);
    }

    #[test]
    fn classify_by_velocity() {
        let m = Mesh::unit_box(3, &[2, 2, 2]).unwrap();
        let c = m.classify_boundary(|_| [1.0, 0.0, 0.0]).unwrap();
        let non_wall_sides: std::collections::HashSet<usize> = c
            .boundary_faces()
            .filter(|f| f.tag != BoundaryTag::Wall)
            .map(|f| f.local_face)
            .collect();
        assert_eq!(non_wall_sides.len(), 2);
        let z = m.classify_boundary(|_| [0.0; 3]).unwrap();
        assert!(z.boundary_faces().all(|f| f.tag == BoundaryTag::Wall));
        let p = m.classify_boundary(|x| [6.0 * x[1] * (1.0 - x[1]), 0.0, 0.0]).unwrap();
        for f in p.boundary_faces() {
            match f.local_face {
                0 => assert_eq!(f.tag, BoundaryTag::Inlet),
                1 => assert_eq!(f.tag, BoundaryTag::Outlet),
                _ => assert_eq!(f.tag, BoundaryTag::Wall),
            }
        }
        let err = m.classify_boundary(|x| [x[1] - 0.25, 0.0, 0.0]);
        assert!(matches!(err, Err(MeshError::MixedInflow { .. })));
    }
}
