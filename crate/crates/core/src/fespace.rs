//! Discontinuous tensor-product Lagrange spaces on box meshes.

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{ElementGeometry, Mesh};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeError {
    #[error("polynomial order must be at least 1, got {0}")]
    BadOrder(usize),
    #[error("quadrature needs at least one point per axis")]
    BadQuadrature,
    #[error("block state has {got} entries, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

/// Gauss–Legendre points and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // root of P_n on [-1, 1] by Newton from the Chebyshev-like guess
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        if d != 0.0 {
            dp = d;
        }
        x[n - 1 - i] = 0.5 * (t + 1.0);
        w[n - 1 - i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

fn legendre(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Tensor-product quadrature on the reference cell `[0,1]^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Tensor Gauss–Legendre rule with `q` points per axis. `dim = 0` yields the
/// single-point rule used on the faces of 1D cells.
pub fn gauss_rule(q: usize, dim: usize) -> Result<QuadRule, FeError> {
    if q == 0 {
        return Err(FeError::BadQuadrature);
    }
    let (x, w) = gauss_legendre(q);
    let n = q.pow(dim as u32);
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for k in 0..n {
        let mut pt = [0.0; 3];
        let mut wt = 1.0;
        let mut r = k;
        for p in pt.iter_mut().take(dim) {
            *p = x[r % q];
            wt *= w[r % q];
            r /= q;
        }
        points.push(pt);
        weights.push(wt);
    }
    Ok(QuadRule { dim, points, weights })
}

/// Values and reference gradients of all basis functions at a point set.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub n_basis: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// `values[q * n_basis + i] = φ_i(x_q)`
    pub values: Vec<f64>,
    /// `grads[q * n_basis + i]` = reference gradient of φ_i at x_q
    pub grads: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_basis..(q + 1) * self.n_basis]
    }

    #[inline]
    pub fn grads_at(&self, q: usize) -> &[[f64; 3]] {
        &self.grads[q * self.n_basis..(q + 1) * self.n_basis]
    }
}

/// Q^p Lagrange basis on `[0,1]^dim` with equispaced nodes.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    p: usize,
    dim: usize,
    nodes_1d: Vec<f64>,
}

impl ReferenceBasis {
    pub fn new(p: usize, dim: usize) -> Result<Self, FeError> {
        if p == 0 {
            return Err(FeError::BadOrder(p));
        }
        let nodes_1d = (0..=p).map(|i| i as f64 / p as f64).collect();
        Ok(ReferenceBasis { p, dim, nodes_1d })
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_1d(&self) -> &[f64] {
        &self.nodes_1d
    }

    pub fn n_basis(&self) -> usize {
        (self.p + 1).pow(self.dim as u32)
    }

    /// Per-axis node indices of tensor basis function `i`.
    #[inline]
    pub fn multi_index(&self, i: usize) -> [usize; 3] {
        let n = self.p + 1;
        [i % n, (i / n) % n, i / (n * n)]
    }

    /// Reference coordinates of nodal point `i`.
    pub fn node(&self, i: usize) -> [f64; 3] {
        let m = self.multi_index(i);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.nodes_1d[m[a]];
        }
        x
    }

    fn eval_1d(&self, x: f64, vals: &mut [f64], ders: &mut [f64]) {
        let n = &self.nodes_1d;
        for i in 0..=self.p {
            let mut v = 1.0;
            let mut d = 0.0;
            for j in 0..=self.p {
                if j == i {
                    continue;
                }
                let s = 1.0 / (n[i] - n[j]);
                d = d * (x - n[j]) * s + v * s;
                v *= (x - n[j]) * s;
            }
            vals[i] = v;
            ders[i] = d;
        }
    }

    /// Values and reference gradients of every basis function at `x`.
    pub fn eval(&self, x: &[f64; 3], values: &mut [f64], grads: &mut [[f64; 3]]) {
        let n = self.p + 1;
        let mut v1 = [[0.0; 8]; 3];
        let mut d1 = [[0.0; 8]; 3];
        for a in 0..self.dim {
            self.eval_1d(x[a], &mut v1[a][..n], &mut d1[a][..n]);
        }
        for i in 0..self.n_basis() {
            let m = self.multi_index(i);
            let mut val = 1.0;
            let mut g = [0.0; 3];
            for a in 0..self.dim {
                val *= v1[a][m[a]];
            }
            for (d, gd) in g.iter_mut().enumerate().take(self.dim) {
                let mut t = 1.0;
                for a in 0..self.dim {
                    t *= if a == d { d1[a][m[a]] } else { v1[a][m[a]] };
                }
                *gd = t;
            }
            values[i] = val;
            grads[i] = g;
        }
    }

    /// Tabulates values and gradients at the given points.
    pub fn tabulate(&self, points: &[[f64; 3]], weights: &[f64]) -> Tabulation {
        let nb = self.n_basis();
        let mut values = vec![0.0; points.len() * nb];
        let mut grads = vec![[0.0; 3]; points.len() * nb];
        for (q, x) in points.iter().enumerate() {
            self.eval(
                x,
                &mut values[q * nb..(q + 1) * nb],
                &mut grads[q * nb..(q + 1) * nb],
            );
        }
        Tabulation {
            n_basis: nb,
            points: points.to_vec(),
            weights: weights.to_vec(),
            values,
            grads,
        }
    }
}

/// Values and reference gradients of the order-`p` basis at `points`.
pub fn tabulate_basis(p: usize, dim: usize, points: &[[f64; 3]]) -> Result<Tabulation, FeError> {
    let basis = ReferenceBasis::new(p, dim)?;
    Ok(basis.tabulate(points, &vec![0.0; points.len()]))
}

/// Reference points of a face rule lifted onto local face `lf`. Tangential
/// coordinates follow the face rule with the lower tangential axis fastest,
/// so both elements sharing a face see the same physical point sequence.
pub fn face_points(dim: usize, lf: usize, rule: &QuadRule) -> Vec<[f64; 3]> {
    let axis = lf / 2;
    let tangential: Vec<usize> = (0..dim).filter(|&a| a != axis).collect();
    rule.points
        .iter()
        .map(|p| {
            let mut x = [0.0; 3];
            x[axis] = (lf % 2) as f64;
            for (k, &t) in tangential.iter().enumerate() {
                x[t] = p[k];
            }
            x
        })
        .collect()
}

/// DG space of order `p` on a mesh, with tabulations for the volume rule and
/// each local face.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    basis: ReferenceBasis,
    quad_points: usize,
    volume: Tabulation,
    faces: Vec<Tabulation>,
}

impl FeSpace {
    /// Space with the default `p + 2` Gauss points per axis.
    pub fn new(mesh: Arc<Mesh>, p: usize) -> Result<Self, FeError> {
        Self::with_quadrature(mesh, p, p + 2)
    }

    pub fn with_quadrature(mesh: Arc<Mesh>, p: usize, q: usize) -> Result<Self, FeError> {
        let dim = mesh.dim();
        let basis = ReferenceBasis::new(p, dim)?;
        let vrule = gauss_rule(q, dim)?;
        let frule = gauss_rule(q, dim - 1)?;
        let volume = basis.tabulate(&vrule.points, &vrule.weights);
        let faces = (0..2 * dim)
            .map(|lf| basis.tabulate(&face_points(dim, lf, &frule), &frule.weights))
            .collect();
        Ok(FeSpace {
            mesh,
            basis,
            quad_points: q,
            volume,
            faces,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn basis(&self) -> &ReferenceBasis {
        &self.basis
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points
    }

    pub fn dofs_per_element(&self) -> usize {
        self.basis.n_basis()
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_elements() * self.dofs_per_element()
    }

    pub fn element_dofs(&self, e: usize) -> std::ops::Range<usize> {
        let nd = self.dofs_per_element();
        e * nd..(e + 1) * nd
    }

    pub fn volume_tab(&self) -> &Tabulation {
        &self.volume
    }

    pub fn face_tab(&self, lf: usize) -> &Tabulation {
        &self.faces[lf]
    }

    /// Nodal interpolant of `f`, element by element.
    pub fn interpolate<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let nd = self.dofs_per_element();
        let mut out = vec![0.0; self.n_dofs()];
        par::for_each_chunk_mut(&mut out, nd, |e, chunk| {
            let g = self.mesh.geometry(e);
            for (i, c) in chunk.iter_mut().enumerate() {
                *c = f(physical(&g, &self.basis.node(i), self.dim()));
            }
        });
        out
    }

    /// Value of the discrete field on element `e` at reference point `xi`.
    pub fn evaluate(&self, coeffs: &[f64], e: usize, xi: &[f64; 3]) -> f64 {
        let nd = self.dofs_per_element();
        let mut v = vec![0.0; nd];
        let mut g = vec![[0.0; 3]; nd];
        self.basis.eval(xi, &mut v, &mut g);
        coeffs[self.element_dofs(e)]
            .iter()
            .zip(&v)
            .map(|(c, b)| c * b)
            .sum()
    }

    /// `sqrt(Σ_K ∫_K (u_h − u)^2)` with the space's volume rule.
    pub fn l2_error<F>(&self, coeffs: &[f64], exact: F) -> f64
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let nd = self.dofs_per_element();
        let tab = &self.volume;
        let dim = self.dim();
        par::sum_range(self.mesh.n_elements(), |e| {
            let g = self.mesh.geometry(e);
            let det = g.volume(dim);
            let ce = &coeffs[e * nd..(e + 1) * nd];
            let mut s = 0.0;
            for q in 0..tab.n_points() {
                let uh: f64 = ce.iter().zip(tab.values_at(q)).map(|(c, b)| c * b).sum();
                let d = uh - exact(physical(&g, &tab.points[q], dim));
                s += tab.weights[q] * d * d;
            }
            s * det
        })
        .sqrt()
    }

    /// `∫_Ω u_h`.
    pub fn integral(&self, coeffs: &[f64]) -> f64 {
        let nd = self.dofs_per_element();
        let tab = &self.volume;
        let dim = self.dim();
        par::sum_range(self.mesh.n_elements(), |e| {
            let det = self.mesh.geometry(e).volume(dim);
            let ce = &coeffs[e * nd..(e + 1) * nd];
            (0..tab.n_points())
                .map(|q| tab.weights[q] * ce.iter().zip(tab.values_at(q)).map(|(c, b)| c * b).sum::<f64>())
                .sum::<f64>()
                * det
        })
    }
}

/// Physical point for reference coordinates, with unused axes zeroed.
#[inline]
pub fn physical(g: &ElementGeometry, xi: &[f64; 3], dim: usize) -> [f64; 3] {
    let mut x = g.map(xi);
    for v in x.iter_mut().skip(dim) {
        *v = 0.0;
    }
    x
}

/// Coefficients of `(Φ, c_1, …, c_{m−1})`, stored field-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    n_fields: usize,
    block_len: usize,
    data: Vec<f64>,
}

impl BlockState {
    pub fn zeros(n_fields: usize, block_len: usize) -> Self {
        BlockState {
            n_fields,
            block_len,
            data: vec![0.0; n_fields * block_len],
        }
    }

    pub fn from_vec(n_fields: usize, block_len: usize, data: Vec<f64>) -> Result<Self, FeError> {
        if data.len() != n_fields * block_len {
            return Err(FeError::SizeMismatch {
                expected: n_fields * block_len,
                got: data.len(),
            });
        }
        Ok(BlockState {
            n_fields,
            block_len,
            data,
        })
    }

    pub fn from_fields(fields: &[Vec<f64>]) -> Result<Self, FeError> {
        let block_len = fields.first().map_or(0, |f| f.len());
        let mut data = Vec::with_capacity(block_len * fields.len());
        for f in fields {
            if f.len() != block_len {
                return Err(FeError::SizeMismatch {
                    expected: block_len,
                    got: f.len(),
                });
            }
            data.extend_from_slice(f);
        }
        Ok(BlockState {
            n_fields: fields.len(),
            block_len,
            data,
        })
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn field(&self, k: usize) -> &[f64] {
        &self.data[k * self.block_len..(k + 1) * self.block_len]
    }

    pub fn field_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.block_len..(k + 1) * self.block_len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn gauss_single_point() {
        let r = gauss_rule(1, 1).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_abs_diff_eq!(r.points[0][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_two_points_integrate_cubic() {
        let r = gauss_rule(2, 1).unwrap();
        let s: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(3)).sum();
        assert_abs_diff_eq!(s, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn gauss_3d_weights() {
        let r = gauss_rule(3, 3).unwrap();
        assert_eq!(r.len(), 27);
        assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        assert!(gauss_rule(0, 2).is_err());
    }

    #[test]
    fn gauss_exactness() {
        for q in 1..=8 {
            let r = gauss_rule(q, 1).unwrap();
            for deg in 0..2 * q {
                let s: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(deg as i32)).sum();
                assert_abs_diff_eq!(s, 1.0 / (deg as f64 + 1.0), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn p1_corner_values() {
        let t = tabulate_basis(1, 2, &[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(t.values_at(0), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn p2_nodal_at_midpoint() {
        let t = tabulate_basis(2, 2, &[[0.5, 0.5, 0.0]]).unwrap();
        let v = t.values_at(0);
        for (i, &x) in v.iter().enumerate() {
            let expected = if i == 4 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(x, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn order_zero_rejected() {
        assert_eq!(ReferenceBasis::new(0, 3).unwrap_err(), FeError::BadOrder(0));
    }

    proptest! {
        #[test]
        fn partition_of_unity(p in 1usize..=3, x in 0.0f64..=1.0, y in 0.0f64..=1.0, z in 0.0f64..=1.0) {
            let t = tabulate_basis(p, 3, &[[x, y, z]]).unwrap();
            let s: f64 = t.values_at(0).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            for d in 0..3 {
                let g: f64 = t.grads_at(0).iter().map(|g| g[d]).sum();
                prop_assert!(g.abs() < 1e-10);
            }
        }

        #[test]
        fn gradients_match_finite_differences(p in 1usize..=3, x in 0.1f64..0.9, y in 0.1f64..0.9) {
            let b = ReferenceBasis::new(p, 2).unwrap();
            let nb = b.n_basis();
            let (mut v0, mut g0) = (vec![0.0; nb], vec![[0.0; 3]; nb]);
            let (mut vp, mut vm, mut gg) = (vec![0.0; nb], vec![0.0; nb], vec![[0.0; 3]; nb]);
            b.eval(&[x, y, 0.0], &mut v0, &mut g0);
            let h = 1e-6;
            for d in 0..2 {
                let mut xp = [x, y, 0.0];
                let mut xm = xp;
                xp[d] += h;
                xm[d] -= h;
                b.eval(&xp, &mut vp, &mut gg);
                b.eval(&xm, &mut vm, &mut gg);
                for i in 0..nb {
                    prop_assert!(((vp[i] - vm[i]) / (2.0 * h) - g0[i][d]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn space_sizes() {
        let mesh = Arc::new(Mesh::unit_box(3, &[2, 2, 2]).unwrap());
        let s = FeSpace::new(mesh, 2).unwrap();
        assert_eq!(s.dofs_per_element(), 27);
        assert_eq!(s.n_dofs(), 8 * 27);
        assert_eq!(s.element_dofs(3), 81..108);
        assert_eq!(s.volume_tab().n_points(), 64);
        assert_eq!(s.face_tab(5).n_points(), 16);
    }

    #[test]
    fn interpolate_constant() {
        let mesh = Arc::new(Mesh::unit_box(2, &[3, 2]).unwrap());
        let s = FeSpace::new(mesh, 3).unwrap();
        assert!(s.interpolate(|_| 3.0).iter().all(|&c| c == 3.0));
    }

    #[test]
    fn linear_functions_reproduced() {
        let mesh = Arc::new(Mesh::unit_box(3, &[2, 3, 2]).unwrap());
        for p in 1..=3 {
            let s = FeSpace::new(mesh.clone(), p).unwrap();
            let f = |x: [f64; 3]| 1.0 + 2.0 * x[0] - 0.5 * x[1] + 0.25 * x[2];
            let c = s.interpolate(f);
            assert!(s.l2_error(&c, f) <= 1e-12);
        }
    }

    #[test]
    fn qp_functions_reproduced() {
        let mesh = Arc::new(Mesh::unit_box(2, &[2, 2]).unwrap());
        let s = FeSpace::new(mesh, 2).unwrap();
        let f = |x: [f64; 3]| x[0] * x[0] * x[1] * x[1] - x[0] * x[1];
        let c = s.interpolate(f);
        assert!(s.l2_error(&c, f) <= 1e-12);
    }

    #[test]
    fn l2_error_analytic() {
        let mesh = Arc::new(Mesh::unit_box(3, &[2, 2, 2]).unwrap());
        let s = FeSpace::new(mesh, 1).unwrap();
        let zero = vec![0.0; s.n_dofs()];
        assert_abs_diff_eq!(s.l2_error(&zero, |_| 1.0), 1.0, epsilon = 1e-13);
        let mesh = Arc::new(Mesh::unit_box(2, &[3, 3]).unwrap());
        let s = FeSpace::new(mesh, 1).unwrap();
        let zero = vec![0.0; s.n_dofs()];
        assert_abs_diff_eq!(s.l2_error(&zero, |x| x[0]), 1.0 / 3f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn interpolation_error_rate_p1() {
        let f = |x: [f64; 3]| x[0].cos() + x[1].sin() + 3.0;
        let errs: Vec<f64> = [4usize, 8, 16, 32]
            .iter()
            .map(|&n| {
                let mesh = Arc::new(Mesh::unit_box(2, &[n, n]).unwrap());
                let s = FeSpace::new(mesh, 1).unwrap();
                s.l2_error(&s.interpolate(f), f)
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((rate - 2.0).abs() < 0.05, "rate {rate}");
        }
    }

    #[test]
    fn neighbor_face_points_coincide() {
        let mesh = Arc::new(
            Mesh::from_axes(
                vec![vec![0.0, 0.3, 1.0], vec![0.0, 0.6, 1.0], vec![0.0, 0.2, 1.0]],
                |_, _| crate::mesh::BoundaryTag::Exterior,
            )
            .unwrap(),
        );
        let s = FeSpace::new(mesh.clone(), 2).unwrap();
        for f in mesh.interior_faces() {
            let gm = mesh.geometry(f.minus);
            let gp = mesh.geometry(f.plus);
            let tm = s.face_tab(f.minus_local_face());
            let tp = s.face_tab(f.plus_local_face());
            for q in 0..tm.n_points() {
                let a = physical(&gm, &tm.points[q], 3);
                let b = physical(&gp, &tp.points[q], 3);
                for d in 0..3 {
                    assert_abs_diff_eq!(a[d], b[d], epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn l2_error_independent_of_element_order() {
        let f = |x: [f64; 3]| (3.0 * x[0]).sin() * x[1];
        let m1 = Arc::new(Mesh::unit_box(2, &[5, 3]).unwrap());
        let m2 = Arc::new(Mesh::unit_box(2, &[3, 5]).unwrap());
        let s1 = FeSpace::new(m1, 1).unwrap();
        let s2 = FeSpace::new(m2, 1).unwrap();
        let zero = vec![0.0; s1.n_dofs()];
        // transposed meshes with swapped function arguments give a permuted element order
        let e1 = s1.l2_error(&zero, f);
        let e2 = s2.l2_error(&zero, |x| f([x[1], x[0], 0.0]));
        assert_abs_diff_eq!(e1, e2, epsilon = 1e-14);
    }

    #[test]
    fn block_state_layout() {
        let mut b = BlockState::zeros(3, 4);
        b.field_mut(1)[2] = 5.0;
        assert_eq!(b.as_slice()[6], 5.0);
        assert!(BlockState::from_vec(2, 3, vec![0.0; 5]).is_err());
        let c = BlockState::from_fields(&[vec![1.0; 2], vec![2.0; 2]]).unwrap();
        assert_eq!(c.field(1), &[2.0, 2.0]);
    }
}
