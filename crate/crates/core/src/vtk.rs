//! Legacy ASCII VTK output of DG fields and boundary data, plus a reader for
//! the files written here.
//!
//! Every element is written as its own `(p+1)^dim` nodal lattice split into
//! `p^dim` linear cells, so discontinuities are preserved and point values
//! are exactly the nodal coefficients.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::fespace::FeSpace;
use crate::mesh::Mesh;

#[derive(Debug, Error)]
pub enum VtkError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("field `{name}` has {got} values, expected {expected}")]
    FieldLength { name: String, expected: usize, got: usize },
    #[error("malformed VTK file: {0}")]
    Parse(String),
}

const VTK_LINE: u8 = 3;
const VTK_QUAD: u8 = 9;
const VTK_HEXAHEDRON: u8 = 12;

/// Tensor corner index → VTK corner order.
const QUAD_ORDER: [usize; 4] = [0, 1, 3, 2];
const HEX_ORDER: [usize; 8] = [0, 1, 3, 2, 4, 5, 7, 6];

fn check(name: &str, expected: usize, got: usize) -> Result<(), VtkError> {
    if expected != got {
        return Err(VtkError::FieldLength {
            name: name.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}

/// Writes DG fields (one coefficient vector per name) with point coordinates
/// multiplied by `length_scale`. `cell_fields` hold one value per element.
pub fn write_fields<W: Write>(
    mut w: W,
    space: &FeSpace,
    length_scale: f64,
    fields: &[(&str, &[f64])],
    cell_fields: &[(&str, &[f64])],
) -> Result<(), VtkError> {
    let mesh = space.mesh();
    let dim = space.dim();
    let p = space.order();
    let nd = space.dofs_per_element();
    let ne = mesh.n_elements();
    for (n, f) in fields {
        check(n, space.n_dofs(), f.len())?;
    }
    for (n, f) in cell_fields {
        check(n, ne, f.len())?;
    }
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "dg fields p={p}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", ne * nd)?;
    let basis = space.basis();
    for e in 0..ne {
        let g = mesh.geometry(e);
        for i in 0..nd {
            let x = g.map(&basis.node(i));
            let z = if dim == 3 { x[2] } else { 0.0 };
            writeln!(w, "{:.10e} {:.10e} {:.10e}", x[0] * length_scale, x[1] * length_scale, z * length_scale)?;
        }
    }
    let sub = p.pow(dim as u32);
    let corners = 1 << dim;
    writeln!(w, "CELLS {} {}", ne * sub, ne * sub * (corners + 1))?;
    let n1 = p + 1;
    for e in 0..ne {
        let base = e * nd;
        for s in 0..sub {
            let (si, sj, sk) = (s % p, (s / p) % p, s / (p * p));
            write!(w, "{corners}")?;
            let order: &[usize] = if dim == 3 { &HEX_ORDER } else { &QUAD_ORDER };
            for &c in order {
                let (di, dj, dk) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                let node = (si + di) + n1 * ((sj + dj) + n1 * (sk + dk));
                write!(w, " {}", base + node)?;
            }
            writeln!(w)?;
        }
    }
    writeln!(w, "CELL_TYPES {}", ne * sub)?;
    let ct = if dim == 3 { VTK_HEXAHEDRON } else { VTK_QUAD };
    for _ in 0..ne * sub {
        writeln!(w, "{ct}")?;
    }
    if !fields.is_empty() {
        writeln!(w, "POINT_DATA {}", ne * nd)?;
        for (n, f) in fields {
            writeln!(w, "SCALARS {n} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in f.iter() {
                writeln!(w, "{v:.10e}")?;
            }
        }
    }
    writeln!(w, "CELL_DATA {}", ne * sub)?;
    writeln!(w, "SCALARS element int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for e in 0..ne {
        for _ in 0..sub {
            writeln!(w, "{e}")?;
        }
    }
    for (n, f) in cell_fields {
        writeln!(w, "SCALARS {n} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in f.iter() {
            for _ in 0..sub {
                writeln!(w, "{v:.10e}")?;
            }
        }
    }
    Ok(())
}

/// Writes the boundary faces as cells with the integer tag code and optional
/// per-face data (indexed like `Mesh::boundary_faces`).
pub fn write_boundary<W: Write>(mut w: W, mesh: &Mesh, length_scale: f64, face_fields: &[(&str, &[f64])]) -> Result<(), VtkError> {
    let dim = mesh.dim();
    let nb = mesh.n_boundary_faces();
    for (n, f) in face_fields {
        check(n, nb, f.len())?;
    }
    let corners = 1usize << (dim - 1);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "boundary faces")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", nb * corners)?;
    for f in mesh.boundary_faces() {
        let g = mesh.geometry(f.element);
        let ax = f.local_face / 2;
        let tang: Vec<usize> = (0..dim).filter(|&a| a != ax).collect();
        for c in 0..corners {
            let c = if dim == 3 { QUAD_ORDER[c] } else { c };
            let mut xi = [0.0; 3];
            xi[ax] = (f.local_face % 2) as f64;
            for (b, &a) in tang.iter().enumerate() {
                xi[a] = ((c >> b) & 1) as f64;
            }
            let x = g.map(&xi);
            let z = if dim == 3 { x[2] } else { 0.0 };
            writeln!(w, "{:.10e} {:.10e} {:.10e}", x[0] * length_scale, x[1] * length_scale, z * length_scale)?;
        }
    }
    writeln!(w, "CELLS {} {}", nb, nb * (corners + 1))?;
    for i in 0..nb {
        write!(w, "{corners}")?;
        for c in 0..corners {
            write!(w, " {}", i * corners + c)?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {nb}")?;
    let ct = if dim == 3 { VTK_QUAD } else { VTK_LINE };
    for _ in 0..nb {
        writeln!(w, "{ct}")?;
    }
    writeln!(w, "CELL_DATA {nb}")?;
    writeln!(w, "SCALARS tag int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for f in mesh.boundary_faces() {
        writeln!(w, "{}", f.tag.code())?;
    }
    for (n, f) in face_fields {
        writeln!(w, "SCALARS {n} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in f.iter() {
            writeln!(w, "{v:.10e}")?;
        }
    }
    Ok(())
}

/// Contents of a legacy unstructured-grid file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub point_data: Vec<(String, Vec<f64>)>,
    pub cell_data: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn point_field(&self, name: &str) -> Option<&[f64]> {
        self.point_data.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn cell_field(&self, name: &str) -> Option<&[f64]> {
        self.cell_data.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Reads ASCII unstructured grids with scalar point and cell data.
pub fn read<R: BufRead>(r: R) -> Result<VtkData, VtkError> {
    let mut toks = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i < 2 {
            continue;
        }
        toks.extend(line.split_whitespace().map(str::to_string));
    }
    let mut it = toks.into_iter();
    let bad = |m: &str| VtkError::Parse(m.to_string());
    let next = |it: &mut std::vec::IntoIter<String>| it.next().ok_or_else(|| bad("unexpected end of file"));
    fn num<T: std::str::FromStr>(s: String) -> Result<T, VtkError> {
        s.parse().map_err(|_| VtkError::Parse(format!("bad number `{s}`")))
    }
    let mut d = VtkData::default();
    let mut section = None;
    while let Some(t) = it.next() {
        match t.as_str() {
            "ASCII" | "DATASET" | "UNSTRUCTURED_GRID" => {}
            "POINTS" => {
                let n: usize = num(next(&mut it)?)?;
                next(&mut it)?;
                for _ in 0..n {
                    let mut p = [0.0; 3];
                    for v in p.iter_mut() {
                        *v = num(next(&mut it)?)?;
                    }
                    d.points.push(p);
                }
            }
            "CELLS" => {
                let n: usize = num(next(&mut it)?)?;
                next(&mut it)?;
                for _ in 0..n {
                    let k: usize = num(next(&mut it)?)?;
                    let c = (0..k).map(|_| num(next(&mut it)?)).collect::<Result<_, _>>()?;
                    d.cells.push(c);
                }
            }
            "CELL_TYPES" => {
                let n: usize = num(next(&mut it)?)?;
                for _ in 0..n {
                    d.cell_types.push(num(next(&mut it)?)?);
                }
            }
            "POINT_DATA" => {
                next(&mut it)?;
                section = Some(true);
            }
            "CELL_DATA" => {
                next(&mut it)?;
                section = Some(false);
            }
            "SCALARS" => {
                let name = next(&mut it)?;
                next(&mut it)?;
                // optional component count, then LOOKUP_TABLE <name>
                let mut t = next(&mut it)?;
                if t != "LOOKUP_TABLE" {
                    t = next(&mut it)?;
                }
                if t != "LOOKUP_TABLE" {
                    return Err(bad("expected LOOKUP_TABLE"));
                }
                next(&mut it)?;
                let (n, target) = match section {
                    Some(true) => (d.points.len(), &mut d.point_data),
                    Some(false) => (d.cells.len(), &mut d.cell_data),
                    None => return Err(bad("SCALARS outside a data section")),
                };
                let v = (0..n).map(|_| num(next(&mut it)?)).collect::<Result<_, _>>()?;
                target.push((name, v));
            }
            other => return Err(VtkError::Parse(format!("unexpected token `{other}`"))),
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use std::sync::Arc;

    #[test]
    fn round_trip_p2_3d() {
        let mesh = Arc::new(Mesh::unit_box(3, &[2, 1, 2]).unwrap());
        let space = FeSpace::new(mesh, 2).unwrap();
        let f = space.interpolate(|x| (3.0 * x[0]).sin() + x[1] * x[2]);
        let cell: Vec<f64> = (0..4).map(|e| e as f64 * 0.5).collect();
        let mut buf = Vec::new();
        write_fields(&mut buf, &space, 1.0, &[("f", &f)], &[("c", &cell)]).unwrap();
        let d = read(&buf[..]).unwrap();
        assert_eq!(d.points.len(), 4 * 27);
        assert_eq!(d.cells.len(), 4 * 8);
        assert!(d.cell_types.iter().all(|&t| t == VTK_HEXAHEDRON));
        for (a, b) in d.point_field("f").unwrap().iter().zip(&f) {
            assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()));
        }
        // point values are nodal values of the field
        for (x, v) in d.points.iter().zip(d.point_field("f").unwrap()) {
            let exact = (3.0 * x[0]).sin() + x[1] * x[2];
            assert!((exact - v).abs() < 1e-8);
        }
        assert_eq!(d.cell_field("c").unwrap()[8], 0.5);
    }

    #[test]
    fn quad_cells_are_counterclockwise() {
        let mesh = Arc::new(Mesh::unit_box(2, &[1, 1]).unwrap());
        let space = FeSpace::new(mesh, 1).unwrap();
        let mut buf = Vec::new();
        write_fields(&mut buf, &space, 2.0, &[], &[]).unwrap();
        let d = read(&buf[..]).unwrap();
        let c = &d.cells[0];
        let pts: Vec<[f64; 3]> = c.iter().map(|&i| d.points[i]).collect();
        assert_eq!(pts, vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 2.0, 0.0], [0.0, 2.0, 0.0]]);
    }

    #[test]
    fn boundary_tags_written() {
        let mesh = Mesh::unit_box(3, &[2, 2, 2]).unwrap();
        let nb = mesh.n_boundary_faces();
        let vals: Vec<f64> = (0..nb).map(|i| i as f64).collect();
        let mut buf = Vec::new();
        write_boundary(&mut buf, &mesh, 1.0, &[("j", &vals)]).unwrap();
        let d = read(&buf[..]).unwrap();
        assert_eq!(d.cells.len(), 24);
        assert_eq!(d.cell_field("j").unwrap(), vals.as_slice());
        let codes: Vec<f64> = mesh.boundary_faces().map(|f| f.tag.code() as f64).collect();
        assert_eq!(d.cell_field("tag").unwrap(), codes.as_slice());
    }

    #[test]
    fn wrong_length_rejected() {
        let mesh = Arc::new(Mesh::unit_box(2, &[2, 2]).unwrap());
        let space = FeSpace::new(mesh, 1).unwrap();
        let err = write_fields(Vec::new(), &space, 1.0, &[("f", &[1.0][..])], &[]).unwrap_err();
        assert!(matches!(err, VtkError::FieldLength { .. }));
    }
}
