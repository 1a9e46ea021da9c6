//! Matrix Market coordinate format (real, general).

use std::io::{BufRead, Write};

use super::{CsrMatrix, LinalgError};

pub fn write_matrix<W: Write>(a: &CsrMatrix, mut w: W) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for r in 0..a.nrows() {
        let (cols, vals) = a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
        }
    }
    Ok(())
}

pub fn read_matrix<R: BufRead>(r: R) -> Result<CsrMatrix, LinalgError> {
    let err = |m: &str| LinalgError::MatrixMarket(m.to_string());
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| err("empty input"))?
        .map_err(|e| err(&e.to_string()))?;
    let h: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(err("unsupported header"));
    }
    if h[3] != "real" && h[3] != "integer" {
        return Err(err("only real matrices are supported"));
    }
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        _ => return Err(err("unsupported symmetry")),
    };
    let mut size = None;
    let mut t = Vec::new();
    for line in lines {
        let line = line.map_err(|e| err(&e.to_string()))?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = s.split_whitespace().collect();
        if size.is_none() {
            if f.len() != 3 {
                return Err(err("bad size line"));
            }
            let p = |x: &str| x.parse::<usize>().map_err(|_| err("bad size line"));
            size = Some((p(f[0])?, p(f[1])?, p(f[2])?));
            continue;
        }
        if f.len() != 3 {
            return Err(err("bad entry line"));
        }
        let i: usize = f[0].parse().map_err(|_| err("bad row index"))?;
        let j: usize = f[1].parse().map_err(|_| err("bad column index"))?;
        let v: f64 = f[2].parse().map_err(|_| err("bad value"))?;
        if i == 0 || j == 0 {
            return Err(err("indices are 1-based"));
        }
        t.push((i - 1, j - 1, v));
        if symmetric && i != j {
            t.push((j - 1, i - 1, v));
        }
    }
    let (m, n, nnz) = size.ok_or_else(|| err("missing size line"))?;
    let stored = if symmetric { t.iter().filter(|e| e.0 >= e.1).count() } else { t.len() };
    if stored != nnz {
        return Err(err(&format!("expected {nnz} entries, found {stored}")));
    }
    CsrMatrix::from_triplets(m, n, &t)
}
