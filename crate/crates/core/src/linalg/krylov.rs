//! Conjugate gradients and (flexible) restarted GMRES.

use super::{axpy, dot, norm2, residual, LinalgError, LinearOperator, Preconditioner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    Cg,
    Gmres,
    Fgmres,
}

impl std::str::FromStr for KrylovMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cg" => Ok(KrylovMethod::Cg),
            "gmres" => Ok(KrylovMethod::Gmres),
            "fgmres" => Ok(KrylovMethod::Fgmres),
            _ => Err(format!("unknown Krylov method `{s}` (expected cg, gmres or fgmres)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    pub method: KrylovMethod,
    /// Relative tolerance on ‖b − Ax‖ / ‖b‖.
    pub rtol: f64,
    pub atol: f64,
    pub max_iters: usize,
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            method: KrylovMethod::Gmres,
            rtol: 1e-5,
            atol: 1e-50,
            max_iters: 10_000,
            restart: 30,
        }
    }
}

impl KrylovConfig {
    pub fn new(method: KrylovMethod, rtol: f64) -> Self {
        KrylovConfig {
            method,
            rtol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovResult {
    pub iterations: usize,
    pub converged: bool,
    /// Recomputed ‖b − Ax‖ of the returned iterate.
    pub residual_norm: f64,
    pub rhs_norm: f64,
    /// Residual estimate after every iteration (index 0 is the initial residual).
    pub history: Vec<f64>,
}

impl KrylovResult {
    pub fn relative_residual(&self) -> f64 {
        if self.rhs_norm > 0.0 {
            self.residual_norm / self.rhs_norm
        } else {
            self.residual_norm
        }
    }
}

/// Solves `A x = b` starting from the contents of `x`.
pub fn solve<A, M>(a: &A, m: &M, b: &[f64], x: &mut [f64], cfg: &KrylovConfig) -> Result<KrylovResult, LinalgError>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    let n = a.nrows();
    if b.len() != n || x.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: if b.len() != n { b.len() } else { x.len() },
        });
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovResult {
            iterations: 0,
            converged: true,
            residual_norm: 0.0,
            rhs_norm: 0.0,
            history: vec![0.0],
        });
    }
    let target = (cfg.rtol * bnorm).max(cfg.atol);
    let mut out = match cfg.method {
        KrylovMethod::Cg => cg(a, m, b, x, target, cfg.max_iters)?,
        KrylovMethod::Gmres => gmres(a, m, b, x, target, cfg.max_iters, cfg.restart.max(1), false)?,
        KrylovMethod::Fgmres => gmres(a, m, b, x, target, cfg.max_iters, cfg.restart.max(1), true)?,
    };
    let mut r = vec![0.0; n];
    residual(a, x, b, &mut r);
    out.residual_norm = norm2(&r);
    out.rhs_norm = bnorm;
    Ok(out)
}

fn cg<A, M>(a: &A, m: &M, b: &[f64], x: &mut [f64], target: f64, max_iters: usize) -> Result<KrylovResult, LinalgError>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    let n = b.len();
    let mut r = vec![0.0; n];
    residual(a, x, b, &mut r);
    let mut rnorm = norm2(&r);
    let mut history = vec![rnorm];
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut it = 0;
    if rnorm <= target {
        return Ok(done(it, true, history));
    }
    m.apply(&r, &mut z)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    while it < max_iters {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(LinalgError::NotFinite { iteration: it });
        }
        if pap <= 0.0 {
            return Err(LinalgError::Indefinite { iteration: it, pap });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        rnorm = norm2(&r);
        history.push(rnorm);
        if !rnorm.is_finite() {
            return Err(LinalgError::NotFinite { iteration: it });
        }
        if rnorm <= target {
            return Ok(done(it, true, history));
        }
        m.apply(&r, &mut z)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (p, z) in p.iter_mut().zip(&z) {
            *p = z + beta * *p;
        }
    }
    Ok(done(it, false, history))
}

fn done(iterations: usize, converged: bool, history: Vec<f64>) -> KrylovResult {
    KrylovResult {
        iterations,
        converged,
        residual_norm: f64::NAN,
        rhs_norm: f64::NAN,
        history,
    }
}

#[allow(clippy::too_many_arguments)]
fn gmres<A, M>(
    a: &A,
    m: &M,
    b: &[f64],
    x: &mut [f64],
    target: f64,
    max_iters: usize,
    restart: usize,
    flexible: bool,
) -> Result<KrylovResult, LinalgError>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut zt = vec![0.0; n];
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    let mut zs: Vec<Vec<f64>> = Vec::new();
    let mut h = vec![vec![0.0; restart]; restart + 1];
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; restart + 1];
    let mut history = Vec::new();
    let mut it = 0;
    loop {
        residual(a, x, b, &mut r);
        let beta = norm2(&r);
        if history.is_empty() {
            history.push(beta);
        }
        if !beta.is_finite() {
            return Err(LinalgError::NotFinite { iteration: it });
        }
        if beta <= target {
            return Ok(done(it, true, history));
        }
        if it >= max_iters {
            return Ok(done(it, false, history));
        }
        v.clear();
        zs.clear();
        v.push(r.iter().map(|ri| ri / beta).collect());
        g.iter_mut().for_each(|gi| *gi = 0.0);
        g[0] = beta;
        let mut k = 0;
        let mut est = beta;
        while k < restart && it < max_iters {
            m.apply(&v[k], &mut zt)?;
            a.apply(&zt, &mut w);
            if flexible {
                zs.push(zt.clone());
            }
            for i in 0..=k {
                let hij = dot(&w, &v[i]);
                h[i][k] = hij;
                axpy(-hij, &v[i], &mut w);
            }
            let hnext = norm2(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(hnext);
            if denom == 0.0 {
                return Err(LinalgError::Breakdown("zero Hessenberg column".into()));
            }
            cs[k] = h[k][k] / denom;
            sn[k] = hnext / denom;
            h[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            est = g[k + 1].abs();
            it += 1;
            k += 1;
            history.push(est);
            if !est.is_finite() {
                return Err(LinalgError::NotFinite { iteration: it });
            }
            if est <= target || hnext <= 1e-14 * denom {
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        if flexible {
            for (yi, zi) in y.iter().zip(&zs) {
                axpy(*yi, zi, x);
            }
        } else {
            let mut u = vec![0.0; n];
            for (yi, vi) in y.iter().zip(&v) {
                axpy(*yi, vi, &mut u);
            }
            m.apply(&u, &mut zt)?;
            axpy(1.0, &zt, x);
        }
        if est > target && it >= max_iters {
            return Ok(done(it, false, history));
        }
    }
}
