//! Krylov solvers: (preconditioned) conjugate gradients, BiCGSTAB and GMRES.

use super::ilu::Ilu0;
use super::lu::DenseLu;
use super::sparse::{axpy, dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

/// Default relative residual tolerance for iterative solves.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Systems smaller than this are solved by dense LU in [`solve_general`].
pub const DENSE_FALLBACK_THRESHOLD: usize = 2000;

/// A square linear operator `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_unchecked(x, y);
    }
}

/// Adapts a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖r_k‖ / ‖b‖` for k = 0..=iterations.
    pub residuals: Vec<f64>,
}

/// Per-iteration view handed to a CG monitor.
pub struct CgIterate<'a> {
    pub iteration: usize,
    pub x: &'a [f64],
    pub residual: &'a [f64],
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients.
///
/// `precond` applies `z = M⁻¹ r`; `None` means the identity. Iteration
/// stops once `‖r‖ ≤ tol ‖b‖`. A non-positive `pᵀAp` aborts with
/// [`Error::Indefinite`]. The monitor, if given, sees every iterate
/// including the initial one.
pub fn pcg(
    op: &dyn LinearOperator,
    precond: Option<&dyn Fn(&[f64], &mut [f64])>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    mut monitor: Option<&mut dyn FnMut(&CgIterate<'_>)>,
) -> Result<CgOutcome> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let bnorm = norm2(b);
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if bnorm == 0.0 && x0.is_none() {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residuals: vec![0.0],
        });
    }
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut r = b.to_vec();
    let mut ax = vec![0.0; n];
    if x0.is_some() {
        op.apply(&x, &mut ax);
        axpy(-1.0, &ax, &mut r);
    }
    let mut z = vec![0.0; n];
    let apply_prec = |r: &[f64], z: &mut [f64]| match precond {
        Some(p) => p(r, z),
        None => z.copy_from_slice(r),
    };
    apply_prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r) / scale;
    let mut residuals = vec![res];
    if let Some(m) = monitor.as_deref_mut() {
        m(&CgIterate {
            iteration: 0,
            x: &x,
            residual: &r,
            relative_residual: res,
        });
    }
    let mut ap = vec![0.0; n];
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(Error::NonConvergence {
                solver: "conjugate gradient",
                iterations: it,
                residual: res,
                history: residuals,
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Indefinite {
                iteration: it,
                curvature: pap,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        res = norm2(&r) / scale;
        residuals.push(res);
        if let Some(m) = monitor.as_deref_mut() {
            m(&CgIterate {
                iteration: it,
                x: &x,
                residual: &r,
                relative_residual: res,
            });
        }
        if res <= tol {
            break;
        }
        apply_prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok(CgOutcome {
        x,
        iterations: it,
        residuals,
    })
}

/// Unpreconditioned CG on a sparse SPD matrix.
pub fn solve_cg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    Ok(solve_cg_report(a, b, tol, max_iter)?.x)
}

pub fn solve_cg_report(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    if !a.is_square() {
        return Err(Error::contract("CG requires a square matrix"));
    }
    pcg(a, None, b, None, tol, max_iter, None)
}

#[derive(Debug, Clone, Copy)]
pub struct GeneralSolveOptions {
    pub tol: f64,
    /// `None` means `10 n`.
    pub max_iter: Option<usize>,
    pub dense_threshold: usize,
}

impl Default for GeneralSolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            dense_threshold: DENSE_FALLBACK_THRESHOLD,
        }
    }
}

/// Solves a general nonsingular sparse system.
///
/// Below `dense_threshold` unknowns a dense LU is used; otherwise
/// ILU(0)-preconditioned BiCGSTAB.
pub fn solve_general(a: &CsrMatrix, b: &[f64], opts: GeneralSolveOptions) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::contract("solve_general requires a square matrix"));
    }
    if b.len() != a.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            found: b.len(),
        });
    }
    if a.n_rows() < opts.dense_threshold {
        return DenseLu::new(a)?.solve(b);
    }
    let ilu = Ilu0::new(a)?;
    let max_iter = opts.max_iter.unwrap_or(10 * a.n_rows());
    bicgstab(a, |r, z| ilu.apply(r, z), b, None, opts.tol, max_iter).map(|o| o.x)
}

/// Right-preconditioned BiCGSTAB.
pub fn bicgstab(
    op: &dyn LinearOperator,
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = op.dim();
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residuals: vec![0.0],
        });
    }
    let mut r = b.to_vec();
    let mut tmp = vec![0.0; n];
    if x0.is_some() {
        op.apply(&x, &mut tmp);
        axpy(-1.0, &tmp, &mut r);
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm2(&r) / bnorm;
    let mut residuals = vec![res];
    let breakdown = |it: usize, residuals: Vec<f64>, res: f64| Error::NonConvergence {
        solver: "BiCGSTAB (breakdown)",
        iterations: it,
        residual: res,
        history: residuals,
    };
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                residuals,
            });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            return Err(breakdown(it, residuals, res));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut p_hat);
        op.apply(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv.abs() < 1e-300 {
            return Err(breakdown(it, residuals, res));
        }
        alpha = rho / rv;
        // r becomes s
        axpy(-alpha, &v, &mut r);
        axpy(alpha, &p_hat, &mut x);
        let s_norm = norm2(&r) / bnorm;
        if s_norm <= tol {
            residuals.push(s_norm);
            return Ok(CgOutcome {
                x,
                iterations: it + 1,
                residuals,
            });
        }
        precond(&r, &mut s_hat);
        op.apply(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(breakdown(it, residuals, res));
        }
        omega = dot(&t, &r) / tt;
        axpy(omega, &s_hat, &mut x);
        axpy(-omega, &t, &mut r);
        res = norm2(&r) / bnorm;
        residuals.push(res);
        if omega.abs() < 1e-300 || !res.is_finite() {
            return Err(breakdown(it + 1, residuals, res));
        }
    }
    if res <= tol {
        return Ok(CgOutcome {
            x,
            iterations: max_iter,
            residuals,
        });
    }
    Err(Error::NonConvergence {
        solver: "BiCGSTAB",
        iterations: max_iter,
        residual: res,
        history: residuals,
    })
}

/// Restarted right-preconditioned GMRES(`restart`).
pub fn gmres(
    op: &dyn LinearOperator,
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = op.dim();
    let m = restart.max(1);
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { x, iterations: 0, residuals: vec![0.0] });
    }
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut residuals = Vec::new();
    let mut total = 0;
    loop {
        op.apply(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm2(&r);
        let res = beta / bnorm;
        if residuals.last() != Some(&res) {
            residuals.push(res);
        }
        if res <= tol {
            return Ok(CgOutcome { x, iterations: total, residuals });
        }
        if total >= max_iter || !res.is_finite() {
            return Err(Error::NonConvergence { solver: "GMRES", iterations: total, residual: res, history: residuals });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < max_iter {
            precond(&v[k], &mut z);
            let mut w = vec![0.0; n];
            op.apply(&z, &mut w);
            // modified Gram-Schmidt
            for (j, vj) in v.iter().enumerate() {
                let hj = dot(&w, vj);
                h[j][k] = hj;
                axpy(-hj, vj, &mut w);
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            (cs[k], sn[k]) = if d == 0.0 { (1.0, 0.0) } else { (h[k][k] / d, h[k + 1][k] / d) };
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            residuals.push(g[k].abs() / bnorm);
            if g[k].abs() / bnorm <= tol || hn == 0.0 {
                break;
            }
            w.iter_mut().for_each(|wi| *wi /= hn);
            v.push(w);
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut dx = vec![0.0; n];
        for (vi, yi) in v.iter().zip(&y) {
            axpy(*yi, vi, &mut dx);
        }
        precond(&dx, &mut z);
        axpy(1.0, &z, &mut x);
    }
}
