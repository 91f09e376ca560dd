//! Lanczos iteration with full reorthogonalization for the leading
//! eigenpairs of a symmetric operator given only by its action.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eig::{eig_sym, DenseSymmetric};
use super::sparse::{axpy, dot, norm2};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Number of operator applications, symmetry probes included.
    pub applications: usize,
}

const SEED: u64 = 0x1a2c_05e5;
const RESIDUAL_TOL: f64 = 1e-6;

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = norm2(&v);
    v.into_iter().map(|x| x / nv).collect()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            axpy(-c, q, v);
        }
    }
}

/// Top-`k` eigenpairs of the symmetric operator `apply` on `ℝⁿ`.
///
/// Every Ritz pair returned satisfies `‖Hv − λv‖ ≤ 1e-6 |λ₁|`, unless the
/// full space was exhausted, in which case the decomposition is exact.
pub fn lanczos_lowrank(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    n: usize,
    k: usize,
) -> Result<LanczosResult> {
    if k == 0 || k > n {
        return Err(Error::contract(format!("requested {k} modes of an operator of dimension {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut applications = 0;

    // Symmetry probe.
    let x = random_unit(&mut rng, n);
    let y = random_unit(&mut rng, n);
    let mut hx = vec![0.0; n];
    let mut hy = vec![0.0; n];
    apply(&x, &mut hx);
    apply(&y, &mut hy);
    applications += 2;
    let (a, b) = (dot(&hx, &y), dot(&x, &hy));
    let scale = norm2(&hx).max(norm2(&hy));
    if (a - b).abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::contract(format!(
            "operator is not symmetric: <Hx,y> = {a:.6e}, <x,Hy> = {b:.6e}"
        )));
    }

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q = x;
    let mut w = vec![0.0; n];
    let mut op_norm = 0.0f64;
    loop {
        apply(&q, &mut w);
        applications += 1;
        op_norm = op_norm.max(norm2(&w));
        let alpha = dot(&q, &w);
        axpy(-alpha, &q, &mut w);
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            axpy(-beta, prev, &mut w);
        }
        basis.push(q);
        alphas.push(alpha);
        orthogonalize(&mut w, &basis);
        let j = basis.len();
        let beta = norm2(&w);
        let exhausted = j == n;
        let invariant = beta <= 1e-12 * op_norm.max(f64::MIN_POSITIVE);

        if j >= k && (exhausted || invariant || j % 2 == 0 || j == k) {
            let (vals, vecs) = tridiagonal_eig(&alphas, &betas)?;
            let lmax = vals[0].abs().max(op_norm * 1e-300);
            let converged = exhausted
                || (0..k).all(|i| (beta * vecs[i][j - 1]).abs() <= 0.1 * RESIDUAL_TOL * lmax);
            if converged {
                let values: Vec<f64> = vals[..k].to_vec();
                let vectors = vecs[..k]
                    .iter()
                    .map(|y| {
                        let mut v = vec![0.0; n];
                        for (c, qb) in y.iter().zip(&basis) {
                            axpy(*c, qb, &mut v);
                        }
                        v
                    })
                    .collect();
                return Ok(LanczosResult {
                    values,
                    vectors,
                    applications,
                });
            }
        }
        if exhausted {
            unreachable!("exhausted space always converges");
        }
        if invariant {
            // Restart in the orthogonal complement; T splits here.
            let mut fresh = random_unit(&mut rng, n);
            orthogonalize(&mut fresh, &basis);
            let nf = norm2(&fresh);
            if nf < 1e-8 {
                return Err(Error::NonConvergence {
                    solver: "Lanczos restart",
                    iterations: j,
                    residual: nf,
                    history: Vec::new(),
                });
            }
            fresh.iter_mut().for_each(|v| *v /= nf);
            betas.push(0.0);
            q = fresh;
        } else {
            betas.push(beta);
            q = w.iter().map(|v| v / beta).collect();
        }
    }
}

/// Eigen-decomposition of the symmetric tridiagonal matrix
/// `tridiag(betas, alphas, betas)`, descending.
fn tridiagonal_eig(alphas: &[f64], betas: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = alphas.len();
    let t = DenseSymmetric::from_fn(m, |i, j| {
        if i == j {
            alphas[i]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let e = eig_sym(&t)?;
    Ok((e.values, e.vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator_top_two() {
        let d = [5.0, 4.0, 3.0, 2.0, 1.0];
        let mut op = |x: &[f64], y: &mut [f64]| {
            for i in 0..5 {
                y[i] = d[i] * x[i];
            }
        };
        let r = lanczos_lowrank(&mut op, 5, 2).unwrap();
        assert!((r.values[0] - 5.0).abs() < 1e-10);
        assert!((r.values[1] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn rank_one_outer_product() {
        let v = [1.0, -2.0, 0.5, 3.0];
        let nv2: f64 = v.iter().map(|x| x * x).sum();
        let mut op = |x: &[f64], y: &mut [f64]| {
            let c: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
            for i in 0..4 {
                y[i] = c * v[i];
            }
        };
        let r = lanczos_lowrank(&mut op, 4, 1).unwrap();
        assert!((r.values[0] - nv2).abs() < 1e-10 * nv2);
        let nrm = nv2.sqrt();
        let cos: f64 = r.vectors[0].iter().zip(&v).map(|(a, b)| a * b / nrm).sum();
        assert!((cos.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_operator_gives_zero_spectrum() {
        let mut op = |_: &[f64], y: &mut [f64]| y.iter_mut().for_each(|v| *v = 0.0);
        let r = lanczos_lowrank(&mut op, 6, 3).unwrap();
        assert!(r.values.iter().all(|&l| l.abs() < 1e-14));
    }

    #[test]
    fn nonsymmetric_operator_rejected() {
        let mut op = |x: &[f64], y: &mut [f64]| {
            y[0] = x[0] + 3.0 * x[1];
            y[1] = x[1];
        };
        assert!(matches!(lanczos_lowrank(&mut op, 2, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn k_larger_than_n_rejected() {
        let mut op = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        assert!(lanczos_lowrank(&mut op, 2, 3).is_err());
    }
}
