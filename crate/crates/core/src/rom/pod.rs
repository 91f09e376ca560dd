use crate::error::{Error, Result};
use crate::linalg::{dot, eig_sym, CsrMatrix, DenseSymmetric};

/// Block-diagonal application of a scalar matrix to each component of a
/// component-blocked vector.
pub fn apply_blocked(m: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    let n = m.n_rows();
    let mut y = vec![0.0; x.len()];
    for (xc, yc) in x.chunks(n).zip(y.chunks_mut(n)) {
        m.spmv_into(xc, yc).expect("component size matches the mass matrix");
    }
    y
}

pub fn inner_m(m: &CsrMatrix, a: &[f64], b: &[f64]) -> f64 {
    dot(&apply_blocked(m, a), b)
}

#[derive(Debug, Clone)]
pub struct PodResult {
    /// M-orthonormal modes.
    pub modes: Vec<Vec<f64>>,
    /// All Gram eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Retained fraction `Σ_{i≤r} λ_i / Σ λ_i`.
    pub energy: f64,
}

/// Method of snapshots in the inner product induced by `mass` (applied
/// per component).
///
/// Keeps the smallest `r` reaching `1 - energy_tol` of the energy, capped by
/// `r_max` and by the numerical rank (`λ_i > 1e-12 λ_1`).
pub fn pod_vectors(
    snapshots: &[Vec<f64>],
    mass: &CsrMatrix,
    energy_tol: f64,
    r_max: Option<usize>,
) -> Result<PodResult> {
    if snapshots.is_empty() {
        return Err(Error::Degenerate("empty snapshot set".into()));
    }
    let ms: Vec<Vec<f64>> = snapshots.iter().map(|s| apply_blocked(mass, s)).collect();
    let n = snapshots.len();
    let gram = DenseSymmetric::from_fn(n, |i, j| dot(&ms[i], &snapshots[j]));
    let eig = eig_sym(&gram)?;
    let lambda = eig.values.clone();
    let total: f64 = lambda.iter().map(|l| l.max(0.0)).sum();
    if !(lambda[0] > 0.0) || total == 0.0 {
        return Err(Error::Degenerate("all snapshots vanish".into()));
    }
    let rank = lambda.iter().take_while(|&&l| l > 1e-12 * lambda[0]).count();
    let mut r = rank;
    let mut acc = 0.0;
    for (i, l) in lambda.iter().enumerate().take(rank) {
        acc += l;
        if acc >= (1.0 - energy_tol) * total {
            r = i + 1;
            break;
        }
    }
    if let Some(cap) = r_max {
        r = r.min(cap.max(1));
    }
    let dim = snapshots[0].len();
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(r);
    for k in 0..r {
        let mut phi = vec![0.0; dim];
        let scale = 1.0 / lambda[k].sqrt();
        for (j, s) in snapshots.iter().enumerate() {
            let c = eig.vectors[k][j] * scale;
            phi.iter_mut().zip(s).for_each(|(p, v)| *p += c * v);
        }
        // Two Gram-Schmidt passes restore orthonormality lost to roundoff.
        for _ in 0..2 {
            let mphi = apply_blocked(mass, &phi);
            for q in &modes {
                let c = dot(&mphi, q);
                phi.iter_mut().zip(q).for_each(|(p, v)| *p -= c * v);
            }
            let nrm = inner_m(mass, &phi, &phi).sqrt();
            phi.iter_mut().for_each(|p| *p /= nrm);
        }
        modes.push(phi);
    }
    let energy = lambda[..r].iter().sum::<f64>() / total;
    Ok(PodResult { modes, eigenvalues: lambda, energy })
}

/// M-orthogonal projection coefficients `⟨s, φ_i⟩_M`.
pub fn project(mass: &CsrMatrix, modes: &[Vec<f64>], s: &[f64]) -> Vec<f64> {
    let ms = apply_blocked(mass, s);
    modes.iter().map(|q| dot(&ms, q)).collect()
}

/// `Σ_j ‖s_j − Π_r s_j‖²_M`.
pub fn projection_error(mass: &CsrMatrix, modes: &[Vec<f64>], snapshots: &[Vec<f64>]) -> f64 {
    snapshots
        .iter()
        .map(|s| {
            let a = project(mass, modes, s);
            let mut e = s.clone();
            for (c, q) in a.iter().zip(modes) {
                e.iter_mut().zip(q).for_each(|(x, v)| *x -= c * v);
            }
            inner_m(mass, &e, &e)
        })
        .sum()
}
