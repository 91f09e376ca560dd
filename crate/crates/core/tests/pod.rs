use std::sync::Arc;

use airtwin::meshfem::{assemble_matrix, rect_mesh, Form, FunctionSpace};
use airtwin::linalg::CsrMatrix;
use airtwin::rom::{inner_m, pod_vectors, projection_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mass() -> CsrMatrix {
    let mesh = Arc::new(rect_mesh(5, 4, [0.0, 1.5], [0.0, 1.0], &[]).unwrap());
    let sp = FunctionSpace::new(mesh, 2).unwrap();
    assemble_matrix(&sp, &sp, &Form::Mass).unwrap()
}

/// `count` two-component vectors: `mixed` random directions with decaying
/// weights, so the Gram spectrum spreads over several decades.
fn snapshots(n: usize, count: usize, mixed: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = (0..mixed).map(|_| (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..count)
        .map(|_| {
            let mut s = vec![0.0; 2 * n];
            for (k, d) in dirs.iter().enumerate() {
                let w = rng.random_range(-1.0..1.0) * 0.3f64.powi(k as i32);
                s.iter_mut().zip(d).for_each(|(a, b)| *a += w * b);
            }
            s
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truncation_error_equals_discarded_eigenvalues(count in 2usize..14, mixed in 1usize..16, cut in 0usize..14, seed in any::<u64>()) {
        let m = mass();
        let snaps = snapshots(m.n_rows(), count, mixed, seed);
        let full = pod_vectors(&snaps, &m, 0.0, None).unwrap();
        let r = cut.clamp(1, full.modes.len());
        let p = pod_vectors(&snaps, &m, 0.0, Some(r)).unwrap();
        prop_assert_eq!(p.modes.len(), r);
        let tail: f64 = p.eigenvalues[r..].iter().sum();
        let total: f64 = p.eigenvalues.iter().sum();
        let err = projection_error(&m, &p.modes, &snaps);
        // Below 1e-6 of the total the tail is round-off in the Gram eigenvalues.
        if tail > 1e-6 * total {
            prop_assert!((err - tail).abs() <= 1e-8 * tail, "err {} tail {}", err, tail);
        } else {
            prop_assert!(err <= 1e-6 * total);
        }
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((inner_m(&m, &p.modes[i], &p.modes[j]) - want).abs() <= 1e-10);
            }
        }
        prop_assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn energy_tolerance_picks_smallest_rank(count in 3usize..12, seed in any::<u64>(), tol in 1e-6f64..0.3) {
        let m = mass();
        let snaps = snapshots(m.n_rows(), count, count, seed);
        let p = pod_vectors(&snaps, &m, tol, None).unwrap();
        let total: f64 = p.eigenvalues.iter().map(|l| l.max(0.0)).sum();
        let r = p.modes.len();
        let kept: f64 = p.eigenvalues[..r].iter().sum();
        prop_assert!(kept >= (1.0 - tol) * total);
        if r > 1 {
            let fewer: f64 = p.eigenvalues[..r - 1].iter().sum();
            prop_assert!(fewer < (1.0 - tol) * total);
        }
        prop_assert!((p.energy - kept / total).abs() < 1e-12);
    }
}

#[test]
fn zero_tolerance_keeps_numerical_rank() {
    let m = mass();
    let base = snapshots(m.n_rows(), 3, 3, 11);
    let mut snaps = base.clone();
    for k in 0..4 {
        let s: Vec<f64> = base[0].iter().zip(&base[1]).map(|(a, b)| a + (k as f64) * b).collect();
        snaps.push(s);
    }
    let p = pod_vectors(&snaps, &m, 0.0, None).unwrap();
    assert_eq!(p.modes.len(), 3);
    assert!(projection_error(&m, &p.modes, &snaps) <= 1e-20 * p.eigenvalues[0]);
}
