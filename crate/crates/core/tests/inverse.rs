mod common;

use airtwin::inverse::{misfit_source, CgPreconditioner, InverseProblem, MapOptions};
use airtwin::linalg::dot;
use common::{dense_oracle, rel_l2, tiny_inverse};
use proptest::prelude::*;

const N_DOF: usize = 169;
const N_DATA: usize = 15;

fn tiny() -> common::TinyInverse {
    tiny_inverse(0.01, None, 0.5, 5.0)
}

fn tight() -> MapOptions {
    MapOptions { tol: 1e-10, ..MapOptions::default() }
}

#[test]
fn fixture_sizes() {
    let p = tiny();
    assert_eq!(p.stepper.n_dof(), N_DOF);
    assert_eq!(p.measurements.len(), N_DATA);
}

#[test]
fn map_matches_dense_normal_equations() {
    let p = tiny();
    let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
    let res = ip.solve_map(tight()).unwrap();
    let oracle = dense_oracle(&p, ip.sigma());
    let err = rel_l2(res.m_map.values(), oracle.m_map.as_slice());
    assert!(err <= 1e-6, "m_map relative error {err:e}");
    assert!(res.gradient_norm <= 1e-6 * res.initial_gradient_norm);
    assert_eq!(res.pde_solves, ip.pde_solves());
}

#[test]
fn full_rank_lowrank_variance_matches_dense_posterior() {
    let p = tiny();
    let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
    let post = ip.posterior_lowrank(N_DATA).unwrap();
    assert!(post.values.windows(2).all(|w| w[0] >= w[1]) && post.values.iter().all(|&l| l >= 0.0));
    let oracle = dense_oracle(&p, ip.sigma());
    let dofs: Vec<usize> = (0..N_DOF).collect();
    let var = post.variance(&p.prior, &dofs).unwrap();
    for (i, v) in var.iter().enumerate() {
        let want = oracle.post_cov[(i, i)];
        assert!((v - want).abs() <= 0.05 * want, "dof {i}: {v} vs {want}");
    }
    let prior_var = p.prior.variance(&dofs).unwrap();
    let prior_cov = oracle.precision.clone().cholesky().unwrap().inverse();
    for i in 0..N_DOF {
        assert!((prior_var[i] - prior_cov[(i, i)]).abs() <= 1e-8 * prior_cov[(i, i)]);
    }
}

#[test]
fn dense_forward_matches_time_stepping() {
    let p = tiny();
    let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
    let oracle = dense_oracle(&p, ip.sigma());
    let f = ip.forward(p.truth.values()).unwrap();
    let want = &oracle.forward * nalgebra::DVector::from_column_slice(p.truth.values());
    assert!(rel_l2(&f, want.as_slice()) < 1e-10);
}

#[test]
fn identity_observation_limit_recovers_truth() {
    let positions = {
        let p = tiny();
        p.stepper.space().dof_coords().to_vec()
    };
    let p = tiny_inverse(0.0, Some(positions), 0.0, 10.0);
    let peak = p.truth.values().iter().copied().fold(0.0, f64::max);
    let ip = InverseProblem::with_sigma(&p.stepper, &p.measurements, &p.prior, 1e-6 * peak).unwrap();
    let res = ip.solve_map(tight()).unwrap();
    let err = rel_l2(res.m_map.values(), p.truth.values());
    assert!(err < 1e-3, "relative error {err:e}");
}

#[test]
fn zero_data_gives_zero_map() {
    let mut p = tiny();
    p.measurements.d.iter_mut().for_each(|v| *v = 0.0);
    let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
    let res = ip.solve_map(MapOptions::default()).unwrap();
    assert!(res.m_map.values().iter().all(|&v| v == 0.0));
}

#[test]
fn map_objective_beats_prior_mean_and_truth() {
    let p = tiny();
    let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
    let res = ip.solve_map(tight()).unwrap();
    let j_prior = ip.objective(p.prior.mean()).unwrap();
    let j_truth = ip.objective(p.truth.values()).unwrap();
    assert!(res.objective <= j_prior && res.objective <= j_truth);
    assert!(res.history.windows(2).all(|w| w[1].objective <= w[0].objective + 1e-12 * j_prior));
}

#[test]
fn prior_preconditioning_does_not_increase_cg_work() {
    let p = tiny();
    let count = |pre| {
        let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
        ip.solve_map(MapOptions { tol: 1e-8, max_cg: 2000, max_newton: 3, preconditioner: pre }).unwrap().cg_iterations
    };
    assert!(count(CgPreconditioner::Prior) <= count(CgPreconditioner::None));
}

#[test]
fn misfit_loads_vanish_on_exact_data_and_scale_with_sigma() {
    let p = tiny_inverse(0.0, None, 0.5, 5.0);
    let traj = p.stepper.solve_forward(&p.truth).unwrap();
    let loads = misfit_source(&traj, &p.measurements, 1.0).unwrap();
    assert!(loads.iter().flatten().all(|&v| v.abs() < 1e-14));
    let zero = p.stepper.forward_values(&vec![0.0; N_DOF]).unwrap();
    let l1 = misfit_source(&zero, &p.measurements, 1.0).unwrap();
    let l2 = misfit_source(&zero, &p.measurements, 2.0).unwrap();
    for (a, b) in l1.iter().flatten().zip(l2.iter().flatten()) {
        assert!((a - 4.0 * b).abs() <= 1e-15 * a.abs().max(1.0));
    }
    assert!(l1.iter().flatten().any(|&v| v != 0.0));
}

#[test]
fn adjoint_of_late_loads_is_localized_near_the_end() {
    let p = tiny();
    let n = p.stepper.n_steps();
    let mut loads = vec![Vec::new(); n + 1];
    loads[n] = vec![0.0; N_DOF];
    loads[n][80] = 1.0;
    let adj = p.stepper.solve_adjoint(&loads).unwrap();
    assert!(adj.states[n].iter().all(|&v| v == 0.0));
    let norms: Vec<f64> = adj.states.iter().map(|s| dot(s, s).sqrt()).collect();
    assert!(norms[..n].windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)), "{norms:?}");
}

fn unit_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn adjoint_identity(m in unit_vec(N_DOF), q in unit_vec(N_DATA)) {
        let p = tiny();
        let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
        let lhs = dot(&ip.forward(&m).unwrap(), &q);
        let rhs = dot(&m, &ip.adjoint(&q).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn gradient_matches_central_differences(m in unit_vec(N_DOF), v in unit_vec(N_DOF)) {
        let p = tiny();
        let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
        let g = dot(&ip.gradient(&m).unwrap(), &v);
        let best = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&eps| {
                let shift = |s: f64| m.iter().zip(&v).map(|(a, b)| a + s * eps * b).collect::<Vec<_>>();
                let fd = (ip.objective(&shift(1.0)).unwrap() - ip.objective(&shift(-1.0)).unwrap()) / (2.0 * eps);
                (fd - g).abs() / g.abs()
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!(best <= 1e-4, "relative error {}", best);
    }

    #[test]
    fn hessian_is_symmetric_positive(x in unit_vec(N_DOF), y in unit_vec(N_DOF)) {
        let p = tiny();
        let ip = InverseProblem::new(&p.stepper, &p.measurements, &p.prior).unwrap();
        let hx = ip.hessian_apply(&x).unwrap();
        let hy = ip.hessian_apply(&y).unwrap();
        let (a, b) = (dot(&hx, &y), dot(&x, &hy));
        prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()));
        prop_assert!(dot(&hx, &x) > 0.0);
        prop_assert!(ip.hessian_apply(&vec![0.0; N_DOF]).unwrap().iter().all(|&v| v == 0.0));
    }
}
