mod common;

use std::collections::HashMap;

use airtwin::flow::{cavity_options, cavity_problem, lid_driven_cavity, reynolds, solve_with, SolveOptions};
use airtwin::linalg::norm2;
use airtwin::Error;

#[test]
fn campus_wind_is_laminar_and_converges_quickly() {
    let sc = common::campus();
    let problem = sc.flow_problem(&sc.mesh).unwrap();
    assert!((problem.reynolds(10.0) - 10.0).abs() < 1e-12);
    assert!((reynolds(20.0, 100.0, 100.0).unwrap() - 20.0).abs() < 1e-12);
    let disc = problem.discretize().unwrap();
    for mu in [10.0, 20.0] {
        let f = solve_with(&problem, &disc, mu, sc.solve_options()).unwrap();
        assert!(f.iterations <= 10, "μ = {mu}: {} Picard steps {:?}", f.iterations, f.residual_history);
        assert!(f.residual_history.windows(2).all(|w| w[1] < w[0]), "{:?}", f.residual_history);
        let u = f.velocity.values();
        let nv = disc.n_velocity();
        let div = norm2(&disc.divergence_of(u));
        let parts = norm2(&disc.divergence[0].spmv(&u[..nv]).unwrap()) + norm2(&disc.divergence[1].spmv(&u[nv..]).unwrap());
        assert!(div <= 1e-8 * parts, "divergence {div:e} of {parts:e}");
        for i in 0..2 * nv {
            if disc.is_dirichlet[i] {
                assert_eq!(u[i], mu * disc.lifting_values[i]);
            }
        }
    }
}

#[test]
fn picard_stagnation_reports_the_reynolds_number() {
    let problem = common::channel(16, 0.01);
    let disc = problem.discretize().unwrap();
    match solve_with(&problem, &disc, 2.0, SolveOptions::default()) {
        Err(Error::Flow { mu, reynolds, .. }) => {
            assert_eq!(mu, 2.0);
            assert!((reynolds - 200.0).abs() < 1e-9);
        }
        other => panic!("expected a flow failure, got {other:?}"),
    }
}

#[test]
fn cavity_profile_has_no_slip_and_a_return_flow() {
    let res = lid_driven_cavity(100.0, 32).unwrap();
    assert_eq!(res.profile.len(), 32);
    assert_eq!(res.profile[0], (0.0, 0.0));
    let (y, u) = res.profile_minimum();
    assert!((-0.25..-0.18).contains(&u) && (0.35..0.5).contains(&y), "minimum {u} at {y}");
    assert!(lid_driven_cavity(40.0, 32).is_err() && lid_driven_cavity(100.0, 16).is_err());
}

#[test]
fn reversed_lid_mirrors_the_cavity() {
    let n = 32;
    let solve = |lid: f64| {
        let p = cavity_problem(100.0, n, lid).unwrap();
        let d = p.discretize().unwrap();
        (solve_with(&p, &d, 1.0, cavity_options()).unwrap(), d)
    };
    let (fwd, disc) = solve(1.0);
    let (rev, _) = solve(-1.0);
    let key = |p: [f64; 2]| ((p[0] * 4.0 * n as f64).round() as i64, (p[1] * 4.0 * n as f64).round() as i64);
    let coords = disc.velocity_space.dof_coords();
    let index: HashMap<_, _> = coords.iter().enumerate().map(|(i, &p)| (key(p), i)).collect();
    let nv = disc.n_velocity();
    let (a, b) = (fwd.velocity.values(), rev.velocity.values());
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, &p) in coords.iter().enumerate() {
        let j = index[&key([1.0 - p[0], p[1]])];
        assert!((a[i] + b[j]).abs() <= 1e-10 * scale, "u_x at {p:?}");
        assert!((a[nv + i] - b[nv + j]).abs() <= 1e-10 * scale, "u_y at {p:?}");
    }
}
