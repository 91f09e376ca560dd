mod common;

use std::sync::Arc;

use airtwin::evac::{walking_speed, CrowdConfig, CrowdModel, CrowdState, Penalty};
use airtwin::meshfem::{rect_mesh, FunctionSpace, Rect, TAG_SOUTH, TAG_WEST};
use airtwin::Error;
use common::{eikonal_point_exit_error, two_route, two_route_domain};
use proptest::prelude::*;

fn config(alpha: f64, exit: i32) -> CrowdConfig {
    CrowdConfig { v_max: 1.4, rho_max: 5.0, alpha, penalty: Penalty::Rational, exit_tags: vec![exit] }
}

#[test]
fn eikonal_matches_euclidean_distance_without_obstacles() {
    // First-order point-source error decays like h^0.7: 5.2% at n=20, 3.2% at 40, 2.0% at 80.
    let worst = eikonal_point_exit_error(100);
    assert!(worst <= 0.02, "worst relative deviation {worst:.4}");
}

#[test]
fn obstacle_forces_the_geodesic_detour() {
    let mesh = Arc::new(rect_mesh(40, 40, [0.0, 1.0], [0.0, 1.0], &[Rect::new(0.375, 0.625, 0.25, 0.75)]).unwrap());
    let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
    let model = CrowdModel::new(sp, config(0.0, TAG_WEST)).unwrap();
    let phi = model.eikonal(&vec![1.0; mesh.n_vertices()]).unwrap();
    let near = |x: [f64; 2]| mesh.vertices().iter().position(|q| (q[0] - x[0]).hypot(q[1] - x[1]) < 1e-9).unwrap();
    let p = near([0.7, 0.5]);
    let geodesic = 0.375 + 0.25 + 0.075f64.hypot(0.25);
    assert!(phi[p] > 0.7 + 0.1);
    assert!((phi[p] - geodesic).abs() <= 0.03 * geodesic, "φ = {}, geodesic {geodesic}", phi[p]);
    let open = near([0.3, 0.5]);
    assert!((phi[open] - 0.3).abs() < 1e-12);
}

#[test]
fn walking_speed_limits() {
    let c = config(3.0, 1);
    let s = walking_speed(&[0.0, 5.0, 0.0, 2.5], &[0.0, 0.0, 1.0, -4.0], &c).unwrap();
    assert_eq!(s[0], 1.4);
    assert!((s[1] - 1.4e-3).abs() < 1e-15);
    assert!((s[2] - 0.35).abs() < 1e-15);
    assert!((s[3] - 0.7).abs() < 1e-15);
    assert!(walking_speed(&[0.0], &[0.0, 1.0], &c).is_err());
    let off = config(0.0, 1);
    assert_eq!(walking_speed(&[1.0], &[9.0], &off).unwrap(), walking_speed(&[1.0], &[0.0], &off).unwrap());
}

#[test]
fn two_route_steering_halves_exposure() {
    let base = two_route(0.0);
    let steered = two_route(50.0);
    assert!(base.exposure > 0.0);
    let reduction = 1.0 - steered.exposure / base.exposure;
    assert!(reduction >= 0.5, "exposure {:.4} vs {:.4}", steered.exposure, base.exposure);
    assert!(steered.strip_occupancy <= 0.5 * base.strip_occupancy);
    for r in [&base, &steered] {
        assert!(r.run.worst_mass_balance() <= 1e-6);
        let last = *r.run.mass.last().unwrap();
        assert!(r.run.mass.windows(2).all(|w| w[1] <= w[0] + 1e-12 * r.run.mass[0]));
        assert!(last < r.run.mass[0]);
    }
}

#[test]
fn density_stays_within_bounds_near_jam() {
    let mesh = two_route_domain();
    let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
    let model = CrowdModel::new(sp, config(10.0, airtwin::meshfem::TAG_EAST)).unwrap();
    let rho0: Vec<f64> = mesh.vertices().iter().map(|p| if p[0] < 0.8 { 4.8 } else { 0.0 }).collect();
    let c: Vec<f64> = mesh.vertices().iter().map(|p| (-((p[0] - 1.5).powi(2) + p[1].powi(2)) * 10.0).exp()).collect();
    let dt = 0.9 * model.max_dt();
    let run = model.run(&rho0, &move |_| Ok(c.clone()), dt, 150).unwrap();
    for r in run.rho.iter().flatten() {
        assert!(*r >= -1e-6 && *r <= 5.0 * (1.0 + 1e-2), "{r}");
    }
    assert!(run.worst_mass_balance() <= 1e-6);
    for phi in &run.phi {
        assert!(phi.iter().all(|&p| p >= 0.0));
        assert!(model.exits().iter().all(|&e| phi[e] == 0.0));
    }
}

#[test]
fn oversized_step_is_a_cfl_error() {
    let mesh = two_route_domain();
    let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
    let model = CrowdModel::new(sp, config(0.0, TAG_SOUTH)).unwrap();
    let zero = vec![0.0; mesh.n_vertices()];
    let state = CrowdState { rho: zero.clone(), phi: vec![], t: 0.0 };
    assert!(matches!(model.step(&state, &zero, 1.5 * model.max_dt()), Err(Error::Cfl { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn potential_is_monotone_in_alpha(a in 0.0f64..20.0, extra in 0.0f64..50.0, cx in 0.8f64..2.2) {
        let mesh = two_route_domain();
        let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
        let lo = CrowdModel::new(sp.clone(), config(a, airtwin::meshfem::TAG_EAST)).unwrap();
        let hi = CrowdModel::new(sp, config(a + extra, airtwin::meshfem::TAG_EAST)).unwrap();
        let rho: Vec<f64> = mesh.vertices().iter().map(|p| if p[0] < 0.5 { 1.0 } else { 0.0 }).collect();
        let c: Vec<f64> = mesh.vertices().iter().map(|p| (-((p[0] - cx).powi(2) + (p[1] - 0.15).powi(2)) * 20.0).exp()).collect();
        let p_lo = lo.potential(&rho, &c).unwrap();
        let p_hi = hi.potential(&rho, &c).unwrap();
        for (l, h) in p_lo.iter().zip(&p_hi) {
            prop_assert!(*h >= *l * (1.0 - 1e-12));
        }
    }
}
