mod common;

use airtwin::flow::{solve_with, Discretization, FlowProblem, SolveOptions};
use airtwin::linalg::dot;
use airtwin::rom::{
    apply_blocked, collect_snapshots, fom_residual, load_rom, pod, project, project_galerkin, relative_error_m,
    rom_solve, save_rom, RomOperators, SnapshotSet,
};
use airtwin::Error;
use proptest::prelude::*;
use std::sync::OnceLock;

struct Fixture {
    problem: FlowProblem,
    disc: Discretization,
    snaps: SnapshotSet,
    ops: RomOperators,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let problem = common::channel(16, 0.02);
        let disc = problem.discretize().unwrap();
        let mus: Vec<f64> = (0..8).map(|i| 0.5 + 1.5 * i as f64 / 7.0).collect();
        let snaps = collect_snapshots(&problem, &disc, &mus, SolveOptions::default()).unwrap();
        let basis = pod(&snaps, &disc.mass, 1e-10, None).unwrap();
        let ops = project_galerkin(&basis, &problem, &disc).unwrap();
        Fixture { problem, disc, snaps, ops }
    })
}

fn fom(f: &Fixture, mu: f64) -> Vec<f64> {
    solve_with(&f.problem, &f.disc, mu, SolveOptions::default()).unwrap().velocity.into_values()
}

#[test]
fn snapshot_parameters_are_reproduced() {
    let f = fixture();
    assert!(f.ops.rank() >= 2, "rank {}", f.ops.rank());
    for (mu, raw) in f.snaps.mus.iter().zip(&f.snaps.raw) {
        let (rom, _) = rom_solve(&f.ops, &f.disc.velocity_space, *mu, 1e-12).unwrap();
        let e = relative_error_m(&f.disc.mass, rom.velocity.values(), raw);
        assert!(e <= 0.01, "μ = {mu}: {e}");
    }
}

#[test]
fn held_out_parameters_within_five_percent() {
    let f = fixture();
    for mu in [0.6, 0.95, 1.3, 1.55, 1.9] {
        let (rom, _) = rom_solve(&f.ops, &f.disc.velocity_space, mu, 1e-12).unwrap();
        let e = relative_error_m(&f.disc.mass, rom.velocity.values(), &fom(f, mu));
        assert!(e <= 0.05, "μ = {mu}: {e}");
    }
}

#[test]
fn fom_residual_shrinks_as_the_basis_grows() {
    let f = fixture();
    for mu in [0.7, 1.2, 1.8] {
        let mut last = f64::INFINITY;
        for r in 1..=f.ops.rank() {
            let ops = project_galerkin(&f.ops.basis.truncated(r), &f.problem, &f.disc).unwrap();
            let (rom, _) = rom_solve(&ops, &f.disc.velocity_space, mu, 1e-12).unwrap();
            let res = fom_residual(&f.disc, mu, rom.velocity.values()).unwrap();
            assert!(res <= last * (1.0 + 1e-9), "μ = {mu}, r = {r}: {res} after {last}");
            last = res;
        }
    }
}

#[test]
fn rank_one_model_is_a_scalar_quadratic() {
    let f = fixture();
    let ops = project_galerkin(&f.ops.basis.truncated(1), &f.problem, &f.disc).unwrap();
    let mu = 1.4;
    // c α² + b α + a = 0
    let (a, b, c) = (
        mu * ops.a_l[0] + mu * mu * ops.c_ll[0],
        ops.a_r[0][0] + mu * ops.d_r[0][0],
        ops.c_r[0][0][0],
    );
    let disc = (b * b - 4.0 * a * c).sqrt();
    let roots = [(-b + disc) / (2.0 * c), (-b - disc) / (2.0 * c)];
    let near = if roots[0].abs() < roots[1].abs() { roots[0] } else { roots[1] };
    let sol = ops.solve(mu, 1e-13).unwrap();
    assert!((sol.alpha[0] - near).abs() <= 1e-10 * near.abs().max(1.0), "{} vs {near}", sol.alpha[0]);
}

#[test]
fn projected_snapshot_coordinates_nearly_solve_the_reduced_system() {
    let f = fixture();
    for (mu, lifted) in f.snaps.mus.iter().zip(&f.snaps.lifted) {
        let alpha = project(&f.disc.mass, &f.ops.basis.modes, lifted);
        let res = f.ops.residual(*mu, &alpha);
        let sol = f.ops.solve(*mu, 1e-12).unwrap();
        let j = f.ops.jacobian(*mu, &sol.alpha);
        // First-order bound ‖R(α_proj)‖ ≲ ‖J‖ ‖α_proj − α_rom‖ with generous slack.
        let jn = j.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let da: f64 = alpha.iter().zip(&sol.alpha).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rn: f64 = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rn <= 2.0 * jn * da + 1e-12 * jn, "μ = {mu}: {rn} vs {}", jn * da);
    }
}

#[test]
fn persisted_model_gives_identical_solutions() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rom.txt");
    save_rom(&f.ops, &path).unwrap();
    let back = load_rom(&path).unwrap();
    assert_eq!(back.rank(), f.ops.rank());
    let a = f.ops.solve(1.1, 1e-12).unwrap();
    let b = back.solve(1.1, 1e-12).unwrap();
    assert_eq!(a.alpha, b.alpha);
    assert_eq!(f.ops.reconstruct(1.1, &a.alpha), back.reconstruct(1.1, &b.alpha));
}

#[test]
fn out_of_range_parameter_is_rejected() {
    let f = fixture();
    assert!(matches!(f.ops.solve(2.5, 1e-10), Err(Error::Contract(_))));
    assert!(collect_snapshots(&f.problem, &f.disc, &[1.0], SolveOptions::default()).is_err());
    assert!(collect_snapshots(&f.problem, &f.disc, &[1.0, 0.7], SolveOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reduced_residual_is_the_projected_momentum_residual(mu in 0.5f64..2.0, raw in prop::collection::vec(-0.5f64..0.5, 8)) {
        let f = fixture();
        let r = f.ops.rank();
        let alpha: Vec<f64> = raw.iter().cycle().take(r).copied().collect();
        let u = f.ops.reconstruct(mu, &alpha);
        let w = f.disc.velocity_field(&u).unwrap();
        let n = f.disc.convection_matrix(&w).unwrap();
        let k = f.disc.viscous.linear_combination(1.0, &n, 1.0).unwrap();
        let full = apply_blocked(&k, &u);
        let reduced = f.ops.residual(mu, &alpha);
        let scale = full.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (phi, red) in f.ops.basis.modes.iter().zip(&reduced) {
            prop_assert!((dot(phi, &full) - red).abs() <= 1e-10 * scale.max(1.0));
        }
    }
}
