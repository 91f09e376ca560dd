mod common;

use std::sync::Arc;

use airtwin::meshfem::{
    assemble_matrix, gmsh_string, load_gmsh, parse_gmsh, rect_mesh, vtk_string, write_gmsh, BoundaryEdge, Field, Form,
    FunctionSpace, Mesh, Rect,
};
use airtwin::Error;
use proptest::prelude::*;

#[test]
fn square_32_round_trips_through_gmsh() {
    let mesh = rect_mesh(32, 32, [0.0, 1.0], [0.0, 1.0], &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sq.msh");
    write_gmsh(&mesh, &path).unwrap();
    let back = load_gmsh(&path).unwrap();
    assert_eq!(back.vertices(), mesh.vertices());
    assert_eq!(back.triangles(), mesh.triangles());
    assert_eq!(back.boundary_edges(), mesh.boundary_edges());
    assert_eq!(gmsh_string(&back), gmsh_string(&mesh));
}

#[test]
fn holes_round_trip_with_tags() {
    let mesh = common::tiny_mesh();
    let back = parse_gmsh(&gmsh_string(&mesh), "mem").unwrap();
    let mut tags = back.boundary_tags();
    tags.sort_unstable();
    tags.dedup();
    assert_eq!(tags, vec![1, 2, 3, 4, 10]);
    assert_eq!(back.boundary_edges(), mesh.boundary_edges());
}

#[test]
fn campus_fixture_matches_generator() {
    let buildings = [
        [20.0, 60.0, -40.0, -10.0],
        [100.0, 140.0, -50.0, -20.0],
        [150.0, 185.0, -120.0, -80.0],
        [20.0, 45.0, -130.0, -105.0],
        [110.0, 140.0, -125.0, -100.0],
        [70.0, 90.0, 0.0, 25.0],
    ];
    let holes: Vec<Rect> = buildings.iter().map(|b| Rect::new(b[0], b[1], b[2], b[3])).collect();
    let mesh = rect_mesh(40, 40, [0.0, 200.0], [-150.0, 50.0], &holes).unwrap();
    let stored = std::fs::read_to_string(common::campus_dir().join("campus.msh")).unwrap();
    assert_eq!(stored, gmsh_string(&mesh), "regenerate with `cargo run --example make_campus`");
    let area = 200.0 * 200.0 - holes.iter().map(Rect::area).sum::<f64>();
    assert!((mesh.total_area() - area).abs() < 1e-9 * area);
}

#[test]
fn hole_area_identity() {
    let holes = [Rect::new(0.25, 0.5, 0.25, 0.75), Rect::new(1.25, 1.5, 0.25, 0.5)];
    let mesh = rect_mesh(8, 4, [0.0, 2.0], [0.0, 1.0], &holes).unwrap();
    let expect = 2.0 - 0.125 - 0.0625;
    assert!((mesh.total_area() - expect).abs() < 1e-12);
    for t in 0..mesh.n_triangles() {
        assert!(mesh.area(t) > 0.0);
    }
}

#[test]
fn boundary_edges_have_one_triangle() {
    let mesh = common::tiny_mesh();
    for i in 0..mesh.boundary_edges().len() {
        let t = mesh.boundary_edge_triangle(i);
        let be = mesh.boundary_edges()[i];
        assert!(be.vertices.iter().all(|v| mesh.triangles()[t].contains(v)));
        let e = mesh.edge_index(be.vertices[0], be.vertices[1]).unwrap();
        assert!(mesh.edge_triangles(e).1.is_none());
    }
}

#[test]
fn p2_dof_count_and_determinism() {
    let mesh = Arc::new(common::tiny_mesh());
    let p1 = FunctionSpace::new(mesh.clone(), 1).unwrap();
    let p2 = FunctionSpace::new(mesh.clone(), 2).unwrap();
    assert_eq!(p1.n_dof(), mesh.n_vertices());
    assert_eq!(p2.n_dof(), mesh.n_vertices() + mesh.edges().len());
    let again = FunctionSpace::new(mesh.clone(), 2).unwrap();
    assert_eq!(p2.dof_coords(), again.dof_coords());
}

#[test]
fn mass_is_spd_and_stiffness_has_constant_kernel() {
    let mesh = Arc::new(rect_mesh(5, 4, [0.0, 1.0], [0.0, 0.8], &[]).unwrap());
    for order in [1, 2] {
        let sp = FunctionSpace::new(mesh.clone(), order).unwrap();
        let m = assemble_matrix(&sp, &sp, &Form::Mass).unwrap();
        let k = assemble_matrix(&sp, &sp, &Form::Stiffness { k: 1.0 }).unwrap();
        assert!(m.asymmetry() < 1e-14 && k.asymmetry() < 1e-14);
        let total: f64 = m.values().iter().sum();
        assert!((total - 0.8).abs() < 1e-13);
        assert!(k.row_sums().iter().all(|r| r.abs() < 1e-12));
        let dense = nalgebra::DMatrix::from_fn(sp.n_dof(), sp.n_dof(), |i, j| m.get(i, j));
        assert!(dense.cholesky().is_some(), "mass matrix of order {order} is not SPD");
        let kd = nalgebra::DMatrix::from_fn(sp.n_dof(), sp.n_dof(), |i, j| k.get(i, j));
        let ev = kd.symmetric_eigenvalues();
        assert!(ev.iter().all(|&l| l > -1e-10));
    }
}

#[test]
fn convection_of_linear_matches_mass_times_ones() {
    let mesh = Arc::new(rect_mesh(6, 6, [0.0, 1.0], [0.0, 1.0], &[]).unwrap());
    for order in [1, 2] {
        let sp = FunctionSpace::new(mesh.clone(), order).unwrap();
        let w = Field::interpolate_vector(sp.clone(), |_| [1.0, 0.0]);
        let c = assemble_matrix(&sp, &sp, &Form::Convection { velocity: &w }).unwrap();
        let m = assemble_matrix(&sp, &sp, &Form::Mass).unwrap();
        let f = Field::interpolate(sp.clone(), |p| p[0]);
        let cf = c.spmv(f.values()).unwrap();
        let m1 = m.spmv(&vec![1.0; sp.n_dof()]).unwrap();
        for (a, b) in cf.iter().zip(&m1) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}

#[test]
fn vtk_output_declares_points_cells_and_fields() {
    let mesh = Arc::new(rect_mesh(2, 1, [0.0, 1.0], [0.0, 1.0], &[]).unwrap());
    let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
    let c = Field::interpolate(sp.clone(), |p| p[0] + p[1]);
    let text = vtk_string(&mesh, "t", &[("c", &c)]).unwrap();
    assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
    assert!(text.contains(&format!("POINTS {} double", mesh.n_vertices())));
    assert!(text.contains(&format!("CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles())));
    assert!(text.contains("SCALARS c double 1\nLOOKUP_TABLE default"));
    let other = Arc::new(rect_mesh(2, 1, [0.0, 1.0], [0.0, 1.0], &[]).unwrap());
    assert!(vtk_string(&other, "t", &[("c", &c)]).is_err());
}

#[test]
fn points_in_holes_are_location_errors() {
    let mesh = common::tiny_mesh();
    assert!(matches!(mesh.locate([0.5, 0.7]), Err(Error::Location { .. })));
    assert!(matches!(mesh.locate([1.5, 0.2]), Err(Error::Location { .. })));
    assert!(mesh.locate([0.5, 0.5]).is_ok());
}

#[test]
fn clockwise_input_is_reoriented() {
    let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let m = Mesh::new(v, vec![[0, 2, 1]], vec![BoundaryEdge { vertices: [0, 1], tag: 1 }], None).unwrap();
    assert!(m.area(0) > 0.0);
    assert!((m.element_diameter(0) - 2f64.sqrt()).abs() < 1e-15);
}

fn triangle() -> impl Strategy<Value = [[f64; 2]; 3]> {
    prop::array::uniform3(prop::array::uniform2(-5.0f64..5.0)).prop_filter("non-degenerate", |p| {
        let a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        a.abs() > 1e-2
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diameter_bounds(p in triangle()) {
        let m = Mesh::new(p.to_vec(), vec![[0, 1, 2]], vec![], None).unwrap();
        let d = m.element_diameter(0);
        let e = |i: usize, j: usize| (p[i][0] - p[j][0]).hypot(p[i][1] - p[j][1]);
        let perim = e(0, 1) + e(1, 2) + e(2, 0);
        prop_assert!(d >= 2.0 * m.area(0) / perim);
        prop_assert!((d - e(0, 1).max(e(1, 2)).max(e(2, 0))).abs() < 1e-12);
    }

    #[test]
    fn p1_reproduces_linears_and_p2_quadratics(x in 0.01f64..0.99, y in 0.01f64..0.99, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mesh = Arc::new(rect_mesh(5, 7, [0.0, 1.0], [0.0, 1.0], &[]).unwrap());
        let p1 = FunctionSpace::new(mesh.clone(), 1).unwrap();
        let p2 = FunctionSpace::new(mesh, 2).unwrap();
        let lin = Field::interpolate(p1, |p| a * p[0] + b * p[1] + 0.5);
        let quad = Field::interpolate(p2.clone(), |p| a * p[0] * p[0] + b * p[0] * p[1] - p[1] * p[1]);
        prop_assert!((lin.eval_at_point([x, y]).unwrap()[0] - (a * x + b * y + 0.5)).abs() < 1e-12);
        let q = a * x * x + b * x * y - y * y;
        prop_assert!((quad.eval_at_point([x, y]).unwrap()[0] - q).abs() < 1e-12);
        let one = Field::interpolate(p2, |_| 1.0);
        prop_assert!((one.eval_at_point([x, y]).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gmsh_round_trip_any_grid(nx in 1usize..9, ny in 1usize..9) {
        let mesh = rect_mesh(nx, ny, [0.0, nx as f64], [-1.0, ny as f64 - 1.0], &[]).unwrap();
        let back = parse_gmsh(&gmsh_string(&mesh), "mem").unwrap();
        prop_assert_eq!(back.triangles(), mesh.triangles());
        prop_assert_eq!(back.boundary_edges(), mesh.boundary_edges());
    }
}
