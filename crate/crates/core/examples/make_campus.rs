//! Regenerates the campus scenario inputs under `scenarios/campus/`.
//!
//! ```text
//! cargo run --example make_campus [output_dir]
//! ```

use std::path::PathBuf;

use airtwin::meshfem::{rect_mesh, write_gmsh, Rect};

/// Building footprints on the 200 m × 200 m site.
pub const BUILDINGS: [[f64; 4]; 6] = [
    [20.0, 60.0, -40.0, -10.0],
    [100.0, 140.0, -50.0, -20.0],
    [150.0, 185.0, -120.0, -80.0],
    [20.0, 45.0, -130.0, -105.0],
    [110.0, 140.0, -125.0, -100.0],
    [70.0, 90.0, 0.0, 25.0],
];

/// Sensors in three rows downwind of the release area.
fn sensors() -> Vec<[f64; 2]> {
    let mut s = vec![];
    s.extend((0..5).map(|i| [55.0 + 10.0 * i as f64, -60.0]));
    s.extend((0..4).map(|i| [60.0 + 10.0 * i as f64, -45.0]));
    s.extend((0..4).map(|i| [65.0 + 10.0 * i as f64, -30.0]));
    s
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/campus"));
    std::fs::create_dir_all(&dir)?;
    let holes: Vec<Rect> = BUILDINGS.iter().map(|b| Rect::new(b[0], b[1], b[2], b[3])).collect();
    let mesh = rect_mesh(40, 40, [0.0, 200.0], [-150.0, 50.0], &holes)?;
    write_gmsh(&mesh, dir.join("campus.msh"))?;
    let mut text = String::from("# x y (m)\n");
    for p in sensors() {
        text.push_str(&format!("{} {}\n", p[0], p[1]));
    }
    std::fs::write(dir.join("sensors.txt"), text)?;
    println!("{} vertices, {} triangles -> {}", mesh.n_vertices(), mesh.n_triangles(), dir.display());
    Ok(())
}
