use crate::error::{Error, Result};

use super::mesh::{BoundaryEdge, Mesh};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

pub const TAG_SOUTH: i32 = 1;
pub const TAG_EAST: i32 = 2;
pub const TAG_NORTH: i32 = 3;
pub const TAG_WEST: i32 = 4;
pub const TAG_HOLE_BASE: i32 = 10;

/// Structured triangulation of a rectangle with rectangular holes removed.
///
/// Each grid cell is split into two triangles; the diagonal direction
/// alternates in a checkerboard pattern so the mesh is mirror symmetric
/// about the vertical centerline when `nx` is even.
pub fn rect_mesh(nx: usize, ny: usize, x_range: [f64; 2], y_range: [f64; 2], holes: &[Rect]) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::contract("rect_mesh needs nx, ny >= 1"));
    }
    if !(x_range[1] > x_range[0]) || !(y_range[1] > y_range[0]) {
        return Err(Error::contract("rect_mesh needs increasing coordinate ranges"));
    }
    let dx = (x_range[1] - x_range[0]) / nx as f64;
    let dy = (y_range[1] - y_range[0]) / ny as f64;
    let snap = |v: f64, origin: f64, h: f64, n: usize, what: &str| -> Result<usize> {
        let s = (v - origin) / h;
        let r = s.round();
        if (s - r).abs() > 1e-9 || r < 0.0 || r > n as f64 {
            return Err(Error::Mesh(format!("hole {what} = {v} is not aligned to the grid")));
        }
        Ok(r as usize)
    };
    let mut cells_of_holes = Vec::with_capacity(holes.len());
    for (k, h) in holes.iter().enumerate() {
        let i0 = snap(h.x0, x_range[0], dx, nx, "x0")?;
        let i1 = snap(h.x1, x_range[0], dx, nx, "x1")?;
        let j0 = snap(h.y0, y_range[0], dy, ny, "y0")?;
        let j1 = snap(h.y1, y_range[0], dy, ny, "y1")?;
        if i0 == 0 || j0 == 0 || i1 >= nx || j1 >= ny || i1 <= i0 || j1 <= j0 {
            return Err(Error::Mesh(format!("hole {k} is not strictly inside the domain")));
        }
        cells_of_holes.push([i0, i1, j0, j1]);
    }
    for a in 0..cells_of_holes.len() {
        for b in a + 1..cells_of_holes.len() {
            let (p, q) = (cells_of_holes[a], cells_of_holes[b]);
            // Holes must be separated by at least one cell so every boundary edge has one tag.
            if p[0] <= q[1] && q[0] <= p[1] && p[2] <= q[3] && q[2] <= p[3] {
                return Err(Error::Mesh(format!("holes {a} and {b} touch or overlap")));
            }
        }
    }
    let hole_of_cell = |i: usize, j: usize| {
        cells_of_holes
            .iter()
            .position(|h| i >= h[0] && i < h[1] && j >= h[2] && j < h[3])
    };

    let mut keep_vertex = vec![false; (nx + 1) * (ny + 1)];
    for j in 0..ny {
        for i in 0..nx {
            if hole_of_cell(i, j).is_none() {
                for (a, b) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                    keep_vertex[b * (nx + 1) + a] = true;
                }
            }
        }
    }
    let mut index = vec![usize::MAX; keep_vertex.len()];
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let g = j * (nx + 1) + i;
            if keep_vertex[g] {
                index[g] = vertices.len();
                let x = if i == nx { x_range[1] } else { x_range[0] + i as f64 * dx };
                let y = if j == ny { y_range[1] } else { y_range[0] + j as f64 * dy };
                vertices.push([x, y]);
            }
        }
    }
    let v = |i: usize, j: usize| index[j * (nx + 1) + i];

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            if hole_of_cell(i, j).is_some() {
                continue;
            }
            let (v00, v10, v01, v11) = (v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }

    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push(BoundaryEdge { vertices: [v(i, 0), v(i + 1, 0)], tag: TAG_SOUTH });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge { vertices: [v(nx, j), v(nx, j + 1)], tag: TAG_EAST });
    }
    for i in (0..nx).rev() {
        boundary.push(BoundaryEdge { vertices: [v(i + 1, ny), v(i, ny)], tag: TAG_NORTH });
    }
    for j in (0..ny).rev() {
        boundary.push(BoundaryEdge { vertices: [v(0, j + 1), v(0, j)], tag: TAG_WEST });
    }
    for (k, h) in cells_of_holes.iter().enumerate() {
        let tag = TAG_HOLE_BASE + k as i32;
        let [i0, i1, j0, j1] = *h;
        for i in i0..i1 {
            boundary.push(BoundaryEdge { vertices: [v(i, j0), v(i + 1, j0)], tag });
            boundary.push(BoundaryEdge { vertices: [v(i, j1), v(i + 1, j1)], tag });
        }
        for j in j0..j1 {
            boundary.push(BoundaryEdge { vertices: [v(i0, j), v(i0, j + 1)], tag });
            boundary.push(BoundaryEdge { vertices: [v(i1, j), v(i1, j + 1)], tag });
        }
    }
    Mesh::new(vertices, triangles, boundary, None)
}
