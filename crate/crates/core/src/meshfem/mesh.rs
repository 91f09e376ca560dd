use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A boundary segment carrying an integer tag.
///
/// Vertices are stored so that the owning triangle lies to the left of
/// `vertices[0] -> vertices[1]`; the outward normal is therefore
/// `(dy, -dx) / len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: i32,
}

/// Conforming, counter-clockwise oriented triangulation of a planar domain.
#[derive(Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    region_tags: Option<Vec<i32>>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<[usize; 2]>,
    boundary_edge_tri: Vec<usize>,
    locator: OnceLock<Locator>,
}

const NONE: usize = usize::MAX;

impl Mesh {
    /// Validates and normalizes a triangulation.
    ///
    /// Triangles with negative orientation are flipped. Boundary edges that
    /// are not listed receive tag 0.
    pub fn new(
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        region_tags: Option<Vec<i32>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(Error::Mesh("no triangles".into()));
        }
        if let Some(r) = &region_tags {
            if r.len() != triangles.len() {
                return Err(Error::Mesh("region tag count differs from triangle count".into()));
            }
        }
        let mut used = vec![false; nv];
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} repeats a vertex")));
            }
            let a = signed_area(&vertices, tri);
            let scale = edge_len2(&vertices, tri[0], tri[1])
                .max(edge_len2(&vertices, tri[1], tri[2]))
                .max(edge_len2(&vertices, tri[2], tri[0]));
            if a.abs() <= 1e-14 * scale {
                return Err(Error::Mesh(format!("triangle {t} is degenerate")));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
            for &v in tri.iter() {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Mesh(format!("vertex {v} does not belong to any triangle")));
        }

        let mut edge_map: HashMap<[usize; 2], Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for l in 0..3 {
                let (a, b) = (tri[l], tri[(l + 1) % 3]);
                edge_map.entry(sorted(a, b)).or_default().push((t, l));
            }
        }
        let mut edges: Vec<[usize; 2]> = edge_map.keys().copied().collect();
        edges.sort_unstable();
        let mut tri_edges = vec![[NONE; 3]; triangles.len()];
        let mut edge_tris = vec![[NONE; 2]; edges.len()];
        for (e, key) in edges.iter().enumerate() {
            let owners = &edge_map[key];
            if owners.len() > 2 {
                return Err(Error::Mesh(format!(
                    "edge ({}, {}) is shared by {} triangles",
                    key[0],
                    key[1],
                    owners.len()
                )));
            }
            for (k, &(t, l)) in owners.iter().enumerate() {
                tri_edges[t][l] = e;
                edge_tris[e][k] = t;
            }
            if owners.len() == 2 {
                // Conforming neighbours traverse a shared edge in opposite directions.
                let (t0, l0) = owners[0];
                let (t1, l1) = owners[1];
                if triangles[t0][l0] == triangles[t1][l1] {
                    return Err(Error::Mesh(format!(
                        "triangles {t0} and {t1} overlap across edge ({}, {})",
                        key[0], key[1]
                    )));
                }
            }
        }

        let mut tagged: HashMap<[usize; 2], i32> = HashMap::new();
        for be in &boundary_edges {
            let key = sorted(be.vertices[0], be.vertices[1]);
            let Some(owners) = edge_map.get(&key) else {
                return Err(Error::Mesh(format!(
                    "boundary edge ({}, {}) is not an edge of the triangulation",
                    key[0], key[1]
                )));
            };
            if owners.len() != 1 {
                return Err(Error::Mesh(format!(
                    "boundary edge ({}, {}) belongs to {} triangles",
                    key[0],
                    key[1],
                    owners.len()
                )));
            }
            if tagged.insert(key, be.tag).is_some() {
                return Err(Error::Mesh(format!("boundary edge ({}, {}) listed twice", key[0], key[1])));
            }
        }
        let mut bnd = Vec::new();
        let mut boundary_edge_tri = Vec::new();
        // Keep the caller's order, then append untagged edges in edge order.
        let mut order: Vec<[usize; 2]> = boundary_edges
            .iter()
            .map(|b| sorted(b.vertices[0], b.vertices[1]))
            .collect();
        for (e, key) in edges.iter().enumerate() {
            if edge_tris[e][1] == NONE && !tagged.contains_key(key) {
                order.push(*key);
            }
        }
        for key in order {
            let (t, l) = edge_map[&key][0];
            let tri = triangles[t];
            bnd.push(BoundaryEdge {
                vertices: [tri[l], tri[(l + 1) % 3]],
                tag: tagged.get(&key).copied().unwrap_or(0),
            });
            boundary_edge_tri.push(t);
        }

        Ok(Self {
            vertices,
            triangles,
            boundary_edges: bnd,
            region_tags,
            edges,
            tri_edges,
            edge_tris,
            boundary_edge_tri,
            locator: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn region_tags(&self) -> Option<&[i32]> {
        self.region_tags.as_deref()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Unique edges sorted lexicographically by `(min, max)` endpoint.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Edge indices of a triangle; local edge `l` joins local vertices
    /// `l` and `(l + 1) % 3`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&sorted(a, b)).ok()
    }

    /// Triangles adjacent to an edge (second is `None` on the boundary).
    pub fn edge_triangles(&self, e: usize) -> (usize, Option<usize>) {
        let [a, b] = self.edge_tris[e];
        (a, (b != NONE).then_some(b))
    }

    /// Triangle owning the `i`-th boundary edge.
    pub fn boundary_edge_triangle(&self, i: usize) -> usize {
        self.boundary_edge_tri[i]
    }

    /// Distinct boundary tags in ascending order.
    pub fn boundary_tags(&self) -> Vec<i32> {
        let mut tags: Vec<i32> = self.boundary_edges.iter().map(|b| b.tag).collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Element diameter `sup |x - y|` over the triangle, i.e. its longest edge.
    pub fn element_diameter(&self, t: usize) -> f64 {
        let tri = &self.triangles[t];
        edge_len2(&self.vertices, tri[0], tri[1])
            .max(edge_len2(&self.vertices, tri[1], tri[2]))
            .max(edge_len2(&self.vertices, tri[2], tri[0]))
            .sqrt()
    }

    pub fn min_diameter(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.element_diameter(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.element_diameter(t))
            .fold(0.0, f64::max)
    }

    /// Gradients of the three barycentric coordinates (constant per triangle).
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.corners(t);
        let two_a = 2.0 * self.area(t);
        [
            [(b[1] - c[1]) / two_a, (c[0] - b[0]) / two_a],
            [(c[1] - a[1]) / two_a, (a[0] - c[0]) / two_a],
            [(a[1] - b[1]) / two_a, (b[0] - a[0]) / two_a],
        ]
    }

    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let two_a = 2.0 * self.area(t);
        let l0 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / two_a;
        let l1 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / two_a;
        [l0, l1, 1.0 - l0 - l1]
    }

    pub fn point_at(&self, t: usize, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.corners(t);
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// Outward unit normal and length of a boundary edge.
    pub fn boundary_normal(&self, be: &BoundaryEdge) -> ([f64; 2], f64) {
        let a = self.vertices[be.vertices[0]];
        let b = self.vertices[be.vertices[1]];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = (dx * dx + dy * dy).sqrt();
        ([dy / len, -dx / len], len)
    }

    /// Vertices lying on boundary edges with one of `tags`, ascending.
    pub fn boundary_vertices(&self, tags: &[i32]) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|b| tags.contains(&b.tag))
            .flat_map(|b| b.vertices)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Bounding box `([xmin, ymin], [xmax, ymax])`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Containing triangle and barycentric coordinates of `p`.
    ///
    /// Points within `1e-9` (barycentric) of an edge resolve to the lowest
    /// index triangle containing them.
    pub fn locate(&self, p: Point) -> Result<(usize, [f64; 3])> {
        self.locator
            .get_or_init(|| Locator::new(self))
            .locate(self, p)
            .ok_or(Error::Location { x: p[0], y: p[1] })
    }
}

fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn signed_area(v: &[Point], tri: &[usize; 3]) -> f64 {
    let (a, b, c) = (v[tri[0]], v[tri[1]], v[tri[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_len2(v: &[Point], i: usize, j: usize) -> f64 {
    let (a, b) = (v[i], v[j]);
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug)]
struct Locator {
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

const BARY_TOL: f64 = 1e-9;

impl Locator {
    fn new(mesh: &Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let n = mesh.n_triangles();
        let side = ((n as f64).sqrt().ceil() as usize).max(1);
        let span = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
        let dims = [side, side];
        let cell = [span[0] / side as f64, span[1] / side as f64];
        let mut buckets = vec![Vec::new(); side * side];
        for t in 0..n {
            let c = mesh.corners(t);
            let (mut blo, mut bhi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in c {
                for d in 0..2 {
                    blo[d] = blo[d].min(p[d]);
                    bhi[d] = bhi[d].max(p[d]);
                }
            }
            let pad = 1e-9 * mesh.element_diameter(t);
            let i0 = Self::index(lo[0], cell[0], blo[0] - pad, side);
            let i1 = Self::index(lo[0], cell[0], bhi[0] + pad, side);
            let j0 = Self::index(lo[1], cell[1], blo[1] - pad, side);
            let j1 = Self::index(lo[1], cell[1], bhi[1] + pad, side);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * side + i].push(t);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    fn index(origin: f64, cell: f64, x: f64, n: usize) -> usize {
        (((x - origin) / cell).floor().max(0.0) as usize).min(n - 1)
    }

    fn locate(&self, mesh: &Mesh, p: Point) -> Option<(usize, [f64; 3])> {
        if !p[0].is_finite() || !p[1].is_finite() {
            return None;
        }
        let (lo, hi) = mesh.bounding_box();
        let margin = 1e-9 * mesh.max_diameter();
        if p[0] < lo[0] - margin || p[0] > hi[0] + margin || p[1] < lo[1] - margin || p[1] > hi[1] + margin {
            return None;
        }
        let i = Self::index(self.origin[0], self.cell[0], p[0], self.dims[0]);
        let j = Self::index(self.origin[1], self.cell[1], p[1], self.dims[1]);
        // Buckets hold triangles in ascending order.
        for &t in &self.buckets[j * self.dims[0] + i] {
            let b = mesh.barycentric(t, p);
            if b.iter().all(|&l| l >= -BARY_TOL) {
                return Some((t, b));
            }
        }
        None
    }
}
