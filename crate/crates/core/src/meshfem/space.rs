use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, TripletBuilder};

use super::mesh::{Mesh, Point};

/// Lagrange basis values at barycentric point `l`; only the first
/// `order == 1 ? 3 : 6` entries are meaningful.
pub fn basis_values(order: usize, l: [f64; 3]) -> [f64; 6] {
    if order == 1 {
        [l[0], l[1], l[2], 0.0, 0.0, 0.0]
    } else {
        [
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
        ]
    }
}

/// Physical gradients of the basis given barycentric gradients `g`.
pub fn basis_gradients(order: usize, l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    if order == 1 {
        out[..3].copy_from_slice(g);
        return out;
    }
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        out[i] = [s * g[i][0], s * g[i][1]];
    }
    for e in 0..3 {
        let (a, b) = (e, (e + 1) % 3);
        out[3 + e] = [
            4.0 * (l[a] * g[b][0] + l[b] * g[a][0]),
            4.0 * (l[a] * g[b][1] + l[b] * g[a][1]),
        ];
    }
    out
}

/// Continuous Lagrange space of order 1 or 2.
///
/// Dofs: vertices in mesh order, then (P2) one per edge in sorted edge order.
/// Local P2 ordering is the three vertices followed by the midpoints of
/// edges (0,1), (1,2), (2,0).
#[derive(Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    order: usize,
    cell_dofs: Vec<[usize; 6]>,
    dof_coords: Vec<Point>,
    pattern: OnceLock<CsrMatrix>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, order: usize) -> Result<Arc<Self>> {
        if order != 1 && order != 2 {
            return Err(Error::contract(format!("unsupported element order {order}")));
        }
        let nv = mesh.n_vertices();
        let mut dof_coords: Vec<Point> = mesh.vertices().to_vec();
        if order == 2 {
            for &[a, b] in mesh.edges() {
                let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
                dof_coords.push([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]);
            }
        }
        let cell_dofs = (0..mesh.n_triangles())
            .map(|t| {
                let [a, b, c] = mesh.triangles()[t];
                if order == 1 {
                    [a, b, c, 0, 0, 0]
                } else {
                    let e = mesh.triangle_edges(t);
                    [a, b, c, nv + e[0], nv + e[1], nv + e[2]]
                }
            })
            .collect();
        Ok(Arc::new(Self {
            mesh,
            order,
            cell_dofs,
            dof_coords,
            pattern: OnceLock::new(),
        }))
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_dof(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn local_dim(&self) -> usize {
        if self.order == 1 {
            3
        } else {
            6
        }
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        &self.cell_dofs[t][..self.local_dim()]
    }

    /// Local dof indices lying on local edge `l` of a triangle.
    pub fn local_edge_dofs(&self, l: usize) -> &'static [usize] {
        const P1: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];
        const P2: [[usize; 3]; 3] = [[0, 1, 3], [1, 2, 4], [2, 0, 5]];
        if self.order == 1 {
            &P1[l]
        } else {
            &P2[l]
        }
    }

    /// Dofs on boundary edges carrying one of `tags`, ascending.
    pub fn boundary_dofs(&self, tags: &[i32]) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, be) in self.mesh.boundary_edges().iter().enumerate() {
            if !tags.contains(&be.tag) {
                continue;
            }
            let t = self.mesh.boundary_edge_triangle(i);
            let l = self.local_edge_of(t, be.vertices);
            for &k in self.local_edge_dofs(l) {
                out.push(self.cell_dofs[t][k]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub(crate) fn local_edge_of(&self, t: usize, v: [usize; 2]) -> usize {
        let tri = self.mesh.triangles()[t];
        (0..3)
            .find(|&l| tri[l] == v[0] && tri[(l + 1) % 3] == v[1])
            .or_else(|| (0..3).find(|&l| tri[l] == v[1] && tri[(l + 1) % 3] == v[0]))
            .expect("boundary edge belongs to its triangle")
    }

    /// Sparsity pattern of a matrix coupling this space to itself.
    pub fn pattern(&self) -> &CsrMatrix {
        self.pattern.get_or_init(|| coupling_pattern(self, self))
    }

    pub fn same_mesh(&self, other: &FunctionSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }
}

pub(crate) fn coupling_pattern(test: &FunctionSpace, trial: &FunctionSpace) -> CsrMatrix {
    let (a, b) = (test.local_dim(), trial.local_dim());
    let nt = test.mesh.n_triangles();
    let mut tb = TripletBuilder::with_capacity(test.n_dof(), trial.n_dof(), nt * a * b);
    for t in 0..nt {
        for &i in test.cell_dofs(t) {
            for &j in trial.cell_dofs(t) {
                tb.push(i, j, 0.0).expect("dofs in range");
            }
        }
    }
    tb.build()
}

/// Scalar or 2-vector field on a function space; component-blocked storage.
#[derive(Debug, Clone)]
pub struct Field {
    space: Arc<FunctionSpace>,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(space: Arc<FunctionSpace>, components: usize, values: Vec<f64>) -> Result<Self> {
        if components != 1 && components != 2 {
            return Err(Error::contract(format!("field with {components} components")));
        }
        if values.len() != components * space.n_dof() {
            return Err(Error::DimensionMismatch {
                expected: components * space.n_dof(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite field value at dof {i}")));
        }
        Ok(Self { space, components, values })
    }

    pub fn zeros(space: Arc<FunctionSpace>, components: usize) -> Self {
        let n = space.n_dof() * components;
        Self { space, components, values: vec![0.0; n] }
    }

    pub fn interpolate(space: Arc<FunctionSpace>, f: impl Fn(Point) -> f64) -> Self {
        let values = space.dof_coords().iter().map(|&p| f(p)).collect();
        Self { space, components: 1, values }
    }

    pub fn interpolate_vector(space: Arc<FunctionSpace>, f: impl Fn(Point) -> [f64; 2]) -> Self {
        let n = space.n_dof();
        let mut values = vec![0.0; 2 * n];
        for (i, &p) in space.dof_coords().iter().enumerate() {
            let v = f(p);
            values[i] = v[0];
            values[n + i] = v[1];
        }
        Self { space, components: 2, values }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.space.n_dof();
        &self.values[c * n..(c + 1) * n]
    }

    /// Value of component `c` at barycentric point `l` of triangle `t`.
    pub fn local_value(&self, t: usize, l: [f64; 3], c: usize) -> f64 {
        let phi = basis_values(self.space.order, l);
        let vals = self.component(c);
        self.space
            .cell_dofs(t)
            .iter()
            .zip(phi)
            .map(|(&d, p)| vals[d] * p)
            .sum()
    }

    pub fn local_gradient(&self, t: usize, l: [f64; 3], c: usize) -> [f64; 2] {
        let g = self.space.mesh.barycentric_gradients(t);
        let dphi = basis_gradients(self.space.order, l, &g);
        let vals = self.component(c);
        let mut out = [0.0; 2];
        for (&d, gp) in self.space.cell_dofs(t).iter().zip(dphi) {
            out[0] += vals[d] * gp[0];
            out[1] += vals[d] * gp[1];
        }
        out
    }

    /// Point evaluation; one value per component.
    pub fn eval_at_point(&self, p: Point) -> Result<Vec<f64>> {
        let (t, l) = self.space.mesh.locate(p)?;
        Ok((0..self.components).map(|c| self.local_value(t, l, c)).collect())
    }

    /// Euclidean norm of a vector field at a dof.
    pub fn magnitude_at_dof(&self, i: usize) -> f64 {
        let n = self.space.n_dof();
        if self.components == 1 {
            self.values[i].abs()
        } else {
            self.values[i].hypot(self.values[n + i])
        }
    }
}

/// Row of the point-evaluation functional: `(dof, weight)` pairs.
pub fn interpolation_row(space: &FunctionSpace, p: Point) -> Result<Vec<(usize, f64)>> {
    let (t, l) = space.mesh().locate(p)?;
    let phi = basis_values(space.order(), l);
    Ok(space.cell_dofs(t).iter().copied().zip(phi).collect())
}
