use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

use super::mesh::Point;
use super::quadrature::{gauss_segment, QuadratureRule};
use super::space::{basis_gradients, basis_values, coupling_pattern, Field, FunctionSpace};

/// Bilinear forms `a(trial_j, test_i)`, assembled as matrix entry `(i, j)`.
#[derive(Clone, Copy)]
pub enum Form<'a> {
    /// `∫ φ_i φ_j`
    Mass,
    /// `k ∫ ∇φ_i·∇φ_j`
    Stiffness { k: f64 },
    /// `∫ φ_i (w·∇φ_j)`
    Convection { velocity: &'a Field },
    /// `∫ φ_i (∂_d w_c) φ_j`
    ConvectionGradient { velocity: &'a Field, component: usize, direction: usize },
    /// `Σ_K τ_K ∫_K (w·∇φ_i) φ_j`
    SupgMass { velocity: &'a Field, tau: &'a [f64] },
    /// `Σ_K τ_K ∫_K (w·∇φ_i)(w·∇φ_j)`
    SupgConvection { velocity: &'a Field, tau: &'a [f64] },
    /// `-∫ ∂_c φ_i ψ_j` (velocity test, pressure trial)
    Gradient { component: usize },
    /// `-∫ ψ_i ∂_c φ_j` (pressure test, velocity trial)
    Divergence { component: usize },
    /// `∫_Γ φ_i φ_j` over boundary edges with one of `tags`
    BoundaryMass { tags: &'a [i32] },
}

/// Linear forms `ℓ(φ_i)`.
#[derive(Clone, Copy)]
pub enum Load<'a> {
    Source(&'a dyn Fn(Point) -> f64),
    Boundary { tags: &'a [i32], g: &'a dyn Fn(Point) -> f64 },
}

fn check_velocity(space: &FunctionSpace, w: &Field) -> Result<()> {
    if !space.same_mesh(w.space()) {
        return Err(Error::contract("coefficient field lives on a different mesh"));
    }
    if w.components() != 2 {
        return Err(Error::contract("velocity coefficient must have two components"));
    }
    Ok(())
}

/// Assembles `form` into canonical CSR with rows indexed by `test` dofs.
pub fn assemble_matrix(test: &FunctionSpace, trial: &FunctionSpace, form: &Form) -> Result<CsrMatrix> {
    if !test.same_mesh(trial) {
        return Err(Error::contract("test and trial spaces live on different meshes"));
    }
    let mesh = test.mesh();
    let (pt, pr) = (test.order(), trial.order());
    let mut degree = pt + pr;
    match *form {
        Form::Mass | Form::BoundaryMass { .. } => {}
        Form::Stiffness { .. } => degree -= 2,
        Form::Gradient { component } | Form::Divergence { component } => {
            if component > 1 {
                return Err(Error::contract("component must be 0 or 1"));
            }
            degree -= 1;
        }
        Form::Convection { velocity } => {
            check_velocity(test, velocity)?;
            degree = degree - 1 + velocity.space().order();
        }
        Form::ConvectionGradient { velocity, component, direction } => {
            check_velocity(test, velocity)?;
            if component > 1 || direction > 1 {
                return Err(Error::contract("component and direction must be 0 or 1"));
            }
            degree = degree + velocity.space().order() - 1;
        }
        Form::SupgMass { velocity, tau } | Form::SupgConvection { velocity, tau } => {
            check_velocity(test, velocity)?;
            if tau.len() != mesh.n_triangles() {
                return Err(Error::DimensionMismatch { expected: mesh.n_triangles(), found: tau.len() });
            }
            let pv = velocity.space().order();
            degree = if matches!(form, Form::SupgMass { .. }) {
                degree - 1 + pv
            } else {
                degree - 2 + 2 * pv
            };
        }
    }
    let mut a = if std::ptr::eq(test, trial) {
        test.pattern().zeroed_like()
    } else {
        coupling_pattern(test, trial)
    };

    if let Form::BoundaryMass { tags } = *form {
        for (i, be) in mesh.boundary_edges().iter().enumerate() {
            if !tags.contains(&be.tag) {
                continue;
            }
            let t = mesh.boundary_edge_triangle(i);
            let (_, len) = mesh.boundary_normal(be);
            let tri = mesh.triangles()[t];
            let la = tri.iter().position(|&v| v == be.vertices[0]).unwrap();
            let lb = tri.iter().position(|&v| v == be.vertices[1]).unwrap();
            let (dt, dr) = (test.cell_dofs(t), trial.cell_dofs(t));
            for (s, w) in gauss_segment() {
                let mut l = [0.0; 3];
                l[la] = 1.0 - s;
                l[lb] = s;
                let (ft, fr) = (basis_values(pt, l), basis_values(pr, l));
                for (ii, &gi) in dt.iter().enumerate() {
                    for (jj, &gj) in dr.iter().enumerate() {
                        let v = w * len * ft[ii] * fr[jj];
                        if v != 0.0 {
                            a.add_at(gi, gj, v);
                        }
                    }
                }
            }
        }
        return Ok(a);
    }

    let rule = QuadratureRule::for_degree(degree.min(5));
    let (nt_loc, nr_loc) = (test.local_dim(), trial.local_dim());
    let mut local = [[0.0f64; 6]; 6];
    for t in 0..mesh.n_triangles() {
        let g = mesh.barycentric_gradients(t);
        let area = mesh.area(t);
        for row in local.iter_mut() {
            *row = [0.0; 6];
        }
        for (l, &w) in rule.points.iter().zip(&rule.weights) {
            let l = *l;
            let wq = w * area;
            let ft = basis_values(pt, l);
            let fr = basis_values(pr, l);
            let gt = basis_gradients(pt, l, &g);
            let gr = basis_gradients(pr, l, &g);
            match *form {
                Form::Mass => {
                    for i in 0..nt_loc {
                        for j in 0..nr_loc {
                            local[i][j] += wq * ft[i] * fr[j];
                        }
                    }
                }
                Form::Stiffness { k } => {
                    for i in 0..nt_loc {
                        for j in 0..nr_loc {
                            local[i][j] += wq * k * (gt[i][0] * gr[j][0] + gt[i][1] * gr[j][1]);
                        }
                    }
                }
                Form::Convection { velocity } => {
                    let u = [velocity.local_value(t, l, 0), velocity.local_value(t, l, 1)];
                    for i in 0..nt_loc {
                        for j in 0..nr_loc {
                            local[i][j] += wq * ft[i] * (u[0] * gr[j][0] + u[1] * gr[j][1]);
                        }
                    }
                }
                Form::ConvectionGradient { velocity, component, direction } => {
                    let d = velocity.local_gradient(t, l, component)[direction];
                    for i in 0..nt_loc {
                        for j in 0..nr_loc {
                            local[i][j] += wq * ft[i] * d * fr[j];
                        }
                    }
                }
                Form::SupgMass { velocity, tau } => {
                    let u = [velocity.local_value(t, l, 0), velocity.local_value(t, l, 1)];
                    for i in 0..nt_loc {
                        let si = u[0] * gt[i][0] + u[1] * gt[i][1];
                        for j in 0..nr_loc {
                            local[i][j] += wq * tau[t] * si * fr[j];
                        }
                    }
                }
                Form::SupgConvection { velocity, tau } => {
                    let u = [velocity.local_value(t, l, 0), velocity.local_value(t, l, 1)];
                    for i in 0..nt_loc {
                        let si = u[0] * gt[i][0] + u[1] * gt[i][1];
                        for j in 0..nr_loc {
                            let sj = u[0] * gr[j][0] + u[1] * gr[j][1];
                            local[i][j] += wq * tau[t] * si * sj;
                        }
                    }
                }
                Form::Gradient { component } => {
                    for i in 0..nt_loc {
                        for j in 0..nr_loc {
                            local[i][j] -= wq * gt[i][component] * fr[j];
                        }
                    }
                }
                Form::Divergence { component } => {
                    for i in 0..nt_loc {
                        for j in 0..nr_loc {
                            local[i][j] -= wq * ft[i] * gr[j][component];
                        }
                    }
                }
                Form::BoundaryMass { .. } => unreachable!(),
            }
        }
        let (dt, dr) = (test.cell_dofs(t), trial.cell_dofs(t));
        for (i, &gi) in dt.iter().enumerate() {
            for (j, &gj) in dr.iter().enumerate() {
                a.add_at(gi, gj, local[i][j]);
            }
        }
    }
    Ok(a)
}

/// Assembles a load vector over `space`.
pub fn assemble_vector(space: &FunctionSpace, load: &Load) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let p = space.order();
    let mut b = vec![0.0; space.n_dof()];
    match *load {
        Load::Source(f) => {
            let rule = QuadratureRule::for_degree(p + 3);
            for t in 0..mesh.n_triangles() {
                let area = mesh.area(t);
                let dofs = space.cell_dofs(t);
                for (l, &w) in rule.points.iter().zip(&rule.weights) {
                    let fx = f(mesh.point_at(t, *l));
                    let phi = basis_values(p, *l);
                    for (k, &d) in dofs.iter().enumerate() {
                        b[d] += w * area * fx * phi[k];
                    }
                }
            }
        }
        Load::Boundary { tags, g } => {
            for (i, be) in mesh.boundary_edges().iter().enumerate() {
                if !tags.contains(&be.tag) {
                    continue;
                }
                let t = mesh.boundary_edge_triangle(i);
                let (_, len) = mesh.boundary_normal(be);
                let tri = mesh.triangles()[t];
                let la = tri.iter().position(|&v| v == be.vertices[0]).unwrap();
                let lb = tri.iter().position(|&v| v == be.vertices[1]).unwrap();
                let dofs = space.cell_dofs(t);
                for (s, w) in gauss_segment() {
                    let mut l = [0.0; 3];
                    l[la] = 1.0 - s;
                    l[lb] = s;
                    let gx = g(mesh.point_at(t, l));
                    let phi = basis_values(p, l);
                    for (k, &d) in dofs.iter().enumerate() {
                        b[d] += w * len * gx * phi[k];
                    }
                }
            }
        }
    }
    Ok(b)
}

/// Row-sum lumped mass of a P1 space (strictly positive).
pub fn lumped_mass(space: &FunctionSpace) -> Result<Vec<f64>> {
    if space.order() != 1 {
        return Err(Error::contract("mass lumping is only defined for P1"));
    }
    let mesh = space.mesh();
    let mut m = vec![0.0; space.n_dof()];
    for t in 0..mesh.n_triangles() {
        let a = mesh.area(t) / 3.0;
        for &d in space.cell_dofs(t) {
            m[d] += a;
        }
    }
    Ok(m)
}
