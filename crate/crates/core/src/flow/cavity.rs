use std::sync::Arc;

use crate::error::{Error, Result};
use crate::meshfem::{rect_mesh, TAG_EAST, TAG_NORTH, TAG_SOUTH, TAG_WEST};

use super::{solve_with, DirichletSpec, FlowField, FlowProblem, LinearMethod, NonlinearMethod, SolveOptions};

/// Samples on the lower half of the vertical centerline.
pub const CAVITY_SAMPLES: usize = 32;

#[derive(Debug, Clone)]
pub struct CavityResult {
    pub re: f64,
    pub field: FlowField,
    /// `(y, u_x)` at `x = 0.5`, `y = 0 … 0.5`.
    pub profile: Vec<(f64, f64)>,
}

impl CavityResult {
    /// Most negative sampled `u_x` and its height.
    pub fn profile_minimum(&self) -> (f64, f64) {
        self.profile
            .iter()
            .copied()
            .fold((f64::NAN, f64::INFINITY), |(ya, ua), (y, u)| if u < ua { (y, u) } else { (ya, ua) })
    }
}

/// Unit square, lid speed 1 along the top, `ν = 1/Re`; `lid` selects the
/// lid direction (`+1` or `-1`).
pub fn cavity_problem(re: f64, n_cells: usize, lid: f64) -> Result<FlowProblem> {
    let mesh = Arc::new(rect_mesh(n_cells, n_cells, [0.0, 1.0], [0.0, 1.0], &[])?);
    FlowProblem::new(
        mesh,
        1.0 / re,
        vec![
            DirichletSpec::new(TAG_NORTH, move |_| [lid, 0.0]),
            DirichletSpec::no_slip(TAG_SOUTH),
            DirichletSpec::no_slip(TAG_EAST),
            DirichletSpec::no_slip(TAG_WEST),
        ],
        vec![],
    )
    .map(|p| p.with_mu_range([1.0, 1.0]).with_length_scale(1.0))
}

/// Options used for the cavity sweep: Picard start, Newton finish.
pub fn cavity_options() -> SolveOptions {
    SolveOptions {
        tol: 1e-8,
        max_iter: 100,
        method: NonlinearMethod::PicardNewton { switch_tol: 1e-2 },
        linear: LinearMethod::Auto,
    }
}

/// Lid-driven cavity at Reynolds number `re` on an `n_cells²` grid.
pub fn lid_driven_cavity(re: f64, n_cells: usize) -> Result<CavityResult> {
    if !(50.0..=500.0).contains(&re) {
        return Err(Error::contract(format!("cavity Re = {re} outside [50, 500]")));
    }
    if n_cells < 32 {
        return Err(Error::contract("cavity needs at least 32 cells per side"));
    }
    let problem = cavity_problem(re, n_cells, 1.0)?;
    let disc = problem.discretize()?;
    let field = solve_with(&problem, &disc, 1.0, cavity_options())?;
    let profile = (0..CAVITY_SAMPLES)
        .map(|i| {
            let y = 0.5 * i as f64 / (CAVITY_SAMPLES - 1) as f64;
            field.velocity.eval_at_point([0.5, y]).map(|v| (y, v[0]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CavityResult { re, field, profile })
}
