//! Triangular meshes, Lagrange spaces, quadrature, and form assembly.

mod assemble;
mod io;
mod mesh;
mod quadrature;
mod rect;
mod space;

pub use assemble::{assemble_matrix, assemble_vector, lumped_mass, Form, Load};
pub use io::{gmsh_string, load_gmsh, parse_gmsh, vtk_string, write_gmsh, write_vtk};
pub use mesh::{BoundaryEdge, Mesh, Point};
pub use quadrature::{gauss_segment, QuadratureRule};
pub use rect::{rect_mesh, Rect, TAG_EAST, TAG_HOLE_BASE, TAG_NORTH, TAG_SOUTH, TAG_WEST};
pub use space::{basis_gradients, basis_values, interpolation_row, Field, FunctionSpace};
