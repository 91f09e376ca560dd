//! Sparse and dense linear algebra.

mod eig;
mod ilu;
mod krylov;
mod lanczos;
mod lu;
mod mtx;
mod sparse;

pub use eig::{eig_sym, DenseSymmetric, SymmetricEigen};
pub use ilu::Ilu0;
pub use krylov::{
    bicgstab, gmres, pcg, solve_cg, solve_cg_report, solve_general, CgIterate, CgOutcome, FnOperator,
    GeneralSolveOptions, LinearOperator, DEFAULT_TOL, DENSE_FALLBACK_THRESHOLD,
};
pub use lanczos::{lanczos_lowrank, LanczosResult};
pub use lu::{solve_dense, DenseLu, LuAnalysis, SparseLu};
pub use mtx::{from_matrix_market, read_matrix_market, to_matrix_market, write_matrix_market};
pub use sparse::{axpy, dot, norm2, CsrMatrix, TripletBuilder};
