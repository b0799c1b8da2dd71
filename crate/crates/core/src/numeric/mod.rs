//! Dense and sparse kernels plus the finite-difference gradient check used to
//! validate every hand-derived backward pass.

mod dense;
mod gradcheck;
mod sparse;

pub use dense::{axpy, dot, DenseMatrix};
pub use gradcheck::{grad_check, GradCheckConfig};
pub use sparse::{spmm, NormalizedAdjacency};
