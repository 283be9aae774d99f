//! Dense kernels, simplex helpers, SVD and the finite-difference oracle.

pub mod gradcheck;
pub mod matrix;
pub mod simplex;
pub mod svd;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use matrix::{dot, norm, DenseMatrix};
pub use simplex::{
    argmax, argmax_rows, check_simplex, check_simplex_rows, entropy, l2_normalize_backward,
    l2_normalize_rows, softmax_backward, softmax_rows, SimplexVector,
};
pub use svd::{singular_values, thin_svd, ThinSvd};
