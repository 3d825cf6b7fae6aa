//! Dense linear algebra, symmetric eigen-solvers, seeded randomness and a
//! finite-difference gradient checker.

mod eig;
mod gradcheck;
mod matrix;
mod rng;

pub use eig::{inv_sqrt_psd, singular_values, svd, symm_eig, Svd, SymmetricEigen, DEFAULT_EIG_FLOOR};
pub use gradcheck::{grad_check, GradCheck, DEFAULT_FD_STEP};
pub use matrix::{axpy, dot, mat_vec_acc, outer_acc, vec_mat_acc, Matrix};
pub use rng::Rng;

/// Logistic sigmoid, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}
