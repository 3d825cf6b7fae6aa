use alloc::vec::Vec;

use crate::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// max_i |g_fd - g_an| / max(1, |g_fd|, |g_an|)
    pub max_rel_error: f64,
    /// Coordinate where the maximum was attained.
    pub worst_index: usize,
    pub finite_difference: Vec<f64>,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares `analytic` against central differences of `f` at `x`.
pub fn grad_check<F>(mut f: F, x: &[f64], analytic: &[f64], eps: f64) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> f64,
{
    if x.len() != analytic.len() {
        return Err(Error::shape("grad_check", "gradient length differs from point"));
    }
    let mut probe = x.to_vec();
    let mut fd = Vec::with_capacity(x.len());
    let mut worst = (0.0f64, 0usize);
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe);
        probe[i] = orig - eps;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("grad_check objective"));
        }
        let g = (plus - minus) / (2.0 * eps);
        let denom = 1.0f64.max(g.abs()).max(analytic[i].abs());
        let err = (g - analytic[i]).abs() / denom;
        if err > worst.0 {
            worst = (err, i);
        }
        fd.push(g);
    }
    Ok(GradCheck {
        max_rel_error: worst.0,
        worst_index: worst.1,
        finite_difference: fd,
    })
}
