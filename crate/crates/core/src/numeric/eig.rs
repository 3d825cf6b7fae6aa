use alloc::vec;
use alloc::vec::Vec;

use super::matrix::dot;
use super::Matrix;
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// `Q diag(f(λ)) Qᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let q = &self.vectors;
        let scaled = Matrix::from_fn(n, n, |i, j| q[(i, j)] * f(self.values[j]));
        scaled.matmul_tr(q).expect("square factors")
    }
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    /// Singular values, descending.
    pub s: Vec<f64>,
    pub v: Matrix,
}

fn symmetry_tolerance(a: &Matrix) -> f64 {
    1e-10 * a.max_abs().max(1.0)
}

/// Cyclic Jacobi eigen-solver for symmetric matrices.
///
/// Eigenvalues come back descending; each eigenvector has its first nonzero
/// component positive so the output is a deterministic function of the input.
pub fn symm_eig(a: &Matrix) -> Result<SymmetricEigen> {
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::shape("symm_eig", "matrix is not square"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("symm_eig input"));
    }
    let asym = a.max_asymmetry();
    if asym > symmetry_tolerance(a) {
        return Err(Error::NotSymmetric(asym));
    }
    // symmetrize exactly so rotations act on a truly symmetric matrix
    let mut w = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut q = Matrix::identity(n);

    let scale: f64 = w.as_slice().iter().map(|v| v * v).sum::<f64>();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for r in (p + 1)..n {
                off += w[(p, r)] * w[(p, r)];
            }
        }
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = w[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let arr = w[(r, r)];
                let theta = (arr - app) / (2.0 * apr);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkr = w[(k, r)];
                    w[(k, p)] = c * wkp - s * wkr;
                    w[(k, r)] = s * wkp + c * wkr;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wrk = w[(r, k)];
                    w[(p, k)] = c * wpk - s * wrk;
                    w[(r, k)] = s * wpk + c * wrk;
                }
                w[(p, r)] = 0.0;
                w[(r, p)] = 0.0;
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = Matrix::from_fn(n, n, |i, j| q[(i, order[j])]);
    for j in 0..n {
        fix_sign_column(&mut vectors, j, None);
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Flips column `j` (and the same column of `partner`) so its first nonzero
/// entry is positive.
fn fix_sign_column(m: &mut Matrix, j: usize, partner: Option<&mut Matrix>) {
    let first = (0..m.rows())
        .map(|i| m[(i, j)])
        .find(|v| v.abs() > 1e-14);
    if matches!(first, Some(v) if v < 0.0) {
        for i in 0..m.rows() {
            m[(i, j)] = -m[(i, j)];
        }
        if let Some(p) = partner {
            for i in 0..p.rows() {
                p[(i, j)] = -p[(i, j)];
            }
        }
    }
}

/// Default eigenvalue floor for [`inv_sqrt_psd`].
pub const DEFAULT_EIG_FLOOR: f64 = 1e-12;

/// `A^{-1/2}` for a symmetric positive semi-definite matrix.
///
/// Eigenvalues below `floor` are clamped to it. Eigenvalues below `-1e-6`
/// are rejected.
pub fn inv_sqrt_psd(a: &Matrix, floor: f64) -> Result<Matrix> {
    let eig = symm_eig(a)?;
    if let Some(&min) = eig.values.last() {
        if min < -1e-6 {
            return Err(Error::NegativeEigenvalue(min));
        }
    }
    Ok(eig.reconstruct_with(|l| 1.0 / libm::sqrt(l.max(floor))))
}

/// One-sided Jacobi SVD.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    // rows of `cols` are the columns of A (m >= n)
    let mut cols = a.transpose();
    let mut v = Matrix::identity(n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(cols.row(p), cols.row(p));
                let beta = dot(cols.row(q), cols.row(q));
                let gamma = dot(cols.row(p), cols.row(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + libm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_rows(&mut cols, p, q, c, s);
                rotate_rows_of_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| libm::sqrt(dot(cols.row(j), cols.row(j)))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let norm = norms[j];
        if norm > 1e-300 && norm > 1e-15 * smax {
            for i in 0..m {
                u[(i, k)] = cols[(j, i)] / norm;
            }
        }
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
    }
    for k in 0..n {
        fix_sign_column(&mut vs, k, Some(&mut u));
    }
    Ok(Svd { u, s, v: vs })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * cols);
    let rp = &mut lo[p * cols..(p + 1) * cols];
    let rq = &mut hi[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn rotate_rows_of_columns(v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..v.rows() {
        let a = v[(i, p)];
        let b = v[(i, q)];
        v[(i, p)] = c * a - s * b;
        v[(i, q)] = s * a + c * b;
    }
}

/// Singular values of `a`, descending and nonnegative.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return vec![];
    }
    svd(a).map(|d| d.s).unwrap_or_else(|_| vec![f64::NAN; a.rows().min(a.cols())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    fn random_symmetric(rng: &mut Rng, n: usize) -> Matrix {
        let b = rng.uniform_matrix(n, n, -1.0, 1.0);
        b.add(&b.transpose()).unwrap()
    }

    fn random_spd(rng: &mut Rng, n: usize) -> Matrix {
        let b = rng.uniform_matrix(n + 3, n, -1.0, 1.0);
        let mut g = b.tr_matmul(&b).unwrap();
        g.add_diag(0.1);
        g
    }

    #[test]
    fn diagonal_input() {
        let e = symm_eig(&Matrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        let expected = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
        assert_eq!(e.vectors, expected);
    }

    #[test]
    fn two_by_two_by_hand() {
        // λ² - 4λ + 3 = 0
        let e = symm_eig(&Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]])).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let mut rng = Rng::new(5, 0);
        let a = random_symmetric(&mut rng, 10);
        let e = symm_eig(&a).unwrap();
        assert!(e.reconstruct_with(|l| l).max_abs_diff(&a) <= 1e-8);
        let qtq = e.vectors.tr_matmul(&e.vectors).unwrap();
        assert!(qtq.max_abs_diff(&Matrix::identity(10)) <= 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sign_convention() {
        let mut rng = Rng::new(6, 0);
        let e = symm_eig(&random_symmetric(&mut rng, 6)).unwrap();
        for j in 0..6 {
            let first = (0..6).map(|i| e.vectors[(i, j)]).find(|v| v.abs() > 1e-14).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn nonsymmetric_is_rejected() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(symm_eig(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn inv_sqrt_known_values() {
        let id = inv_sqrt_psd(&Matrix::identity(3), DEFAULT_EIG_FLOOR).unwrap();
        assert!(id.max_abs_diff(&Matrix::identity(3)) < 1e-15);
        let d = inv_sqrt_psd(&Matrix::from_diag(&[4.0, 9.0]), DEFAULT_EIG_FLOOR).unwrap();
        assert!(d.max_abs_diff(&Matrix::from_diag(&[0.5, 1.0 / 3.0])) < 1e-15);
    }

    #[test]
    fn inv_sqrt_whitens_random_spd() {
        let mut rng = Rng::new(8, 1);
        let a = random_spd(&mut rng, 8);
        let b = inv_sqrt_psd(&a, DEFAULT_EIG_FLOOR).unwrap();
        let bab = b.matmul(&a).unwrap().matmul(&b).unwrap();
        assert!(bab.max_abs_diff(&Matrix::identity(8)) <= 1e-8);
    }

    #[test]
    fn inv_sqrt_rejects_negative_definite() {
        let a = Matrix::from_diag(&[1.0, -1e-3]);
        assert!(matches!(
            inv_sqrt_psd(&a, DEFAULT_EIG_FLOOR),
            Err(Error::NegativeEigenvalue(_))
        ));
        // tiny negative round-off is clamped
        assert!(inv_sqrt_psd(&Matrix::from_diag(&[1.0, -1e-11]), DEFAULT_EIG_FLOOR).is_ok());
    }

    #[test]
    fn singular_values_simple_cases() {
        let s = singular_values(&Matrix::from_diag(&[2.0, -3.0]));
        assert!((s[0] - 3.0).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-15);

        let u = [1.0, 2.0, -2.0];
        let v = [3.0, 4.0];
        let outer = Matrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        let s = singular_values(&outer);
        assert!((s[0] - 15.0).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12);
    }

    #[test]
    fn singular_values_match_gram_eigen() {
        let mut rng = Rng::new(9, 2);
        let a = rng.uniform_matrix(6, 4, -1.0, 1.0);
        let gram = symm_eig(&a.tr_matmul(&a).unwrap()).unwrap();
        let oracle: Vec<f64> = gram.values.iter().map(|l| libm::sqrt(l.max(0.0))).collect();
        let s = singular_values(&a);
        for (x, y) in s.iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-9);
        }
        let st = singular_values(&a.transpose());
        for (x, y) in s.iter().zip(&st) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = Rng::new(10, 0);
        for (m, n) in [(7, 4), (3, 5), (5, 5)] {
            let a = rng.uniform_matrix(m, n, -1.0, 1.0);
            let d = svd(&a).unwrap();
            let us = Matrix::from_fn(m, d.s.len(), |i, j| d.u[(i, j)] * d.s[j]);
            assert!(us.matmul_tr(&d.v).unwrap().max_abs_diff(&a) < 1e-12);
            let vtv = d.v.tr_matmul(&d.v).unwrap();
            assert!(vtv.max_abs_diff(&Matrix::identity(d.s.len())) < 1e-12);
        }
    }
}
