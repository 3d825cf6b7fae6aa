//! Regularised canonical correlation between two stacked views.
//!
//! Given row-stacked embeddings `M_C` (`N x d_C`) and `M_A` (`N x d_A`), the
//! objective is the sum of the top-`L` singular values of
//! `T = Σ_CC^{-1/2} Σ_CA Σ_AA^{-1/2}`, where `Σ_CC = M̄_Cᵀ M̄_C / N + r_C I`,
//! `Σ_AA` likewise and `Σ_CA = M̄_Cᵀ M̄_A / N`. `M̄` is the column-centred
//! matrix (centring can be switched off). That sum is the optimum over
//! projection matrices `U`, `V` of `tr(Uᵀ Σ_CA V)` subject to
//! `Uᵀ Σ_CC U = I`, `Vᵀ Σ_AA V = I` and `u_iᵀ Σ_CA v_j = 0` for `i != j`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numeric::{inv_sqrt_psd, svd, symm_eig, Matrix, Svd, DEFAULT_EIG_FLOOR};
use crate::{Error, Result};

/// Which view an embedding came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum View {
    Code,
    Text,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Code => "code",
            View::Text => "text",
        }
    }
}

/// Paired stacked embeddings of the same `N` records.
#[derive(Debug, Clone, Copy)]
pub struct ViewBatch<'a> {
    pub code: &'a Matrix,
    pub text: &'a Matrix,
}

impl<'a> ViewBatch<'a> {
    pub fn new(code: &'a Matrix, text: &'a Matrix) -> Result<Self> {
        if code.rows() != text.rows() {
            return Err(Error::shape(
                "view batch",
                format!("{} code rows vs {} text rows", code.rows(), text.rows()),
            ));
        }
        if code.rows() < 2 {
            return Err(Error::Invalid("view batch needs at least two rows".into()));
        }
        if !code.is_finite() || !text.is_finite() {
            return Err(Error::NonFinite("view batch"));
        }
        Ok(ViewBatch { code, text })
    }

    pub fn len(&self) -> usize {
        self.code.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Objective settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DccaOptions {
    pub reg_code: f64,
    pub reg_text: f64,
    /// Number of correlated dimensions `L`.
    pub dims: usize,
    pub center: bool,
}

impl Default for DccaOptions {
    fn default() -> Self {
        DccaOptions {
            reg_code: 1e-4,
            reg_text: 1e-4,
            dims: 20,
            center: true,
        }
    }
}

/// Frozen canonical projections solved from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DccaProjection {
    /// `d_C x L`
    pub u: Matrix,
    /// `d_A x L`
    pub v: Matrix,
    pub reg_code: f64,
    pub reg_text: f64,
    pub mean_code: Vec<f64>,
    pub mean_text: Vec<f64>,
    /// Canonical correlations `σ_1..σ_L` on the solving data.
    pub correlations: Vec<f64>,
}

impl DccaProjection {
    pub fn dims(&self) -> usize {
        self.u.cols()
    }

    pub fn input_width(&self, view: View) -> usize {
        match view {
            View::Code => self.u.rows(),
            View::Text => self.v.rows(),
        }
    }

    fn parts(&self, view: View) -> (&Matrix, &[f64]) {
        match view {
            View::Code => (&self.u, &self.mean_code),
            View::Text => (&self.v, &self.mean_text),
        }
    }

    /// `(x - mean) · U` (or `· V`).
    pub fn project(&self, x: &[f64], view: View) -> Result<Vec<f64>> {
        let (w, mean) = self.parts(view);
        if x.len() != w.rows() {
            return Err(Error::shape(
                "project",
                format!("{} values, projection expects {}", x.len(), w.rows()),
            ));
        }
        let centred: Vec<f64> = x.iter().zip(mean).map(|(a, m)| a - m).collect();
        let mut out = vec![0.0; w.cols()];
        crate::numeric::vec_mat_acc(&centred, w, &mut out);
        Ok(out)
    }

    /// Row-wise [`project`](Self::project).
    pub fn project_rows(&self, m: &Matrix, view: View) -> Result<Matrix> {
        let (w, mean) = self.parts(view);
        if m.cols() != w.rows() {
            return Err(Error::shape("project_rows", "embedding width"));
        }
        m.centered(mean).matmul(w)
    }

    /// Gradient of the projection input given a gradient on its output.
    pub fn project_backward(&self, d_out: &[f64], view: View) -> Vec<f64> {
        let (w, _) = self.parts(view);
        let mut d_in = vec![0.0; w.rows()];
        crate::numeric::mat_vec_acc(w, d_out, &mut d_in);
        d_in
    }
}

/// Shared intermediate quantities of the objective.
struct Whitened {
    code: Matrix,
    text: Matrix,
    mean_code: Vec<f64>,
    mean_text: Vec<f64>,
    code_isqrt: Matrix,
    text_isqrt: Matrix,
    svd: Svd,
}

fn covariance(a: &Matrix, b: &Matrix, n: f64) -> Result<Matrix> {
    Ok(a.tr_matmul(b)?.scale(1.0 / n))
}

fn whiten(batch: ViewBatch<'_>, opts: &DccaOptions) -> Result<Whitened> {
    let max_dims = batch.code.cols().min(batch.text.cols());
    if opts.dims == 0 || opts.dims > max_dims {
        return Err(Error::Invalid(format!(
            "L = {} outside 1..={max_dims}",
            opts.dims
        )));
    }
    let (mean_code, mean_text) = if opts.center {
        (batch.code.column_means(), batch.text.column_means())
    } else {
        (vec![0.0; batch.code.cols()], vec![0.0; batch.text.cols()])
    };
    let code = batch.code.centered(&mean_code);
    let text = batch.text.centered(&mean_text);
    let n = batch.len() as f64;
    let mut s_cc = covariance(&code, &code, n)?;
    s_cc.add_diag(opts.reg_code);
    let mut s_aa = covariance(&text, &text, n)?;
    s_aa.add_diag(opts.reg_text);
    let s_ca = covariance(&code, &text, n)?;
    let code_isqrt = inv_sqrt_psd(&s_cc, DEFAULT_EIG_FLOOR)?;
    let text_isqrt = inv_sqrt_psd(&s_aa, DEFAULT_EIG_FLOOR)?;
    let t = code_isqrt.matmul(&s_ca)?.matmul(&text_isqrt)?;
    let svd = svd(&t)?;
    Ok(Whitened {
        code,
        text,
        mean_code,
        mean_text,
        code_isqrt,
        text_isqrt,
        svd,
    })
}

/// Sum of the top-`L` canonical correlations.
pub fn total_correlation(batch: ViewBatch<'_>, opts: &DccaOptions) -> Result<f64> {
    let w = whiten(batch, opts)?;
    Ok(w.svd.s[..opts.dims].iter().sum())
}

/// Objective value and its gradient with respect to both stacked views.
#[derive(Debug, Clone)]
pub struct DccaGradient {
    pub correlation: f64,
    pub d_code: Matrix,
    pub d_text: Matrix,
}

/// Analytic gradient of [`total_correlation`].
///
/// Fails with [`Error::DegenerateGap`] when the `L`-th and `(L+1)`-th
/// singular values are within `1e-8` of each other.
pub fn dcca_gradient(batch: ViewBatch<'_>, opts: &DccaOptions) -> Result<DccaGradient> {
    let w = whiten(batch, opts)?;
    let l = opts.dims;
    let s = &w.svd.s;
    if l < s.len() && (s[l - 1] - s[l]).abs() <= 1e-8 {
        return Err(Error::DegenerateGap(s[l - 1], s[l]));
    }
    let p = w.svd.u.leading_columns(l);
    let q = w.svd.v.leading_columns(l);
    let s_l = &s[..l];

    // ∇_CA = Σ_CC^{-1/2} P_L Q_Lᵀ Σ_AA^{-1/2}
    let left = w.code_isqrt.matmul(&p)?;
    let right = w.text_isqrt.matmul(&q)?;
    let grad_ca = left.matmul_tr(&right)?;
    // ∇_CC = -1/2 Σ_CC^{-1/2} P_L S_L P_Lᵀ Σ_CC^{-1/2}, likewise ∇_AA
    let scaled_left = Matrix::from_fn(left.rows(), l, |i, j| left[(i, j)] * s_l[j]);
    let grad_cc = scaled_left.matmul_tr(&left)?.scale(-0.5);
    let scaled_right = Matrix::from_fn(right.rows(), l, |i, j| right[(i, j)] * s_l[j]);
    let grad_aa = scaled_right.matmul_tr(&right)?.scale(-0.5);

    let n = batch.len() as f64;
    let d_code_c = w
        .code
        .matmul(&grad_cc)?
        .scale(2.0)
        .add(&w.text.matmul_tr(&grad_ca)?)?
        .scale(1.0 / n);
    let d_text_c = w
        .text
        .matmul(&grad_aa)?
        .scale(2.0)
        .add(&w.code.matmul(&grad_ca)?)?
        .scale(1.0 / n);
    let (d_code, d_text) = if opts.center {
        (uncenter_grad(d_code_c), uncenter_grad(d_text_c))
    } else {
        (d_code_c, d_text_c)
    };
    Ok(DccaGradient {
        correlation: s_l.iter().sum(),
        d_code,
        d_text,
    })
}

/// Backpropagates through `M̄ = M - 1 mean(M)`.
fn uncenter_grad(d: Matrix) -> Matrix {
    let means = d.column_means();
    d.centered(&means)
}

/// [`dcca_gradient`] that retries a degenerate top-`L` boundary with the
/// regularisers scaled by `1 + 1e-6` per attempt.
pub fn dcca_gradient_with_retry(
    batch: ViewBatch<'_>,
    opts: &DccaOptions,
    attempts: usize,
) -> Result<DccaGradient> {
    let mut o = *opts;
    let mut last = None;
    for _ in 0..attempts.max(1) {
        match dcca_gradient(batch, &o) {
            Err(e @ Error::DegenerateGap(..)) => {
                last = Some(e);
                o.reg_code *= 1.0 + 1e-6;
                o.reg_text *= 1.0 + 1e-6;
            }
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Solves `U = Σ_CC^{-1/2} P_L`, `V = Σ_AA^{-1/2} Q_L` on the given data.
pub fn compute_projections(batch: ViewBatch<'_>, opts: &DccaOptions) -> Result<DccaProjection> {
    let w = whiten(batch, opts)?;
    let l = opts.dims;
    let smax = w.svd.s.first().copied().unwrap_or(0.0);
    let rank = w
        .svd
        .s
        .iter()
        .filter(|&&s| s > 1e-10 * smax.max(1e-300) && s > 1e-12)
        .count();
    if rank < l {
        return Err(Error::RankDeficient { rank, needed: l });
    }
    let u = w.code_isqrt.matmul(&w.svd.u.leading_columns(l))?;
    let v = w.text_isqrt.matmul(&w.svd.v.leading_columns(l))?;
    Ok(DccaProjection {
        u,
        v,
        reg_code: opts.reg_code,
        reg_text: opts.reg_text,
        mean_code: w.mean_code,
        mean_text: w.mean_text,
        correlations: w.svd.s[..l].to_vec(),
    })
}

/// Classical CCA computed independently of the objective's hot path:
/// explicit covariance blocks, whitening, then the eigenvalues of the
/// symmetric dilation `[[0, K], [Kᵀ, 0]]` of the whitened cross-covariance.
/// Returns all `min(p, q)` canonical correlations, descending.
pub fn cca_oracle(x: &Matrix, y: &Matrix, reg: f64) -> Result<Vec<f64>> {
    if x.rows() != y.rows() || x.rows() < 2 {
        return Err(Error::shape("cca_oracle", "views need equal row counts >= 2"));
    }
    let n = x.rows();
    let (p, q) = (x.cols(), y.cols());
    let mean = |m: &Matrix, j: usize| (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
    let mx: Vec<f64> = (0..p).map(|j| mean(x, j)).collect();
    let my: Vec<f64> = (0..q).map(|j| mean(y, j)).collect();
    let cov = |a: &Matrix, ma: &[f64], b: &Matrix, mb: &[f64]| {
        Matrix::from_fn(a.cols(), b.cols(), |i, j| {
            let mut s = 0.0;
            for r in 0..n {
                s += (a[(r, i)] - ma[i]) * (b[(r, j)] - mb[j]);
            }
            s / n as f64
        })
    };
    let mut cxx = cov(x, &mx, x, &mx);
    let mut cyy = cov(y, &my, y, &my);
    let cxy = cov(x, &mx, y, &my);
    for i in 0..p {
        cxx[(i, i)] += reg;
    }
    for i in 0..q {
        cyy[(i, i)] += reg;
    }
    let wx = inv_sqrt_psd(&cxx, DEFAULT_EIG_FLOOR)?;
    let wy = inv_sqrt_psd(&cyy, DEFAULT_EIG_FLOOR)?;
    let k = wx.matmul(&cxy)?.matmul(&wy)?;
    let dilation = Matrix::from_fn(p + q, p + q, |i, j| match (i < p, j < p) {
        (true, false) => k[(i, j - p)],
        (false, true) => k[(j, i - p)],
        _ => 0.0,
    });
    let eig = symm_eig(&dilation)?;
    Ok(eig.values[..p.min(q)].iter().map(|v| v.max(0.0)).collect())
}
