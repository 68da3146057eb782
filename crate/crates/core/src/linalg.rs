//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition numbers above this are rejected by [`SpdFactor::new`].
pub const MAX_CONDITION: f64 = 1e12;

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    dim: usize,
}

impl SpdFactor {
    /// Factor `m`, failing with a diagnostic when it is not numerically PD.
    ///
    /// The conditioning estimate is `(max L_ii / min L_ii)^2`, a lower bound
    /// on the 2-norm condition number.
    pub fn new(m: &DMatrix<f64>, what: &str) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!("{what} is not square")));
        }
        let dim = m.nrows();
        let chol = Cholesky::new(m.clone()).ok_or_else(|| {
            Error::NumericalDegeneracy(format!("{what} is not positive definite"))
        })?;
        if dim > 0 {
            let l = chol.l_dirty();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..dim {
                let d = l[(i, i)].abs();
                lo = lo.min(d);
                hi = hi.max(d);
            }
            let cond = (hi / lo).powi(2);
            if !cond.is_finite() || cond > MAX_CONDITION {
                return Err(Error::NumericalDegeneracy(format!(
                    "{what} is ill-conditioned (condition estimate {cond:.3e})"
                )));
            }
        }
        Ok(Self { chol, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Lower-triangular factor `L` with `m = L Lᵀ`.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Columns of `x` listed in `idx`, in that order.
pub fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_columns(idx.iter())
}

pub fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_rows(idx.iter())
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// `m[order, order]` for a symmetric matrix.
pub fn permute_symmetric(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    let k = order.len();
    DMatrix::from_fn(k, k, |i, j| m[(order[i], order[j])])
}

/// Ordinary least squares summary of `y` on the columns of `x`.
#[derive(Clone, Debug)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub rss: f64,
    /// Diagonal of `(XᵀX)⁻¹`.
    pub inv_gram_diag: DVector<f64>,
    pub df: usize,
}

impl OlsFit {
    /// Residual variance estimate `rss / df`.
    pub fn sigma2(&self) -> f64 {
        self.rss / self.df as f64
    }
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if k == 0 || n <= k {
        return Err(Error::SingularDesign(format!(
            "least squares needs n > k (n = {n}, k = {k})"
        )));
    }
    let gram = x.transpose() * x;
    let f = SpdFactor::new(&gram, "least-squares Gram matrix")
        .map_err(|e| Error::SingularDesign(e.to_string()))?;
    let coef = f.solve_vec(&(x.transpose() * y));
    let resid = y - x * &coef;
    let inv = f.inverse();
    Ok(OlsFit {
        coef,
        rss: resid.norm_squared(),
        inv_gram_diag: inv.diagonal(),
        df: n - k,
    })
}

/// Symmetric inverse square root `M^{-1/2}` of a PD matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if eig.eigenvalues.iter().any(|&l| !(l > max * 1e-14)) {
        return Err(Error::InvalidArgument(
            "matrix is singular or not positive definite".into(),
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Largest eigenvalue of a symmetric PSD matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}
