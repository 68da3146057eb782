use nalgebra::{DMatrix, DVector};

use super::{Dataset, RandomizationScheme};
use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_spd, SpdFactor};

/// A bootstrap selective-reporting problem recast as a randomized LASSO
/// with `ε = 0`.
#[derive(Clone, Debug)]
pub struct BootstrapProblem {
    pub data: Dataset,
    pub scheme: RandomizationScheme,
    pub w: DVector<f64>,
}

/// Recast `min ½(β̃ − b)ᵀΣ⁻¹(β̃ − b) + λ‖b‖₁` with
/// `β̃ = β̂ + α(β̂_boot − β̂)` as a randomized LASSO:
/// `y = Σ^{−1/2}β̂`, `X = Σ^{−1/2}`, `w = αΣ⁻¹(β̂_boot − β̂)`, `Ω = α²Σ⁻¹`.
pub fn bootstrap_reporting_problem(
    beta_hat: &DVector<f64>,
    sigma: &DMatrix<f64>,
    beta_boot: &DVector<f64>,
    alpha: f64,
) -> Result<BootstrapProblem> {
    let p = beta_hat.len();
    if sigma.shape() != (p, p) || beta_boot.len() != p {
        return Err(Error::DimensionMismatch(
            "Σ, β̂ and β̂_boot must share one dimension".into(),
        ));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "α must be positive, got {alpha}"
        )));
    }
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 * (1.0 + sigma.amax()) {
        return Err(Error::InvalidArgument("Σ must be symmetric".into()));
    }
    let factor = SpdFactor::new(sigma, "Σ").map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let root = inv_sqrt_spd(sigma)?;
    let y = &root * beta_hat;
    let w = factor.solve_vec(&(beta_boot - beta_hat)) * alpha;
    let mut omega = factor.inverse() * (alpha * alpha);
    omega = (&omega + omega.transpose()) * 0.5;
    Ok(BootstrapProblem {
        data: Dataset::new(y, root, None)?,
        scheme: RandomizationScheme::explicit(omega)?,
        w,
    })
}
