use nalgebra::DVector;

use super::{check_alpha, feature_label, IntervalEstimate, Method};
use crate::conditioning::TargetSpec;
use crate::error::{invalid, Error, Result};
use crate::linalg::{select_columns, SpdFactor};
use crate::numerics::{invert_monotone, log_tp_unchecked, Interval};
use crate::selection::Dataset;

/// Endpoints are clipped this many standard errors from the estimate.
const CLIP_SES: f64 = 50.0;

/// Truncation of the target estimate implied by a non-randomized LASSO
/// selection with active set `E0` and signs `S0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyhedralTruncation {
    pub lower: f64,
    pub upper: f64,
    pub beta_hat: f64,
    /// Standard error `σ‖c‖` of the target estimate.
    pub sd: f64,
}

/// Rewrite the LASSO selection event `{E0, S0}` (active signs and inactive
/// subgradient bounds) as bounds on the target estimate with the nuisance
/// statistic held fixed.
pub fn polyhedral_truncation(
    data: &Dataset,
    e0: &[usize],
    s0: &[f64],
    target: &TargetSpec,
    sigma: f64,
    lambda: f64,
) -> Result<PolyhedralTruncation> {
    if e0.is_empty() || e0.len() != s0.len() {
        return invalid("active set and signs must be nonempty and aligned");
    }
    if !(sigma > 0.0 && lambda > 0.0) {
        return invalid("σ and λ must be positive");
    }
    let p = data.p();
    let xe = select_columns(&data.x, e0);
    let mut mask = vec![false; p];
    for &j in e0 {
        mask[j] = true;
    }
    let inactive: Vec<usize> = (0..p).filter(|&j| !mask[j]).collect();
    let xc = select_columns(&data.x, &inactive);
    let f = SpdFactor::new(&(xe.transpose() * &xe), "X_EᵀX_E")
        .map_err(|e| Error::SingularDesign(e.to_string()))?;
    let s = DVector::from_column_slice(s0);
    let g_inv_s = f.solve_vec(&s);

    let beta_hat = target.estimate(&data.y);
    let dir = &target.contrast / target.norm2;
    let nuisance = &data.y - &dir * beta_hat;

    // Each constraint reads coef·β̂ + offset < rhs.
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let fit = |v: &DVector<f64>| f.solve_vec(&(xe.transpose() * v));
    let (fd, fn_) = (fit(&dir), fit(&nuisance));
    for k in 0..e0.len() {
        // S_k·(X_E⁺y − λ(X_EᵀX_E)⁻¹S)_k > 0.
        rows.push((-s[k] * fd[k], -s[k] * fn_[k], -lambda * s[k] * g_inv_s[k]));
    }
    if !inactive.is_empty() {
        let resid = |v: &DVector<f64>, b: &DVector<f64>| xc.transpose() * (v - &xe * b) / lambda;
        let (cd, cn) = (resid(&dir, &fd), resid(&nuisance, &fn_));
        let shift = xc.transpose() * (&xe * &g_inv_s);
        for i in 0..inactive.len() {
            rows.push((cd[i], cn[i], 1.0 - shift[i]));
            rows.push((-cd[i], -cn[i], 1.0 + shift[i]));
        }
    }

    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    let scale = 1.0 + beta_hat.abs();
    for (coef, offset, rhs) in rows {
        let slack = rhs - offset;
        if coef.abs() <= 1e-12 * (1.0 + slack.abs()) {
            continue;
        }
        let bound = slack / coef;
        if coef > 0.0 {
            upper = upper.min(bound);
        } else {
            lower = lower.max(bound);
        }
    }
    let tol = 1e-9 * scale;
    if !(lower - tol <= beta_hat && beta_hat <= upper + tol) || !(lower < upper) {
        return Err(Error::GeometryInconsistency(format!(
            "estimate {beta_hat} outside its truncation [{lower}, {upper}]"
        )));
    }
    Ok(PolyhedralTruncation {
        lower,
        upper,
        beta_hat: beta_hat.clamp(lower, upper),
        sd: sigma * target.norm2.sqrt(),
    })
}

impl PolyhedralTruncation {
    /// Truncated-Gaussian CDF of the estimate at mean `beta0`; decreasing in
    /// `beta0`.
    pub fn pivot(&self, beta0: f64) -> f64 {
        if self.beta_hat <= self.lower {
            return 0.0;
        }
        if self.beta_hat >= self.upper {
            return 1.0;
        }
        let num = log_tp_unchecked(self.lower, self.beta_hat, beta0, self.sd);
        let den = log_tp_unchecked(self.lower, self.upper, beta0, self.sd);
        if den == f64::NEG_INFINITY {
            // Both underflow; fall back on which side of the window β₀ sits.
            return if beta0 < self.lower { 1.0 } else { 0.0 };
        }
        (num - den).exp().clamp(0.0, 1.0)
    }

    /// Invert the pivot, clipping endpoints at `β̂ ± 50·sd` when the level set
    /// extends beyond them.
    pub fn interval(&self, alpha: f64, target: &TargetSpec) -> Result<IntervalEstimate> {
        check_alpha(alpha)?;
        let lo_c = self.beta_hat - CLIP_SES * self.sd;
        let hi_c = self.beta_hat + CLIP_SES * self.sd;
        let mut clipped = false;
        let mut solve = |t: f64| -> Result<f64> {
            if self.pivot(lo_c) <= t {
                clipped = true;
                return Ok(lo_c);
            }
            if self.pivot(hi_c) >= t {
                clipped = true;
                return Ok(hi_c);
            }
            invert_monotone(
                |b| Ok(self.pivot(b)),
                t,
                Interval {
                    lower: lo_c,
                    upper: hi_c,
                },
            )
        };
        let lower = solve(1.0 - alpha / 2.0)?;
        let upper = solve(alpha / 2.0)?;
        if !(lower < upper) {
            return Err(Error::NumericalDegeneracy(format!(
                "polyhedral interval is empty ({lower}, {upper})"
            )));
        }
        Ok(IntervalEstimate {
            target_label: feature_label(target.feature),
            feature: target.feature,
            method: Method::Polyhedral,
            level: 1.0 - alpha,
            estimate: self.beta_hat,
            lower,
            upper,
            clipped,
        })
    }
}

/// Truncated-Gaussian pivot for a non-randomized LASSO selection.
pub fn polyhedral_pivot(
    data: &Dataset,
    e0: &[usize],
    s0: &[f64],
    target: &TargetSpec,
    sigma: f64,
    lambda: f64,
    beta0: f64,
) -> Result<f64> {
    Ok(polyhedral_truncation(data, e0, s0, target, sigma, lambda)?.pivot(beta0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{build_target, ModelKind};
    use crate::numerics::gaussian_cdf;
    use crate::selection::solve_randomized_lasso;
    use nalgebra::DMatrix;

    #[test]
    fn single_feature_bound() {
        // One column with ‖X₁‖² = 2: selection with S = +1 needs X₁ᵀy > λ,
        // i.e. β̂ = X₁ᵀy/2 > λ/2.
        let data = Dataset::new(
            DVector::from_vec(vec![3.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            Some(1.0),
        )
        .unwrap();
        let out = solve_randomized_lasso(&data, 1.0, 0.0, &DVector::zeros(1)).unwrap();
        let t = build_target(&data, &out, ModelKind::Selected, 0).unwrap();
        let tr = polyhedral_truncation(&data, &out.selected, &out.signs, &t, 1.0, 1.0).unwrap();
        assert!((tr.lower - 0.5).abs() < 1e-14);
        assert_eq!(tr.upper, f64::INFINITY);
        assert!((tr.beta_hat - 2.0).abs() < 1e-14);
        let sd = (0.5f64).sqrt();
        let want = (gaussian_cdf((2.0 - 1.0) / sd).unwrap()
            - gaussian_cdf((0.5 - 1.0) / sd).unwrap())
            / (1.0 - gaussian_cdf((0.5 - 1.0) / sd).unwrap());
        assert!((tr.pivot(1.0) - want).abs() < 1e-12);
    }
}
