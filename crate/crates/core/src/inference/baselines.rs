use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_alpha, feature_label, IntervalEstimate, Method};
use crate::conditioning::ModelKind;
use crate::error::{invalid, Error, Result};
use crate::linalg::{ols, select_columns, select_rows};
use crate::numerics::normal_quantile_upper;
use crate::selection::{default_epsilon, solve_randomized_lasso, Dataset};

/// Noise sd: the known value if the dataset carries one, otherwise the
/// residual sd of `y` on all of `X` (full model) or on the selected columns
/// (selected model).
pub fn plug_in_sigma(data: &Dataset, selected: &[usize], model: ModelKind) -> Result<f64> {
    if let Some(s) = data.sigma {
        return Ok(s);
    }
    let n = data.n();
    let fit = match model {
        ModelKind::Full => {
            if n <= data.p() {
                let mean = data.y.mean();
                let var = data.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                return Ok(var.sqrt());
            }
            ols(&data.x, &data.y)?
        }
        ModelKind::Selected => {
            if selected.is_empty() {
                return Ok((data.y.norm_squared() / n as f64).sqrt());
            }
            ols(&select_columns(&data.x, selected), &data.y)?
        }
    };
    let s2 = fit.sigma2();
    if !(s2 > 0.0) {
        return Err(Error::NumericalDegeneracy(
            "residual variance is zero".into(),
        ));
    }
    Ok(s2.sqrt())
}

/// `κ·σ̂·√(2 log p)·(mean column norm)`.
pub fn lambda_theory(x: &DMatrix<f64>, sigma_hat: f64, kappa: f64) -> f64 {
    let p = x.ncols();
    let mean_norm = x.column_iter().map(|c| c.norm()).sum::<f64>() / p as f64;
    kappa * sigma_hat * (2.0 * (p.max(2) as f64).ln()).sqrt() * mean_norm
}

#[allow(clippy::too_many_arguments)]
fn z_intervals(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    selected: &[usize],
    model: ModelKind,
    sigma: Option<f64>,
    variance_factor: f64,
    alpha: f64,
    method: Method,
) -> Result<Vec<IntervalEstimate>> {
    let (x, cols): (DMatrix<f64>, Vec<usize>) = match model {
        ModelKind::Selected => (
            select_columns(design, selected),
            (0..selected.len()).collect(),
        ),
        ModelKind::Full => (design.clone(), selected.to_vec()),
    };
    let fit = ols(&x, response)?;
    let s2 = match sigma {
        Some(s) => s * s,
        None => fit.sigma2(),
    };
    let z = normal_quantile_upper(alpha)?;
    Ok(selected
        .iter()
        .zip(cols)
        .map(|(&feature, c)| {
            let est = fit.coef[c];
            let half = z * (s2 * variance_factor * fit.inv_gram_diag[c]).sqrt();
            IntervalEstimate {
                target_label: feature_label(feature),
                feature,
                method,
                level: 1.0 - alpha,
                estimate: est,
                lower: est - half,
                upper: est + half,
                clipped: false,
            }
        })
        .collect())
}

/// Result of selecting on one part of the data and inferring on the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitOutcome {
    pub selected: Vec<usize>,
    pub signs: Vec<f64>,
    /// Rows used for selection, in increasing order.
    pub train_rows: Vec<usize>,
    /// Rows used for inference, in increasing order.
    pub holdout_rows: Vec<usize>,
    pub intervals: Vec<IntervalEstimate>,
}

/// Select with a LASSO (penalty `ρλ`) on `round(ρn)` random rows and report
/// least-squares z-intervals from the remaining rows.
///
/// The held-out fit estimates the projection onto the selected columns of
/// the held-out design.
pub fn split_inference(
    data: &Dataset,
    rho: f64,
    lambda: f64,
    alpha: f64,
    model: ModelKind,
    seed: u64,
) -> Result<SplitOutcome> {
    check_alpha(alpha)?;
    if !(rho > 0.0 && rho < 1.0) {
        return invalid(format!("split fraction must lie in (0, 1), got {rho}"));
    }
    let n = data.n();
    let n1 = (rho * n as f64).round() as usize;
    if n1 < 2 || n1 + 2 > n {
        return invalid(format!("split leaves too few rows (n1 = {n1}, n = {n})"));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = rows[..n1].to_vec();
    let mut hold = rows[n1..].to_vec();
    train.sort_unstable();
    hold.sort_unstable();

    let x1 = select_rows(&data.x, &train);
    let y1 = DVector::from_iterator(n1, train.iter().map(|&i| data.y[i]));
    let eps = default_epsilon(&x1);
    let d1 = Dataset::new(y1, x1, data.sigma)?;
    let sel = solve_randomized_lasso(&d1, rho * lambda, eps, &DVector::zeros(data.p()))?;

    let intervals = if sel.selected.is_empty() {
        Vec::new()
    } else {
        let x2 = select_rows(&data.x, &hold);
        let y2 = DVector::from_iterator(hold.len(), hold.iter().map(|&i| data.y[i]));
        z_intervals(
            &x2,
            &y2,
            &sel.selected,
            model,
            data.sigma,
            1.0,
            alpha,
            Method::Split,
        )?
    };
    Ok(SplitOutcome {
        selected: sel.selected,
        signs: sel.signs,
        train_rows: train,
        holdout_rows: hold,
        intervals,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UvOutcome {
    pub selected: Vec<usize>,
    pub signs: Vec<f64>,
    /// Noise sd used to scale the synthetic perturbation.
    pub sigma: f64,
    pub intervals: Vec<IntervalEstimate>,
}

/// Perturb `y` with `w̃ ~ N(0, σ̂²f·I)`, select with a LASSO on `y + w̃`, and
/// infer by least squares on the independent response `y − w̃/f`.
pub fn uv_inference(
    data: &Dataset,
    f: f64,
    lambda: f64,
    alpha: f64,
    model: ModelKind,
    seed: u64,
) -> Result<UvOutcome> {
    check_alpha(alpha)?;
    if !(f > 0.0 && f.is_finite()) {
        return invalid(format!("f must be positive, got {f}"));
    }
    let sigma = plug_in_sigma(data, &[], ModelKind::Full)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = sigma * f.sqrt();
    let noise = DVector::from_fn(data.n(), |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    });
    let u = Dataset::new(&data.y + &noise, data.x.clone(), data.sigma)?;
    let eps = default_epsilon(&data.x);
    let sel = solve_randomized_lasso(&u, lambda, eps, &DVector::zeros(data.p()))?;
    let intervals = if sel.selected.is_empty() {
        Vec::new()
    } else {
        let v = &data.y - &noise / f;
        z_intervals(
            &data.x,
            &v,
            &sel.selected,
            model,
            Some(sigma),
            1.0 + 1.0 / f,
            alpha,
            Method::Uv,
        )?
    };
    Ok(UvOutcome {
        selected: sel.selected,
        signs: sel.signs,
        sigma,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theory_lambda_scales_with_sigma() {
        let x = DMatrix::from_fn(10, 4, |i, j| ((i + 2 * j) % 3) as f64 - 1.0);
        let a = lambda_theory(&x, 1.0, 1.0);
        assert!((lambda_theory(&x, 2.0, 1.0) - 2.0 * a).abs() < 1e-12);
        assert!(a > 0.0);
    }

    #[test]
    fn known_sigma_wins() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64);
        let d = Dataset::new(DVector::from_fn(10, |i, _| i as f64), x, Some(0.7)).unwrap();
        assert_eq!(plug_in_sigma(&d, &[0], ModelKind::Selected).unwrap(), 0.7);
    }
}
