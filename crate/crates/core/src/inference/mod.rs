//! Exact pivots for randomized selection, their inversion into confidence
//! intervals, and the baseline procedures used for comparison.

mod baselines;
mod polyhedral;

pub use baselines::{
    lambda_theory, plug_in_sigma, split_inference, uv_inference, SplitOutcome, UvOutcome,
};
pub use polyhedral::{polyhedral_pivot, polyhedral_truncation, PolyhedralTruncation};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditioning::{
    geometry_from_parts, sigma_j2, ConditioningGeometry, EventContext, ModelKind, TargetSpec,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{select_columns, SpdFactor};
use crate::numerics::{
    dlog_tp_dtheta, integrate_log_density, invert_monotone, log_normal_pdf, log_tp_unchecked,
    Interval, QuadratureSpec,
};
use crate::selection::{Dataset, SelectionOutcome};

/// Inference procedure that produced an interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Polyhedral,
    Split,
    Uv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Exact, Method::Polyhedral, Method::Split, Method::Uv];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Polyhedral => "polyhedral",
            Method::Split => "split",
            Method::Uv => "uv",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "polyhedral" => Ok(Method::Polyhedral),
            "split" => Ok(Method::Split),
            "uv" => Ok(Method::Uv),
            other => invalid(format!(
                "unknown method `{other}` (expected exact|polyhedral|split|uv)"
            )),
        }
    }
}

/// Constants of the exact pivot for one target.
///
/// The pivot integrates `φ((x − λ_j·β₀ − ζ_j)/σ_j) · TP(θ(x), ϑ)` with
/// `θ(x) = theta_intercept + theta_slope·x` over the truncation interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotParams {
    pub vartheta2: f64,
    pub sigma_j2: f64,
    pub lambda_j: f64,
    pub zeta_j: f64,
    pub theta_intercept: f64,
    pub theta_slope: f64,
    pub interval: Interval,
    pub beta_hat_j: f64,
    /// `Λ` at the nuisance statistic.
    pub big_lambda: f64,
    /// `Δ` at the nuisance statistic.
    pub delta: Vec<f64>,
}

impl PivotParams {
    pub fn vartheta(&self) -> f64 {
        self.vartheta2.sqrt()
    }

    pub fn sigma_j(&self) -> f64 {
        self.sigma_j2.sqrt()
    }

    pub fn theta_at(&self, x: f64) -> f64 {
        self.theta_intercept + self.theta_slope * x
    }
}

/// A two-sided confidence interval for one selected coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub target_label: String,
    pub feature: usize,
    pub method: Method,
    pub level: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Set when an endpoint was clipped instead of solved for.
    pub clipped: bool,
}

impl IntervalEstimate {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn excludes_zero(&self) -> bool {
        !self.covers(0.0)
    }
}

pub(crate) fn feature_label(feature: usize) -> String {
    format!("x{feature}")
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("α must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// `y − c·(cᵀy)/‖c‖²`, the part of the data independent of the target
/// estimate.
pub fn nuisance_statistic(y: &DVector<f64>, target: &TargetSpec) -> DVector<f64> {
    y - &target.contrast * (target.estimate(y) / target.norm2)
}

impl EventContext {
    /// `Λ = −(P^j)ᵀΩ⁻¹(P·v + R·u + T)` and `Δ = −ΘQᵀΩ⁻¹(P·v + R·u + T)`.
    pub fn lambda_delta(
        &self,
        geom: &ConditioningGeometry,
        v: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>)> {
        let rep = self.rep();
        if v.len() != rep.p.ncols() || u.len() != rep.r.ncols() {
            return Err(Error::DimensionMismatch(
                "data or subgradient length differs from the representation".into(),
            ));
        }
        let b = &rep.p * v + &rep.r * u + &rep.t;
        let omega_inv_b = self.omega_solve(&b);
        let big_lambda = -geom.pj.dot(&omega_inv_b);
        let delta = -(self.theta() * self.qt_omega_inv(&b));
        Ok((big_lambda, delta))
    }

    /// Pivot constants for `target`, plugging in noise sd `sigma`.
    pub fn pivot_params(
        &self,
        data: &Dataset,
        geom: &ConditioningGeometry,
        target: &TargetSpec,
        sigma: f64,
    ) -> Result<PivotParams> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("σ must be positive, got {sigma}"));
        }
        let nuisance = nuisance_statistic(&data.y, target);
        let (big_lambda, delta) = self.lambda_delta(geom, &nuisance, &self.rep().sub)?;
        let s2 = sigma_j2(geom, sigma, target.norm2)?;
        let r_delta = geom.rj.dot(&delta);
        let params = PivotParams {
            vartheta2: geom.vartheta2,
            sigma_j2: s2,
            lambda_j: s2 / (sigma * sigma * target.norm2),
            zeta_j: s2 * (big_lambda - r_delta),
            theta_intercept: r_delta,
            theta_slope: -geom.vartheta2,
            interval: geom.interval,
            beta_hat_j: target.estimate(&data.y),
            big_lambda,
            delta: delta.as_slice().to_vec(),
        };
        if [params.lambda_j, params.zeta_j, params.theta_intercept]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::NumericalDegeneracy(
                "pivot constants are not finite".into(),
            ));
        }
        Ok(params)
    }
}

/// Pivot constants for a carving randomization `Ω = τ²XᵀX` with `ε = 0`,
/// selected model, written in closed form.
pub fn carving_pivot_params(
    data: &Dataset,
    outcome: &SelectionOutcome,
    target: &TargetSpec,
    tau2: f64,
    sigma: f64,
    lambda: f64,
) -> Result<PivotParams> {
    if target.model != ModelKind::Selected {
        return invalid("closed-form carving constants need the selected model");
    }
    if !(tau2 > 0.0 && sigma > 0.0 && lambda > 0.0) {
        return invalid("τ², σ and λ must be positive");
    }
    let xe = select_columns(&data.x, &outcome.selected);
    let k = xe.ncols();
    let f = SpdFactor::new(&(xe.transpose() * &xe), "X_EᵀX_E")
        .map_err(|e| Error::SingularDesign(e.to_string()))?;
    let gram_inv = f.inverse();
    let j = target.j;
    let scale = tau2 * target.norm2;
    let mut rj = DVector::zeros(k);
    rj[j] = -1.0 / scale;
    let theta = &gram_inv * tau2;
    let signs = DVector::from_vec(outcome.signs.clone());
    let l = DMatrix::from_diagonal(&(-&signs));
    let geom = geometry_from_parts(
        theta,
        rj,
        DVector::zeros(0),
        0.0,
        &outcome.active_solution,
        &l,
        &DVector::zeros(k),
    )?;
    let intercept = lambda * (&gram_inv * &signs)[j] / scale;
    let delta =
        &gram_inv * (xe.transpose() * nuisance_statistic(&data.y, target) - &signs * lambda);
    Ok(PivotParams {
        vartheta2: 1.0 / scale,
        sigma_j2: sigma * sigma * target.norm2,
        lambda_j: 1.0,
        zeta_j: 0.0,
        theta_intercept: intercept,
        theta_slope: -1.0 / scale,
        interval: geom.interval,
        beta_hat_j: target.estimate(&data.y),
        big_lambda: intercept,
        delta: delta.as_slice().to_vec(),
    })
}

/// `log` of the pivot integrand at `x` for location `mean`.
fn log_integrand(params: &PivotParams, mean: f64, x: f64) -> f64 {
    let s = params.sigma_j();
    let z = (x - mean) / s;
    log_normal_pdf(z) - s.ln()
        + log_tp_unchecked(
            params.interval.lower,
            params.interval.upper,
            params.theta_at(x),
            params.vartheta(),
        )
}

/// Mode of the (log-concave) pivot integrand.
fn integrand_mode(params: &PivotParams, mean: f64) -> Result<f64> {
    let s = params.sigma_j();
    let vt = params.vartheta();
    let (lo, hi) = (params.interval.lower, params.interval.upper);
    if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
        return Ok(mean);
    }
    // s · d/dx log integrand, strictly decreasing in x.
    let slope = |x: f64| -> Result<f64> {
        let d = dlog_tp_dtheta(lo, hi, params.theta_at(x), vt);
        Ok(-(x - mean) / s + s * params.theta_slope * d)
    };
    invert_monotone(
        slope,
        0.0,
        Interval {
            lower: mean - s,
            upper: mean + s,
        },
    )
}

/// Exact pivot at `beta0`: the conditional probability that the target
/// estimate falls below its observed value. Decreasing in `beta0`.
pub fn exact_pivot(params: &PivotParams, beta0: f64, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    if !beta0.is_finite() {
        return invalid(format!("β₀ must be finite, got {beta0}"));
    }
    let s = params.sigma_j();
    if !(s > 0.0 && s.is_finite() && params.vartheta2 > 0.0) {
        return Err(Error::NumericalDegeneracy(
            "pivot scales must be positive".into(),
        ));
    }
    let mean = params.lambda_j * beta0 + params.zeta_j;
    let mode = integrand_mode(params, mean)?;
    let lo = mode - quad.half_width_sigmas * s;
    let hi = mode + quad.half_width_sigmas * s;
    let b = params.beta_hat_j;
    if b <= lo {
        return Ok(0.0);
    }
    if b >= hi {
        return Ok(1.0);
    }
    let f = |x: f64| log_integrand(params, mean, x);
    let degenerate = |e: Error| match e {
        Error::EmptyMass => Error::NumericalDegeneracy(format!(
            "pivot integrand vanishes on [{lo}, {hi}] (β₀ = {beta0})"
        )),
        other => other,
    };
    let denom = integrate_log_density(lo, hi, quad.n_points, f).map_err(degenerate)?;
    let numer = match integrate_log_density(lo, b, quad.n_points, f) {
        Ok(v) => v,
        Err(Error::EmptyMass) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    Ok((numer - denom).exp().clamp(0.0, 1.0))
}

/// Invert the exact pivot into a `1 − alpha` interval.
pub fn invert_pivot(params: &PivotParams, alpha: f64, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let half = 5.0 * params.sigma_j() / params.lambda_j.abs();
    let seed = Interval {
        lower: params.beta_hat_j - half,
        upper: params.beta_hat_j + half,
    };
    let g = |b: f64| exact_pivot(params, b, quad);
    let lower = invert_monotone(g, 1.0 - alpha / 2.0, seed)?;
    let upper = invert_monotone(g, alpha / 2.0, seed)?;
    if !(lower < upper) {
        return Err(Error::NumericalDegeneracy(format!(
            "inverted interval is empty ({lower}, {upper})"
        )));
    }
    Ok((lower, upper))
}

/// Exact intervals for a set of targets sharing one fitted event. Failures
/// are reported per target.
pub fn exact_intervals(
    data: &Dataset,
    ctx: &EventContext,
    targets: &[TargetSpec],
    sigma: f64,
    alpha: f64,
    quad: &QuadratureSpec,
) -> Vec<Result<IntervalEstimate>> {
    targets
        .iter()
        .map(|t| {
            let geom = ctx.geometry(t)?;
            let params = ctx.pivot_params(data, &geom, t, sigma)?;
            let (lower, upper) = invert_pivot(&params, alpha, quad)?;
            Ok(IntervalEstimate {
                target_label: feature_label(t.feature),
                feature: t.feature,
                method: Method::Exact,
                level: 1.0 - alpha,
                estimate: params.beta_hat_j,
                lower,
                upper,
                clipped: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::build_target;
    use crate::numerics::{gaussian_cdf, normal_quantile_upper};
    use crate::selection::{lasso_event_rep, solve_randomized_lasso, RandomizationScheme};

    fn toy_params() -> PivotParams {
        let data = Dataset::new(
            DVector::from_vec(vec![2.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            Some(1.0),
        )
        .unwrap();
        let w = DVector::from_vec(vec![0.5]);
        let out = solve_randomized_lasso(&data, 1.0, 0.0, &w).unwrap();
        let rep = lasso_event_rep(&data, &out, 1.0, 0.0).unwrap();
        let omega = RandomizationScheme::carving(1.0)
            .unwrap()
            .omega(&data.x)
            .unwrap();
        let ctx = EventContext::new(&rep, &omega).unwrap();
        let target = build_target(&data, &out, ModelKind::Selected, 0).unwrap();
        let geom = ctx.geometry(&target).unwrap();
        ctx.pivot_params(&data, &geom, &target, 1.0).unwrap()
    }

    #[test]
    fn toy_constants() {
        let p = toy_params();
        assert!((p.vartheta2 - 1.0).abs() < 1e-14);
        assert!((p.sigma_j2 - 1.0).abs() < 1e-14);
        assert!((p.lambda_j - 1.0).abs() < 1e-14);
        assert!(p.zeta_j.abs() < 1e-14);
        assert!((p.theta_intercept - 1.0).abs() < 1e-14);
        assert_eq!(p.theta_slope, -1.0);
        assert_eq!(p.beta_hat_j, 2.0);
    }

    #[test]
    fn untruncated_pivot_is_gaussian_cdf() {
        let mut p = toy_params();
        p.interval = Interval::real_line();
        let quad = QuadratureSpec::default();
        assert!((exact_pivot(&p, 2.0, &quad).unwrap() - 0.5).abs() < 1e-12);
        let v = exact_pivot(&p, 1.3, &quad).unwrap();
        assert!((v - gaussian_cdf(0.7).unwrap()).abs() < 1e-12);
        let (lo, hi) = invert_pivot(&p, 0.1, &quad).unwrap();
        let z = normal_quantile_upper(0.1).unwrap();
        assert!((lo - (2.0 - z)).abs() < 1e-6 && (hi - (2.0 + z)).abs() < 1e-6);
    }

    #[test]
    fn toy_interval_self_consistent() {
        let p = toy_params();
        let quad = QuadratureSpec::default();
        let (lo, hi) = invert_pivot(&p, 0.1, &quad).unwrap();
        assert!((exact_pivot(&p, lo, &quad).unwrap() - 0.95).abs() < 1e-6);
        assert!((exact_pivot(&p, hi, &quad).unwrap() - 0.05).abs() < 1e-6);
        let (lo2, hi2) = invert_pivot(&p, 0.05, &quad).unwrap();
        assert!(lo2 < lo && hi < hi2);
    }

    #[test]
    fn method_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
