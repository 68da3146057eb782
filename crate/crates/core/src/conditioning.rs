//! Reduction of a linear selection event to an interval constraint on one
//! linear statistic of the optimization variable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{select_columns, SpdFactor};
use crate::numerics::Interval;
use crate::selection::{Dataset, LinearEventRep, SelectionOutcome};

/// Which regression the inferential target refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Coefficients of the projection of the mean onto the selected columns.
    Selected,
    /// Entries of the full-design coefficient vector.
    Full,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selected" => Ok(Self::Selected),
            "full" => Ok(Self::Full),
            other => invalid(format!("unknown model `{other}` (expected selected|full)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Selected => "selected",
            Self::Full => "full",
        })
    }
}

/// Contrast `c` such that the target is `cᵀµ` and its estimate `cᵀy`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub model: ModelKind,
    /// Position within the selected set.
    pub j: usize,
    /// Column of the design the target refers to.
    pub feature: usize,
    pub contrast: DVector<f64>,
    pub norm2: f64,
}

impl TargetSpec {
    pub fn estimate(&self, y: &DVector<f64>) -> f64 {
        self.contrast.dot(y)
    }
}

/// Contrast for the `j`-th selected feature.
pub fn build_target(
    data: &Dataset,
    outcome: &SelectionOutcome,
    model: ModelKind,
    j: usize,
) -> Result<TargetSpec> {
    if j >= outcome.selected.len() {
        return invalid(format!(
            "target index {j} out of range for {} selected features",
            outcome.selected.len()
        ));
    }
    Ok(build_targets(data, &outcome.selected, model)?.swap_remove(j))
}

/// Contrasts for every feature in `selected`, sharing one factorization.
pub fn build_targets(
    data: &Dataset,
    selected: &[usize],
    model: ModelKind,
) -> Result<Vec<TargetSpec>> {
    if selected.is_empty() {
        return Ok(Vec::new());
    }
    let (design, cols): (DMatrix<f64>, Vec<usize>) = match model {
        ModelKind::Selected => (
            select_columns(&data.x, selected),
            (0..selected.len()).collect(),
        ),
        ModelKind::Full => (data.x.clone(), selected.to_vec()),
    };
    if design.nrows() < design.ncols() {
        return Err(Error::SingularDesign(format!(
            "{model} model has {} columns but only {} rows",
            design.ncols(),
            design.nrows()
        )));
    }
    let gram = design.transpose() * &design;
    let f = SpdFactor::new(&gram, "target Gram matrix")
        .map_err(|e| Error::SingularDesign(e.to_string()))?;
    let mut out = Vec::with_capacity(selected.len());
    for (j, &col) in cols.iter().enumerate() {
        let mut e = DVector::zeros(design.ncols());
        e[col] = 1.0;
        let contrast = &design * f.solve_vec(&e);
        let norm2 = contrast.norm_squared();
        out.push(TargetSpec {
            model,
            j,
            feature: selected[j],
            contrast,
            norm2,
        });
    }
    Ok(out)
}

/// Geometry of the conditioning event for one target.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningGeometry {
    /// `Θ = (QᵀΩ⁻¹Q)⁻¹`.
    pub theta: DMatrix<f64>,
    /// `P·c / ‖c‖²`.
    pub pj: DVector<f64>,
    /// `QᵀΩ⁻¹P^j`, the direction whose statistic is truncated.
    pub rj: DVector<f64>,
    /// `Θr / (rᵀΘr)`.
    pub qj: DVector<f64>,
    /// Component of the observed optimization variable orthogonal to `r`.
    pub a_obs: DVector<f64>,
    pub interval: Interval,
    pub s_minus: Vec<usize>,
    pub s_plus: Vec<usize>,
    /// Observed `rᵀO`.
    pub observed: f64,
    /// `rᵀΘr`.
    pub vartheta2: f64,
    /// `(P^j)ᵀΩ⁻¹P^j`.
    pub pj_omega_pj: f64,
}

/// Factorizations shared by every target of one fitted event.
#[derive(Clone, Debug)]
pub struct EventContext {
    rep: LinearEventRep,
    omega: SpdFactor,
    /// `Ω⁻¹Q`.
    omega_inv_q: DMatrix<f64>,
    theta: DMatrix<f64>,
    /// Diagonal jitter that had to be added to `Ω` (zero if none).
    pub jitter: f64,
}

/// Factor `Ω`, adding `1e−8·trace(Ω)/p` to the diagonal only if the plain
/// factorization fails or is ill-conditioned.
pub fn factor_omega(omega: &DMatrix<f64>) -> Result<(SpdFactor, f64)> {
    match SpdFactor::new(omega, "Ω") {
        Ok(f) => Ok((f, 0.0)),
        Err(_) => {
            let p = omega.nrows().max(1);
            let jitter = 1e-8 * omega.trace() / p as f64;
            let mut m = omega.clone();
            for i in 0..omega.nrows() {
                m[(i, i)] += jitter;
            }
            Ok((SpdFactor::new(&m, "Ω with jitter")?, jitter))
        }
    }
}

impl EventContext {
    pub fn new(rep: &LinearEventRep, omega: &DMatrix<f64>) -> Result<Self> {
        let p = rep.order.len();
        if omega.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "Ω is {}×{} but the event has {p} rows",
                omega.nrows(),
                omega.ncols()
            )));
        }
        // Ω is indexed by original features; the event rows are permuted.
        let permuted = DMatrix::from_fn(p, p, |i, j| omega[(rep.order[i], rep.order[j])]);
        let (factor, jitter) = factor_omega(&permuted)?;
        let omega_inv_q = factor.solve_mat(&rep.q);
        let q = rep.q.ncols();
        let theta = if q == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let prec = rep.q.transpose() * &omega_inv_q;
            let prec = (&prec + prec.transpose()) * 0.5;
            let f = SpdFactor::new(&prec, "QᵀΩ⁻¹Q")?;
            let t = f.inverse();
            (&t + t.transpose()) * 0.5
        };
        Ok(Self {
            rep: rep.clone(),
            omega: factor,
            omega_inv_q,
            theta,
            jitter,
        })
    }

    pub fn rep(&self) -> &LinearEventRep {
        &self.rep
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// `Ω⁻¹v` in the permuted row order.
    pub fn omega_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.omega.solve_vec(v)
    }

    /// `QᵀΩ⁻¹v`.
    pub fn qt_omega_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.omega_inv_q.transpose() * v
    }

    pub fn geometry(&self, target: &TargetSpec) -> Result<ConditioningGeometry> {
        let rep = &self.rep;
        if target.contrast.len() != rep.p.ncols() {
            return Err(Error::DimensionMismatch(
                "contrast length differs from the data statistic".into(),
            ));
        }
        if rep.q.ncols() == 0 {
            return invalid("no active variables to condition on");
        }
        let pj = &rep.p * &target.contrast / target.norm2;
        let omega_inv_pj = self.omega.solve_vec(&pj);
        let rj = rep.q.transpose() * &omega_inv_pj;
        let pj_omega_pj = pj.dot(&omega_inv_pj);
        geometry_from_parts(
            self.theta.clone(),
            rj,
            pj,
            pj_omega_pj,
            &rep.opt,
            &rep.l,
            &rep.m,
        )
    }
}

/// Interval and decomposition for a given `Θ` and direction `r`.
pub fn geometry_from_parts(
    theta: DMatrix<f64>,
    rj: DVector<f64>,
    pj: DVector<f64>,
    pj_omega_pj: f64,
    opt: &DVector<f64>,
    l: &DMatrix<f64>,
    m: &DVector<f64>,
) -> Result<ConditioningGeometry> {
    let theta_r = &theta * &rj;
    let vartheta2 = rj.dot(&theta_r);
    if !(vartheta2 > 0.0 && vartheta2.is_finite()) {
        return Err(Error::NumericalDegeneracy(format!(
            "rᵀΘr = {vartheta2:e} is not positive"
        )));
    }
    let qj = &theta_r / vartheta2;
    let observed = rj.dot(opt);
    let a_obs = opt - &qj * observed;
    let theta_r_norm = theta_r.norm();

    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut s_minus, mut s_plus) = (Vec::new(), Vec::new());
    for k in 0..l.nrows() {
        let row = l.row(k);
        let coef = row.dot(&theta_r.transpose());
        let slack = m[k] - row.dot(&opt.transpose());
        if coef.abs() <= 1e-12 * row.norm() * theta_r_norm {
            let side = m[k] - row.dot(&a_obs.transpose());
            if !(side > 0.0) {
                return Err(Error::GeometryInconsistency(format!(
                    "constraint {k} is unaffected by the target direction but fails (slack {side:e})"
                )));
            }
            continue;
        }
        // M_k − L_k·A over L_k·Q^j, written relative to the observed value.
        let bound = observed + slack * vartheta2 / coef;
        if coef > 0.0 {
            s_plus.push(k);
            upper = upper.min(bound);
        } else {
            s_minus.push(k);
            lower = lower.max(bound);
        }
    }
    if !(lower < observed && observed < upper) {
        return Err(Error::GeometryInconsistency(format!(
            "observed statistic {observed} outside ({lower}, {upper})"
        )));
    }
    Ok(ConditioningGeometry {
        theta,
        pj,
        rj,
        qj,
        a_obs,
        interval: Interval { lower, upper },
        s_minus,
        s_plus,
        observed,
        vartheta2,
        pj_omega_pj,
    })
}

/// Convenience wrapper building a fresh [`EventContext`].
pub fn build_geometry(
    rep: &LinearEventRep,
    omega: &DMatrix<f64>,
    target: &TargetSpec,
) -> Result<ConditioningGeometry> {
    EventContext::new(rep, omega)?.geometry(target)
}

/// `(I − Θηηᵀ/(ηᵀΘη))·O`, the part of `O` not explained by `ηᵀO`.
pub fn a_eta(o: &DVector<f64>, theta: &DMatrix<f64>, eta: &DVector<f64>) -> Result<DVector<f64>> {
    if eta.len() != o.len() || theta.shape() != (o.len(), o.len()) {
        return Err(Error::DimensionMismatch("η, Θ and O must agree".into()));
    }
    if eta.iter().all(|&v| v == 0.0) {
        return invalid("η must be nonzero");
    }
    let theta_eta = theta * eta;
    let denom = eta.dot(&theta_eta);
    if !(denom > 0.0) {
        return invalid(format!("ηᵀΘη = {denom:e} is not positive"));
    }
    Ok(o - theta_eta * (eta.dot(o) / denom))
}

/// Inverse of `(σ^j)²`: `1/(σ²‖c‖²) + (P^j)ᵀΩ⁻¹P^j − rᵀΘr`.
pub(crate) fn sigma_j2(geom: &ConditioningGeometry, sigma: f64, norm2: f64) -> Result<f64> {
    let prec = 1.0 / (sigma * sigma * norm2) + geom.pj_omega_pj - geom.vartheta2;
    if !(prec > 0.0 && prec.is_finite()) {
        return Err(Error::NumericalDegeneracy(format!(
            "conditional precision of the target estimate is {prec:e}"
        )));
    }
    Ok(1.0 / prec)
}

impl EventContext {
    /// Variance of the target estimate given `U`, the nuisance statistic and
    /// `A^η`, ignoring the truncation.
    pub fn conditional_variance_given_eta(
        &self,
        target: &TargetSpec,
        sigma: f64,
        eta: &DVector<f64>,
    ) -> Result<f64> {
        if !(sigma > 0.0) {
            return invalid(format!("σ must be positive, got {sigma}"));
        }
        let geom = self.geometry(target)?;
        let q = geom.rj.len();
        if eta.len() != q {
            return Err(Error::DimensionMismatch(format!(
                "η has length {} but the active block has {q}",
                eta.len()
            )));
        }
        if eta.iter().all(|&v| v == 0.0) {
            return invalid("η must be nonzero");
        }
        let s2 = sigma_j2(&geom, sigma, target.norm2)?;
        if q == 1 {
            return Ok(s2);
        }
        let theta = &geom.theta;
        let theta_r = theta * &geom.rj;
        let cov_ob = &theta_r * (-s2);
        let var_o = theta + &theta_r * theta_r.transpose() * s2;

        let theta_eta = theta * eta;
        let denom = eta.dot(&theta_eta);
        if !(denom > 0.0) {
            return invalid(format!("ηᵀΘη = {denom:e} is not positive"));
        }
        let proj = DMatrix::identity(q, q) - &theta_eta * eta.transpose() / denom;
        let drop = eta.iamax();
        let keep: Vec<usize> = (0..q).filter(|&k| k != drop).collect();
        let basis = proj.select_rows(keep.iter());
        let c = &basis * cov_ob;
        let v = &basis * var_o * basis.transpose();
        let v = (&v + v.transpose()) * 0.5;
        let f = SpdFactor::new(&v, "Var(A^η)")?;
        Ok(s2 - c.dot(&f.solve_vec(&c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::{lasso_event_rep, solve_randomized_lasso, RandomizationScheme};

    #[test]
    fn toy_geometry() {
        let data = Dataset::new(
            DVector::from_vec(vec![2.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            Some(1.0),
        )
        .unwrap();
        let w = DVector::from_vec(vec![0.5]);
        let out = solve_randomized_lasso(&data, 1.0, 0.0, &w).unwrap();
        let target = build_target(&data, &out, ModelKind::Selected, 0).unwrap();
        assert_eq!(target.contrast, DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(target.norm2, 1.0);
        let rep = lasso_event_rep(&data, &out, 1.0, 0.0).unwrap();
        let omega = RandomizationScheme::carving(1.0)
            .unwrap()
            .omega(&data.x)
            .unwrap();
        let g = build_geometry(&rep, &omega, &target).unwrap();
        assert!((g.theta[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((g.rj[0] + 1.0).abs() < 1e-14);
        assert!((g.qj[0] + 1.0).abs() < 1e-14);
        assert!(g.a_obs[0].abs() < 1e-14);
        assert_eq!(g.interval.lower, f64::NEG_INFINITY);
        assert!(g.interval.upper.abs() < 1e-14);
        assert!((g.observed + 1.5).abs() < 1e-14);
    }

    #[test]
    fn a_eta_coordinate_projection() {
        let o = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        let eta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let a = a_eta(&o, &DMatrix::identity(3, 3), &eta).unwrap();
        assert_eq!(a, DVector::from_vec(vec![0.0, -1.0, 2.0]));
        assert!(a_eta(&o, &DMatrix::identity(3, 3), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn model_kind_parses() {
        assert_eq!("full".parse::<ModelKind>().unwrap(), ModelKind::Full);
        assert!("other".parse::<ModelKind>().is_err());
    }
}
