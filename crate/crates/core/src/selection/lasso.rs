use nalgebra::{DMatrix, DVector};

use super::{check_randomization, Algorithm, Dataset, LinearEventRep, SelectionOutcome};
use crate::error::{invalid, Error, Result};
use crate::linalg::{select_columns, select_entries, SpdFactor};

/// Coordinate-descent stopping rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoSettings {
    pub max_sweeps: usize,
    /// Stop once no coordinate moves by more than this in a full sweep.
    pub tol: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 50_000,
            tol: 1e-10,
        }
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Ridge term: zero when `XᵀX` is comfortably invertible, otherwise
/// `1e−4·mean(diag(XᵀX))`.
pub fn default_epsilon(x: &DMatrix<f64>) -> f64 {
    let (n, p) = x.shape();
    let gram = x.transpose() * x;
    if n > p && SpdFactor::new(&gram, "XᵀX").is_ok() {
        0.0
    } else {
        1e-4 * gram.trace() / p as f64
    }
}

/// `½‖y − Xb‖² + (ε/2)‖b‖² + λ‖b‖₁ − wᵀb`.
pub fn lasso_objective(
    data: &Dataset,
    lambda: f64,
    epsilon: f64,
    w: &DVector<f64>,
    b: &DVector<f64>,
) -> f64 {
    0.5 * (&data.y - &data.x * b).norm_squared()
        + 0.5 * epsilon * b.norm_squared()
        + lambda * b.lp_norm(1)
        - w.dot(b)
}

/// Largest violation of the stationarity and subgradient conditions at `b`.
pub fn lasso_kkt_residual(
    data: &Dataset,
    lambda: f64,
    epsilon: f64,
    w: &DVector<f64>,
    b: &DVector<f64>,
) -> f64 {
    let g = data.x.transpose() * (&data.y - &data.x * b) + w;
    let mut worst = 0.0f64;
    for j in 0..b.len() {
        let v = if b[j] != 0.0 {
            (g[j] - epsilon * b[j] - lambda * b[j].signum()).abs()
        } else {
            (g[j].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Coordinate descent for `½bᵀ(G + εI)b − zᵀb + λ‖b‖₁`.
pub(crate) fn lasso_cd(
    gram: &DMatrix<f64>,
    z: &DVector<f64>,
    lambda: f64,
    epsilon: f64,
    settings: &LassoSettings,
) -> Result<DVector<f64>> {
    let p = z.len();
    let mut b = DVector::zeros(p);
    let mut grad = z.clone();
    for j in 0..p {
        if gram[(j, j)] + epsilon <= 0.0 && z[j].abs() > lambda {
            return invalid(format!(
                "feature {j} has a zero column and ε = 0; the program is unbounded"
            ));
        }
    }
    let update = |j: usize, b: &mut DVector<f64>, grad: &mut DVector<f64>| -> f64 {
        let d = gram[(j, j)] + epsilon;
        if d <= 0.0 {
            return 0.0;
        }
        let old = b[j];
        let new = soft_threshold(grad[j] + gram[(j, j)] * old, lambda) / d;
        let delta = new - old;
        if delta != 0.0 {
            b[j] = new;
            grad.axpy(-delta, &gram.column(j), 1.0);
        }
        delta.abs()
    };

    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while sweeps < settings.max_sweeps {
        change = 0.0;
        for j in 0..p {
            change = change.max(update(j, &mut b, &mut grad));
        }
        sweeps += 1;
        if change <= settings.tol {
            return Ok(b);
        }
        let active: Vec<usize> = (0..p).filter(|&j| b[j] != 0.0).collect();
        while sweeps < settings.max_sweeps {
            let mut inner = 0.0f64;
            for &j in &active {
                inner = inner.max(update(j, &mut b, &mut grad));
            }
            sweeps += 1;
            if inner <= settings.tol {
                break;
            }
        }
    }
    Err(Error::Convergence {
        iterations: sweeps,
        residual: change,
    })
}

/// Re-solve the stationarity equations on the support of `b` exactly; keep
/// the result only if it reproduces the same signs and stays subgradient
/// feasible off the support.
pub(crate) fn polish(
    gram: &DMatrix<f64>,
    z: &DVector<f64>,
    lambda: f64,
    epsilon: f64,
    b: &DVector<f64>,
) -> Option<DVector<f64>> {
    let p = b.len();
    let support: Vec<usize> = (0..p).filter(|&j| b[j] != 0.0).collect();
    if support.is_empty() {
        return Some(b.clone());
    }
    let k = support.len();
    let mut a = DMatrix::from_fn(k, k, |i, j| gram[(support[i], support[j])]);
    for i in 0..k {
        a[(i, i)] += epsilon;
    }
    let rhs = DVector::from_fn(k, |i, _| z[support[i]] - lambda * b[support[i]].signum());
    let sol = SpdFactor::new(&a, "active Gram").ok()?.solve_vec(&rhs);
    let mut out = DVector::zeros(p);
    for (i, &j) in support.iter().enumerate() {
        if sol[i].signum() != b[j].signum() || sol[i] == 0.0 {
            return None;
        }
        out[j] = sol[i];
    }
    let grad = z - gram * &out;
    for j in 0..p {
        if out[j] == 0.0 && grad[j].abs() >= lambda {
            return None;
        }
    }
    Some(out)
}

/// Solve `min ½‖y − Xb‖² + (ε/2)‖b‖² + λ‖b‖₁ − wᵀb` and package the
/// active set, signs, active solution and inactive subgradient.
pub fn solve_randomized_lasso(
    data: &Dataset,
    lambda: f64,
    epsilon: f64,
    w: &DVector<f64>,
) -> Result<SelectionOutcome> {
    solve_randomized_lasso_with(data, lambda, epsilon, w, &LassoSettings::default())
}

pub(crate) fn solve_randomized_lasso_with(
    data: &Dataset,
    lambda: f64,
    epsilon: f64,
    w: &DVector<f64>,
    settings: &LassoSettings,
) -> Result<SelectionOutcome> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("λ must be positive, got {lambda}"));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return invalid(format!("ε must be nonnegative, got {epsilon}"));
    }
    check_randomization(w, data.p())?;
    let gram = data.gram();
    let z = data.x.transpose() * &data.y + w;
    let raw = lasso_cd(&gram, &z, lambda, epsilon, settings)?;
    let b = polish(&gram, &z, lambda, epsilon, &raw).unwrap_or(raw);
    let scale = 1.0 + z.amax();
    let residual = lasso_kkt_residual(data, lambda, epsilon, w, &b);
    if residual > 1e-8 * scale {
        return Err(Error::Convergence {
            iterations: settings.max_sweeps,
            residual,
        });
    }
    Ok(outcome_from_solution(data, lambda, w, b))
}

pub(crate) fn outcome_from_solution(
    data: &Dataset,
    lambda: f64,
    w: &DVector<f64>,
    b: DVector<f64>,
) -> SelectionOutcome {
    let p = data.p();
    let selected: Vec<usize> = (0..p).filter(|&j| b[j] != 0.0).collect();
    let signs: Vec<f64> = selected.iter().map(|&j| b[j].signum()).collect();
    let active = select_entries(&b, &selected);
    let mut out = SelectionOutcome {
        selected,
        active_solution: active,
        signs,
        inactive_subgradient: DVector::zeros(0),
        randomization: w.clone(),
        algorithm: Algorithm::Lasso,
        slope_clusters: None,
        coefficients: b,
    };
    let inactive = out.unselected(p);
    let resid = &data.y - select_columns(&data.x, &out.selected) * &out.active_solution;
    let xt_r = select_columns(&data.x, &inactive).transpose() * resid;
    out.inactive_subgradient =
        DVector::from_fn(inactive.len(), |i, _| (w[inactive[i]] + xt_r[i]) / lambda);
    out
}

fn active_first(outcome: &SelectionOutcome, p: usize) -> Vec<usize> {
    let mut order = outcome.selected.clone();
    order.extend(outcome.unselected(p));
    order
}

fn check_lasso_outcome(data: &Dataset, outcome: &SelectionOutcome, lambda: f64) -> Result<()> {
    if outcome.algorithm != Algorithm::Lasso {
        return invalid("event representation requires a LASSO outcome");
    }
    if !(lambda > 0.0) {
        return invalid(format!("λ must be positive, got {lambda}"));
    }
    let k = outcome.selected.len();
    if outcome.active_solution.len() != k
        || outcome.signs.len() != k
        || outcome.inactive_subgradient.len() != data.p() - k
    {
        return Err(Error::DimensionMismatch(
            "outcome blocks do not match the design".into(),
        ));
    }
    check_randomization(&outcome.randomization, data.p())
}

/// `P = −Xᵀ`, `Q = [X_EᵀX_E + εI; X_EcᵀX_E]`, `R = [0; λI]`, `T = (λS; 0)`,
/// with `L = −diag(S)` and `M = 0` acting on the active solution.
pub fn lasso_event_rep(
    data: &Dataset,
    outcome: &SelectionOutcome,
    lambda: f64,
    epsilon: f64,
) -> Result<LinearEventRep> {
    check_lasso_outcome(data, outcome, lambda)?;
    let p = data.p();
    let k = outcome.selected.len();
    let order = active_first(outcome, p);
    let xp = select_columns(&data.x, &order);
    let xe = select_columns(&data.x, &outcome.selected);
    let mut q = xp.transpose() * &xe;
    for i in 0..k {
        q[(i, i)] += epsilon;
    }
    let mut r = DMatrix::zeros(p, p - k);
    for i in 0..p - k {
        r[(k + i, i)] = lambda;
    }
    let mut t = DVector::zeros(p);
    for i in 0..k {
        t[i] = lambda * outcome.signs[i];
    }
    let l = DMatrix::from_diagonal(&DVector::from_iterator(k, outcome.signs.iter().map(|s| -s)));
    LinearEventRep {
        order,
        p: -xp.transpose(),
        q,
        r,
        t,
        l,
        m: DVector::zeros(k),
        stat: data.y.clone(),
        opt: outcome.active_solution.clone(),
        sub: outcome.inactive_subgradient.clone(),
    }
    .check(&outcome.randomization)
}

/// Representation that also treats the inactive subgradient as an
/// optimization variable: `V = (O, U)`, `Q = [[X_EᵀX_E + εI, 0], [X_EcᵀX_E, λI]]`,
/// no `R` block, and constraints `−S·O < 0`, `U < 1`, `−U < 1`.
pub fn lee_event_rep(
    data: &Dataset,
    outcome: &SelectionOutcome,
    lambda: f64,
    epsilon: f64,
) -> Result<LinearEventRep> {
    let base = lasso_event_rep(data, outcome, lambda, epsilon)?;
    let p = data.p();
    let k = outcome.selected.len();
    let u = p - k;
    let mut q = DMatrix::zeros(p, p);
    q.columns_mut(0, k).copy_from(&base.q);
    q.view_mut((k, k), (u, u)).copy_from(&base.r.rows(k, u));
    let mut l = DMatrix::zeros(k + 2 * u, p);
    l.view_mut((0, 0), (k, k)).copy_from(&base.l);
    for i in 0..u {
        l[(k + i, k + i)] = 1.0;
        l[(k + u + i, k + i)] = -1.0;
    }
    let mut m = DVector::zeros(k + 2 * u);
    m.rows_mut(k, 2 * u).fill(1.0);
    let mut opt = DVector::zeros(p);
    opt.rows_mut(0, k).copy_from(&base.opt);
    opt.rows_mut(k, u).copy_from(&base.sub);
    LinearEventRep {
        order: base.order,
        p: base.p,
        q,
        r: DMatrix::zeros(p, 0),
        t: base.t,
        l,
        m,
        stat: base.stat,
        opt,
        sub: DVector::zeros(0),
    }
    .check(&outcome.randomization)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            DVector::from_vec(vec![2.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            Some(1.0),
        )
        .unwrap()
    }

    #[test]
    fn toy_soft_threshold() {
        let w = DVector::from_vec(vec![0.5]);
        let out = solve_randomized_lasso(&toy(), 1.0, 0.0, &w).unwrap();
        assert_eq!(out.selected, vec![0]);
        assert_eq!(out.signs, vec![1.0]);
        assert!((out.active_solution[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn toy_below_threshold() {
        let data = Dataset::new(
            DVector::from_vec(vec![0.5, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            None,
        )
        .unwrap();
        let out = solve_randomized_lasso(&data, 1.0, 0.0, &DVector::zeros(1)).unwrap();
        assert!(out.selected.is_empty());
        assert!((out.inactive_subgradient[0] - 0.5).abs() < 1e-15);
        let rep = lasso_event_rep(&data, &out, 1.0, 0.0).unwrap();
        assert_eq!(rep.q.ncols(), 0);
        assert!(rep.reconstruction_residual(&out.randomization) < 1e-12);
    }

    #[test]
    fn toy_representation() {
        let data = toy();
        let w = DVector::from_vec(vec![0.5]);
        let out = solve_randomized_lasso(&data, 1.0, 0.0, &w).unwrap();
        let rep = lasso_event_rep(&data, &out, 1.0, 0.0).unwrap();
        assert!(((&rep.p * &rep.stat)[0] + 2.0).abs() < 1e-12);
        assert!(((&rep.q * &rep.opt)[0] - 1.5).abs() < 1e-12);
        assert_eq!(rep.t[0], 1.0);
        assert!(rep.reconstruction_residual(&w) < 1e-12);

        let lee = lee_event_rep(&data, &out, 1.0, 0.0).unwrap();
        assert_eq!(lee.l, DMatrix::from_element(1, 1, -1.0));
        assert_eq!(lee.m, DVector::zeros(1));
        assert!((lee.constraint_margin() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_column_without_ridge_is_rejected() {
        let data = Dataset::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
            None,
        )
        .unwrap();
        let w = DVector::from_vec(vec![0.0, 5.0]);
        assert!(solve_randomized_lasso(&data, 1.0, 0.0, &w).is_err());
        assert!(solve_randomized_lasso(&data, 1.0, 0.1, &w).is_ok());
    }
}
