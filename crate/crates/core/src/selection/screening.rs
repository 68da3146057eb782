use nalgebra::{DMatrix, DVector};

use super::{check_randomization, Algorithm, Dataset, LinearEventRep, SelectionOutcome};
use crate::error::{invalid, Result};
use crate::linalg::select_entries;

/// Randomized marginal screening: keep `j` when `|X_jᵀy + w_j| > λ`.
///
/// The active variable is `O = z_E − λS` with `z = Xᵀy + w`, and `U = z_Ec`
/// keeps its sign so that `w = −Xᵀy + [I; 0]·O + [0; I]·U + (λS; 0)`.
pub fn solve_randomized_screening(
    data: &Dataset,
    threshold: f64,
    w: &DVector<f64>,
) -> Result<(SelectionOutcome, LinearEventRep)> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return invalid(format!("threshold must be positive, got {threshold}"));
    }
    let p = data.p();
    check_randomization(w, p)?;
    let z = data.x.transpose() * &data.y + w;
    let selected: Vec<usize> = (0..p).filter(|&j| z[j].abs() > threshold).collect();
    let k = selected.len();
    let signs: Vec<f64> = selected.iter().map(|&j| z[j].signum()).collect();
    let o = DVector::from_fn(k, |i, _| z[selected[i]] - threshold * signs[i]);

    let mut coefficients = DVector::zeros(p);
    for (i, &j) in selected.iter().enumerate() {
        coefficients[j] = o[i];
    }
    let mut outcome = SelectionOutcome {
        selected,
        active_solution: o,
        signs,
        inactive_subgradient: DVector::zeros(0),
        randomization: w.clone(),
        algorithm: Algorithm::Screening,
        slope_clusters: None,
        coefficients,
    };
    let inactive = outcome.unselected(p);
    outcome.inactive_subgradient = select_entries(&z, &inactive);

    let mut order = outcome.selected.clone();
    order.extend(inactive);
    let xp = data.x.select_columns(order.iter());
    let mut q = DMatrix::zeros(p, k);
    let mut r = DMatrix::zeros(p, p - k);
    let mut t = DVector::zeros(p);
    for i in 0..k {
        q[(i, i)] = 1.0;
        t[i] = threshold * outcome.signs[i];
    }
    for i in 0..p - k {
        r[(k + i, i)] = 1.0;
    }
    let l = DMatrix::from_diagonal(&DVector::from_iterator(k, outcome.signs.iter().map(|s| -s)));
    let rep = LinearEventRep {
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
    .check(w)?;
    Ok((outcome, rep))
}
