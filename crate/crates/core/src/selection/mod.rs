//! Randomized selection programs and their linear KKT event representations.
//!
//! Every solver returns a [`SelectionOutcome`] together with enough structure
//! to build a [`LinearEventRep`]: matrices `P, Q, R, T` with
//! `w = P·d + Q·O + R·U + T` at the observed solution, and a constraint pair
//! `(L, M)` such that the selection event is `{L·O < M}`.

mod bootstrap;
mod lasso;
mod randomization;
mod screening;
mod slope;

pub use bootstrap::{bootstrap_reporting_problem, BootstrapProblem};
pub use lasso::{
    default_epsilon, lasso_event_rep, lasso_kkt_residual, lasso_objective, lee_event_rep,
    solve_randomized_lasso, LassoSettings,
};
pub use randomization::{sample_randomization, tau2_from_split, RandomizationScheme, SchemeKind};
pub use screening::solve_randomized_screening;
pub use slope::{
    slope_kkt_residual, slope_objective, solve_randomized_slope, sorted_l1_prox, SlopeSettings,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Regression data: response `y`, fixed design `x`, optional known noise sd.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub sigma: Option<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, sigma: Option<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "y has {} entries but X has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if y.len() < 2 {
            return invalid(format!("need at least 2 observations, got {}", y.len()));
        }
        if x.ncols() == 0 {
            return invalid("design has no columns");
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return invalid("data contain NaN or infinite entries");
        }
        if let Some(s) = sigma {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("noise sd must be positive, got {s}"));
            }
        }
        Ok(Self { y, x, sigma })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.x.transpose() * &self.x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lasso,
    Screening,
    Slope,
}

/// Cluster structure of a sorted-ℓ1 solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeClusters {
    /// Feature indices in each nonzero cluster, clusters ordered by
    /// decreasing magnitude.
    pub members: Vec<Vec<usize>>,
    pub magnitudes: Vec<f64>,
    /// The feature of each cluster whose subgradient entry is fixed by the
    /// others; it is carried in `T` rather than `U`.
    pub dropped: Vec<usize>,
    /// Subgradient values at the dropped features.
    pub dropped_subgradient: Vec<f64>,
}

/// Observed result of a randomized selection program.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionOutcome {
    /// Selected features, in the order used for the active block.
    pub selected: Vec<usize>,
    /// Active optimization variable `O` (one entry per selected feature, or
    /// one per cluster for SLOPE).
    pub active_solution: DVector<f64>,
    /// Signs of the selected features, aligned with `selected`.
    pub signs: Vec<f64>,
    /// Inactive subgradient `U`, aligned with the rows after the active block.
    pub inactive_subgradient: DVector<f64>,
    pub randomization: DVector<f64>,
    pub algorithm: Algorithm,
    pub slope_clusters: Option<SlopeClusters>,
    /// Full-length coefficient vector of the solution.
    pub coefficients: DVector<f64>,
}

impl SelectionOutcome {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Features that were not selected, in increasing order.
    pub fn unselected(&self, p: usize) -> Vec<usize> {
        let mut mask = vec![false; p];
        for &j in &self.selected {
            mask[j] = true;
        }
        (0..p).filter(|&j| !mask[j]).collect()
    }
}

/// Linear representation `w = P·stat + Q·opt + R·sub + T` of a selection
/// event together with the constraint `L·opt < M`.
///
/// Rows of `P, Q, R, T` follow `order`: row `k` corresponds to feature
/// `order[k]` of the original randomization vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEventRep {
    pub order: Vec<usize>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub t: DVector<f64>,
    pub l: DMatrix<f64>,
    pub m: DVector<f64>,
    pub stat: DVector<f64>,
    /// Observed optimization variable the constraints act on.
    pub opt: DVector<f64>,
    /// Observed inactive statistic held fixed by conditioning.
    pub sub: DVector<f64>,
}

impl LinearEventRep {
    /// Reorder a length-`p` vector to match the rows of the representation.
    pub fn permute(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.order.len(), self.order.iter().map(|&i| v[i]))
    }

    /// `P·stat + Q·opt + R·sub + T`, in permuted row order.
    pub fn reconstruct(&self) -> DVector<f64> {
        self.affine_part(&self.stat) + &self.q * &self.opt
    }

    /// `P·v + R·sub + T` for an arbitrary data vector `v`.
    pub fn affine_part(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.p * v + &self.r * &self.sub + &self.t
    }

    /// ∞-norm distance between `w` and the reconstruction.
    pub fn reconstruction_residual(&self, w: &DVector<f64>) -> f64 {
        (self.permute(w) - self.reconstruct()).amax()
    }

    /// Smallest entry of `M − L·opt`; positive when the event holds strictly.
    pub fn constraint_margin(&self) -> f64 {
        self.margin_at(&self.opt)
    }

    pub fn margin_at(&self, opt: &DVector<f64>) -> f64 {
        (&self.m - &self.l * opt)
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check(self, w: &DVector<f64>) -> Result<Self> {
        let scale = 1.0 + w.amax();
        let residual = self.reconstruction_residual(w);
        if !(residual <= 1e-6 * scale) {
            return Err(Error::InconsistentOutcome { residual });
        }
        let margin = self.constraint_margin();
        if !(margin > 0.0) {
            return Err(Error::GeometryInconsistency(format!(
                "observed solution violates its own event (margin {margin:e})"
            )));
        }
        Ok(self)
    }
}

pub(crate) fn check_randomization(w: &DVector<f64>, p: usize) -> Result<()> {
    if w.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "randomization has length {} but the design has {p} columns",
            w.len()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return invalid("randomization contains non-finite entries");
    }
    Ok(())
}
