#![allow(dead_code)]

use exact_selective::conditioning::{build_targets, EventContext, ModelKind, TargetSpec};
use exact_selective::selection::{
    lasso_event_rep, lee_event_rep, sample_randomization, solve_randomized_lasso, Dataset,
    LinearEventRep, RandomizationScheme, SelectionOutcome,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random regression data with a few nonzero coefficients.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, sigma: f64) -> Dataset {
    let x = gaussian_matrix(rng, n, p);
    let mut beta = DVector::zeros(p);
    for j in 0..p.min(2) {
        beta[j] = rng.random_range(0.5..2.0) * (n as f64).sqrt().recip() * 4.0;
    }
    let y = &x * beta + gaussian_vector(rng, n) * sigma;
    Dataset::new(y, x, Some(sigma)).unwrap()
}

/// A fitted randomized LASSO with nonempty selection.
pub struct Fitted {
    pub data: Dataset,
    pub outcome: SelectionOutcome,
    pub rep: LinearEventRep,
    pub omega: DMatrix<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    pub tau2: f64,
    pub targets: Vec<TargetSpec>,
}

impl Fitted {
    pub fn context(&self) -> EventContext {
        EventContext::new(&self.rep, &self.omega).unwrap()
    }
}

pub enum OmegaKind {
    Carving,
    Isotropic,
}

/// Draw instances until one selects at least one feature. `lee` switches to
/// the representation that also constrains the inactive subgradient.
pub fn fitted_instance(seed: u64, kind: OmegaKind, epsilon: f64, lee: bool) -> Fitted {
    let mut r = rng(seed);
    loop {
        let n = r.random_range(25..60);
        let p = r.random_range(3..9);
        let data = random_dataset(&mut r, n, p, 1.0);
        let tau2 = r.random_range(0.3..2.0);
        let scheme = match kind {
            OmegaKind::Carving => RandomizationScheme::carving(tau2).unwrap(),
            OmegaKind::Isotropic => RandomizationScheme::isotropic(tau2 * n as f64).unwrap(),
        };
        let w = sample_randomization(&scheme, &data.x, r.random()).unwrap();
        let z = data.x.transpose() * &data.y + &w;
        let lambda = z.amax() * r.random_range(0.3..0.8);
        let outcome = solve_randomized_lasso(&data, lambda, epsilon, &w).unwrap();
        if outcome.selected.is_empty() {
            continue;
        }
        let rep = if lee {
            lee_event_rep(&data, &outcome, lambda, epsilon).unwrap()
        } else {
            lasso_event_rep(&data, &outcome, lambda, epsilon).unwrap()
        };
        let omega = scheme.omega(&data.x).unwrap();
        let targets = build_targets(&data, &outcome.selected, ModelKind::Selected).unwrap();
        return Fitted {
            data,
            outcome,
            rep,
            omega,
            lambda,
            epsilon,
            tau2,
            targets,
        };
    }
}
