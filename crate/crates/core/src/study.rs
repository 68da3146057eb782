//! Monte-Carlo harness: simulated designs and responses, the competing
//! inference methods, per-replicate metrics and their aggregation.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::{build_targets, EventContext, ModelKind};
use crate::error::{invalid, Error, Result};
use crate::inference::{
    exact_intervals, exact_pivot, lambda_theory, plug_in_sigma, polyhedral_truncation,
    split_inference, uv_inference, IntervalEstimate, Method,
};
use crate::linalg::{select_columns, select_rows, SpdFactor};
use crate::numerics::{ks_uniform, KsResult, QuadratureSpec};
use crate::selection::{
    default_epsilon, lasso_event_rep, sample_randomization, solve_randomized_lasso,
    tau2_from_split, Dataset, RandomizationScheme,
};

/// Signal fractions of the five standard signal regimes.
pub const SIGNAL_REGIMES: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];

/// Signal fraction for regime `k` in `1..=5`.
pub fn regime_fraction(k: usize) -> Result<f64> {
    if !(1..=5).contains(&k) {
        return invalid(format!("signal regime must be 1..=5, got {k}"));
    }
    Ok(SIGNAL_REGIMES[k - 1])
}

/// How the LASSO penalty is chosen in each replicate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaRule {
    Fixed(f64),
    /// Multiplier `κ` of `σ̂·√(2 log p)·(mean column norm)`.
    Theory(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub sparsity: usize,
    pub signal_fraction: f64,
    pub rho: f64,
    pub corr: f64,
    pub sigma2: f64,
    pub n_reps: usize,
    pub methods: Vec<Method>,
    pub model: ModelKind,
    pub lambda_rule: LambdaRule,
    pub alpha: f64,
    pub seed: u64,
    /// Use the true noise level instead of plug-in estimates.
    pub known_sigma: bool,
    pub quad_points: usize,
    pub quad_width: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 300,
            p: 100,
            sparsity: 5,
            signal_fraction: 1.0,
            rho: 0.8,
            corr: 0.9,
            sigma2: 3.0,
            n_reps: 300,
            methods: Method::ALL.to_vec(),
            model: ModelKind::Selected,
            lambda_rule: LambdaRule::Theory(1.0),
            alpha: 0.1,
            seed: 2024,
            known_sigma: false,
            quad_points: QuadratureSpec::default().n_points,
            quad_width: QuadratureSpec::default().half_width_sigmas,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.p == 0 {
            return invalid(format!(
                "need n ≥ 4 and p ≥ 1 (n = {}, p = {})",
                self.n, self.p
            ));
        }
        if self.sparsity > self.p {
            return invalid(format!("sparsity {} exceeds p = {}", self.sparsity, self.p));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return invalid(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.corr.abs() < 1.0) {
            return invalid(format!("corr must satisfy |corr| < 1, got {}", self.corr));
        }
        if !(self.sigma2 > 0.0 && self.signal_fraction >= 0.0) {
            return invalid("sigma2 must be positive and signal_fraction nonnegative");
        }
        if self.n_reps == 0 {
            return invalid("n_reps must be at least 1");
        }
        if self.methods.is_empty() {
            return invalid("at least one method is required");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        match self.lambda_rule {
            LambdaRule::Fixed(l) | LambdaRule::Theory(l) if !(l > 0.0 && l.is_finite()) => {
                return invalid(format!("lambda rule value must be positive, got {l}"))
            }
            _ => {}
        }
        self.quad()?;
        Ok(())
    }

    pub fn quad(&self) -> Result<QuadratureSpec> {
        QuadratureSpec::new(self.quad_width, self.quad_points)
    }

    fn n1(&self) -> usize {
        ((self.rho * self.n as f64).round() as usize).clamp(1, self.n - 1)
    }
}

/// Independent seed for replicate `rep` and a purpose tag.
pub fn derive_seed(master: u64, rep: usize, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((rep as u64) << 8 | purpose);
    rng.next_u64()
}

const SEED_DESIGN: u64 = 1;
const SEED_RESPONSE: u64 = 2;
const SEED_RANDOMIZATION: u64 = 3;
const SEED_SPLIT: u64 = 4;
const SEED_UV: u64 = 5;

/// `Σ_ij = corr^|i−j|`.
pub fn ar1_covariance(p: usize, corr: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| corr.powi((i as i32 - j as i32).abs()))
}

/// Lower Cholesky factor of [`ar1_covariance`], in closed form.
pub fn ar1_cholesky(p: usize, corr: f64) -> DMatrix<f64> {
    let c = (1.0 - corr * corr).sqrt();
    DMatrix::from_fn(p, p, |i, j| match j {
        _ if j > i => 0.0,
        0 => corr.powi(i as i32),
        _ => c * corr.powi((i - j) as i32),
    })
}

/// Rows i.i.d. `N(0, Σ)` with AR(1) correlation `corr`.
pub fn generate_design(n: usize, p: usize, corr: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(corr.abs() < 1.0) {
        return invalid(format!("corr must satisfy |corr| < 1, got {corr}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - corr * corr).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = if j == 0 { z } else { corr * prev + c * z };
            x[(i, j)] = v;
            prev = v;
        }
    }
    Ok(x)
}

/// `y = X_{E*}β_{E*} + ε` with every nonzero coefficient equal to
/// `√(2f·log p)` and `ε ~ N(0, σ²I)`.
pub fn generate_response(
    x: &DMatrix<f64>,
    support: &[usize],
    f: f64,
    sigma2: f64,
    seed: u64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, p) = x.shape();
    if support.len() > p || support.iter().any(|&j| j >= p) {
        return invalid("support must be a subset of the columns");
    }
    if !(sigma2 >= 0.0 && f >= 0.0) {
        return invalid("σ² and f must be nonnegative");
    }
    let magnitude = (2.0 * f * (p as f64).ln()).sqrt();
    let mut beta = DVector::zeros(p);
    for &j in support {
        beta[j] = magnitude;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = sigma2.sqrt();
    let noise = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sd * z
    });
    Ok((x * &beta + noise, beta))
}

/// Random support of size `k`, sorted.
pub fn draw_support(p: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut s = idx[..k.min(p)].to_vec();
    s.sort_unstable();
    s
}

/// `TP / (TP + ½(FP + FN))`; two empty sets score 1.
pub fn f1_score(selected: &[usize], truth: &[usize]) -> f64 {
    let e: BTreeSet<usize> = selected.iter().copied().collect();
    let t: BTreeSet<usize> = truth.iter().copied().collect();
    if e.is_empty() && t.is_empty() {
        return 1.0;
    }
    let tp = e.intersection(&t).count() as f64;
    let fp = e.difference(&t).count() as f64;
    let fn_ = t.difference(&e).count() as f64;
    tp / (tp + 0.5 * (fp + fn_))
}

/// Fraction of intervals missing their target, over `max(#intervals, 1)`.
pub fn fcr(intervals: &[IntervalEstimate], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return invalid(format!(
            "{} intervals but {} targets",
            intervals.len(),
            truths.len()
        ));
    }
    let misses = intervals
        .iter()
        .zip(truths)
        .filter(|(i, &t)| !i.covers(t))
        .count();
    Ok(misses as f64 / intervals.len().max(1) as f64)
}

/// Population value of the selected coefficients.
pub fn true_projected_target(
    x: &DMatrix<f64>,
    selected: &[usize],
    beta: &DVector<f64>,
    model: ModelKind,
) -> Result<DVector<f64>> {
    match model {
        ModelKind::Full => Ok(DVector::from_iterator(
            selected.len(),
            selected.iter().map(|&j| beta[j]),
        )),
        ModelKind::Selected => {
            if selected.is_empty() {
                return Ok(DVector::zeros(0));
            }
            let xe = select_columns(x, selected);
            let f = SpdFactor::new(&(xe.transpose() * &xe), "X_EᵀX_E")
                .map_err(|e| Error::SingularDesign(e.to_string()))?;
            Ok(f.solve_vec(&(xe.transpose() * (x * beta))))
        }
    }
}

/// One simulated dataset with its ground truth.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub data: Dataset,
    pub beta: DVector<f64>,
    pub support: Vec<usize>,
}

pub fn simulate_replicate(config: &SimConfig, rep: usize) -> Result<SimulatedData> {
    let x = generate_design(
        config.n,
        config.p,
        config.corr,
        derive_seed(config.seed, rep, SEED_DESIGN),
    )?;
    let rs = derive_seed(config.seed, rep, SEED_RESPONSE);
    let support = draw_support(config.p, config.sparsity, rs ^ 0x5eed);
    let (y, beta) = generate_response(&x, &support, config.signal_fraction, config.sigma2, rs)?;
    let sigma = config.known_sigma.then(|| config.sigma2.sqrt());
    Ok(SimulatedData {
        data: Dataset::new(y, x, sigma)?,
        beta,
        support,
    })
}

/// One method's intervals in one replicate, with the targets they aim at.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub selected: Vec<usize>,
    pub intervals: Vec<IntervalEstimate>,
    pub truths: Vec<f64>,
    /// Targets whose interval could not be computed.
    pub interval_failures: usize,
}

fn lambda_for(config: &SimConfig, data: &Dataset) -> Result<f64> {
    match config.lambda_rule {
        LambdaRule::Fixed(l) => Ok(l),
        LambdaRule::Theory(k) => {
            let s = plug_in_sigma(data, &[], ModelKind::Full)?;
            Ok(lambda_theory(&data.x, s, k))
        }
    }
}

fn collect(
    method: Method,
    selected: Vec<usize>,
    results: Vec<Result<IntervalEstimate>>,
    truth: &DVector<f64>,
) -> MethodRun {
    let mut run = MethodRun {
        method,
        selected,
        intervals: Vec::new(),
        truths: Vec::new(),
        interval_failures: 0,
    };
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(i) => {
                run.intervals.push(i);
                run.truths.push(truth[k]);
            }
            Err(_) => run.interval_failures += 1,
        }
    }
    run
}

/// Randomized (carving) LASSO followed by exact intervals.
pub fn run_exact(config: &SimConfig, sim: &SimulatedData, rep: usize) -> Result<MethodRun> {
    let data = &sim.data;
    let lambda = lambda_for(config, data)?;
    let sigma_full = plug_in_sigma(data, &[], ModelKind::Full)?;
    let tau2 = tau2_from_split(sigma_full * sigma_full, config.n, config.n1())?;
    let scheme = RandomizationScheme::carving(tau2)?;
    let w = sample_randomization(
        &scheme,
        &data.x,
        derive_seed(config.seed, rep, SEED_RANDOMIZATION),
    )?;
    let eps = default_epsilon(&data.x);
    let outcome = solve_randomized_lasso(data, lambda, eps, &w)?;
    if outcome.is_empty() {
        return Ok(collect(
            Method::Exact,
            Vec::new(),
            Vec::new(),
            &DVector::zeros(0),
        ));
    }
    let rep_ev = lasso_event_rep(data, &outcome, lambda, eps)?;
    let omega = scheme.omega(&data.x)?;
    let ctx = EventContext::new(&rep_ev, &omega)?;
    let targets = build_targets(data, &outcome.selected, config.model)?;
    let sigma = plug_in_sigma(data, &outcome.selected, config.model)?;
    let truth = true_projected_target(&data.x, &outcome.selected, &sim.beta, config.model)?;
    let results = exact_intervals(data, &ctx, &targets, sigma, config.alpha, &config.quad()?);
    Ok(collect(Method::Exact, outcome.selected, results, &truth))
}

/// Non-randomized LASSO with truncated-Gaussian intervals.
pub fn run_polyhedral(config: &SimConfig, sim: &SimulatedData) -> Result<MethodRun> {
    let data = &sim.data;
    if default_epsilon(&data.x) != 0.0 {
        return Err(Error::SingularDesign(
            "polyhedral intervals need a full-rank design".into(),
        ));
    }
    let lambda = lambda_for(config, data)?;
    let outcome = solve_randomized_lasso(data, lambda, 0.0, &DVector::zeros(data.p()))?;
    if outcome.is_empty() {
        return Ok(collect(
            Method::Polyhedral,
            Vec::new(),
            Vec::new(),
            &DVector::zeros(0),
        ));
    }
    let targets = build_targets(data, &outcome.selected, config.model)?;
    let sigma = plug_in_sigma(data, &outcome.selected, config.model)?;
    let truth = true_projected_target(&data.x, &outcome.selected, &sim.beta, config.model)?;
    let results = targets
        .iter()
        .map(|t| {
            polyhedral_truncation(data, &outcome.selected, &outcome.signs, t, sigma, lambda)?
                .interval(config.alpha, t)
        })
        .collect();
    Ok(collect(
        Method::Polyhedral,
        outcome.selected,
        results,
        &truth,
    ))
}

pub fn run_split(config: &SimConfig, sim: &SimulatedData, rep: usize) -> Result<MethodRun> {
    let data = &sim.data;
    let lambda = lambda_for(config, data)?;
    let out = split_inference(
        data,
        config.rho,
        lambda,
        config.alpha,
        config.model,
        derive_seed(config.seed, rep, SEED_SPLIT),
    )?;
    if out.selected.is_empty() {
        return Ok(collect(
            Method::Split,
            Vec::new(),
            Vec::new(),
            &DVector::zeros(0),
        ));
    }
    // Held-out least squares estimates the projection under the held-out design.
    let x2 = select_rows(&data.x, &out.holdout_rows);
    let truth = true_projected_target(&x2, &out.selected, &sim.beta, config.model)?;
    let results = out.intervals.into_iter().map(Ok).collect();
    Ok(collect(Method::Split, out.selected, results, &truth))
}

pub fn run_uv(config: &SimConfig, sim: &SimulatedData, rep: usize) -> Result<MethodRun> {
    let data = &sim.data;
    let lambda = lambda_for(config, data)?;
    let n1 = config.n1();
    let f = (config.n - n1) as f64 / n1 as f64;
    let out = uv_inference(
        data,
        f,
        lambda,
        config.alpha,
        config.model,
        derive_seed(config.seed, rep, SEED_UV),
    )?;
    if out.selected.is_empty() {
        return Ok(collect(
            Method::Uv,
            Vec::new(),
            Vec::new(),
            &DVector::zeros(0),
        ));
    }
    let truth = true_projected_target(&data.x, &out.selected, &sim.beta, config.model)?;
    let results = out.intervals.into_iter().map(Ok).collect();
    Ok(collect(Method::Uv, out.selected, results, &truth))
}

/// Per-replicate, per-method result.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub f1: Option<f64>,
    pub run: std::result::Result<MethodRun, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateResult {
    pub rep: usize,
    pub support: Vec<usize>,
    pub methods: Vec<MethodOutcome>,
}

pub fn run_replicate(config: &SimConfig, rep: usize) -> ReplicateResult {
    let sim = match simulate_replicate(config, rep) {
        Ok(s) => s,
        Err(e) => {
            return ReplicateResult {
                rep,
                support: Vec::new(),
                methods: config
                    .methods
                    .iter()
                    .map(|&m| MethodOutcome {
                        method: m,
                        f1: None,
                        run: Err(e.to_string()),
                    })
                    .collect(),
            }
        }
    };
    let methods = config
        .methods
        .iter()
        .map(|&m| {
            let run = match m {
                Method::Exact => run_exact(config, &sim, rep),
                Method::Polyhedral => run_polyhedral(config, &sim),
                Method::Split => run_split(config, &sim, rep),
                Method::Uv => run_uv(config, &sim, rep),
            };
            let f1 = run
                .as_ref()
                .ok()
                .map(|r| f1_score(&r.selected, &sim.support));
            MethodOutcome {
                method: m,
                f1,
                run: run.map_err(|e| e.to_string()),
            }
        })
        .collect();
    ReplicateResult {
        rep,
        support: sim.support,
        methods,
    }
}

/// Mean with its Monte-Carlo standard error. Both are NaN (written as
/// `null` in JSON) when there are no values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub se: f64,
    pub count: usize,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Estimate {
    pub fn from_values(v: &[f64]) -> Self {
        let count = v.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let se = if count > 1 {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, count }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean of per-replicate `1 − FCR` over replicates with intervals.
    pub coverage: Estimate,
    /// Mean of per-replicate average interval length.
    pub length: Estimate,
    pub f1: Estimate,
    pub selected_size: Estimate,
    /// Replicates contributing to coverage and length.
    pub replicates: usize,
    pub empty_selections: usize,
    pub failed_replicates: usize,
    pub interval_failures: usize,
    pub intervals: usize,
    pub clipped_intervals: usize,
}

impl MethodSummary {
    pub fn clipped_rate(&self) -> f64 {
        if self.intervals == 0 {
            0.0
        } else {
            self.clipped_intervals as f64 / self.intervals as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub config: SimConfig,
    pub n_reps: usize,
    pub methods: Vec<MethodSummary>,
}

impl StudySummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// One CSV row: an interval, or a placeholder for a replicate without one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub rep: usize,
    pub method: Method,
    pub coordinate: Option<usize>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub truth: Option<f64>,
    pub covered: Option<bool>,
    pub length: Option<f64>,
    pub f1: Option<f64>,
    pub selected_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyReport {
    pub summary: StudySummary,
    pub rows: Vec<ReplicateRow>,
    /// `(rep, method, message)` for every failed method run.
    pub failures: Vec<(usize, Method, String)>,
}

/// Run every replicate (in parallel) and aggregate in replicate order.
pub fn run_study(config: &SimConfig) -> Result<StudyReport> {
    config.validate()?;
    let results: Vec<ReplicateResult> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| run_replicate(config, rep))
        .collect();
    Ok(aggregate(config, &results))
}

pub fn aggregate(config: &SimConfig, results: &[ReplicateResult]) -> StudyReport {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut summaries = Vec::new();
    for &m in &config.methods {
        let (mut cov, mut len, mut f1s, mut sizes) = (vec![], vec![], vec![], vec![]);
        let mut s = MethodSummary {
            method: m,
            coverage: Estimate::from_values(&[]),
            length: Estimate::from_values(&[]),
            f1: Estimate::from_values(&[]),
            selected_size: Estimate::from_values(&[]),
            replicates: 0,
            empty_selections: 0,
            failed_replicates: 0,
            interval_failures: 0,
            intervals: 0,
            clipped_intervals: 0,
        };
        for r in results {
            let Some(mo) = r.methods.iter().find(|o| o.method == m) else {
                continue;
            };
            let placeholder = |f1: Option<f64>, size: Option<usize>| ReplicateRow {
                rep: r.rep,
                method: m,
                coordinate: None,
                lower: None,
                upper: None,
                truth: None,
                covered: None,
                length: None,
                f1,
                selected_size: size,
            };
            let run = match &mo.run {
                Ok(run) => run,
                Err(msg) => {
                    s.failed_replicates += 1;
                    failures.push((r.rep, m, msg.clone()));
                    rows.push(placeholder(None, None));
                    continue;
                }
            };
            let f1 = mo.f1.unwrap_or(f64::NAN);
            f1s.push(f1);
            sizes.push(run.selected.len() as f64);
            s.interval_failures += run.interval_failures;
            if run.selected.is_empty() {
                s.empty_selections += 1;
            }
            if run.intervals.is_empty() {
                rows.push(placeholder(Some(f1), Some(run.selected.len())));
                continue;
            }
            s.replicates += 1;
            let miss = fcr(&run.intervals, &run.truths).expect("aligned by construction");
            cov.push(1.0 - miss);
            len.push(
                run.intervals.iter().map(|i| i.length()).sum::<f64>() / run.intervals.len() as f64,
            );
            for (i, &t) in run.intervals.iter().zip(&run.truths) {
                s.intervals += 1;
                s.clipped_intervals += i.clipped as usize;
                rows.push(ReplicateRow {
                    rep: r.rep,
                    method: m,
                    coordinate: Some(i.feature),
                    lower: Some(i.lower),
                    upper: Some(i.upper),
                    truth: Some(t),
                    covered: Some(i.covers(t)),
                    length: Some(i.length()),
                    f1: Some(f1),
                    selected_size: Some(run.selected.len()),
                });
            }
        }
        s.coverage = Estimate::from_values(&cov);
        s.length = Estimate::from_values(&len);
        s.f1 = Estimate::from_values(&f1s);
        s.selected_size = Estimate::from_values(&sizes);
        summaries.push(s);
    }
    rows.sort_by_key(|r| (r.rep, r.method));
    StudyReport {
        summary: StudySummary {
            config: config.clone(),
            n_reps: config.n_reps,
            methods: summaries,
        },
        rows,
        failures,
    }
}

/// Mean F1 of the randomized selection alone, without any inference.
pub fn selection_accuracy(config: &SimConfig) -> Result<Estimate> {
    config.validate()?;
    let f1s: Vec<Result<f64>> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| {
            let sim = simulate_replicate(config, rep)?;
            let data = &sim.data;
            let lambda = lambda_for(config, data)?;
            let s = plug_in_sigma(data, &[], ModelKind::Full)?;
            let scheme =
                RandomizationScheme::carving(tau2_from_split(s * s, config.n, config.n1())?)?;
            let w = sample_randomization(
                &scheme,
                &data.x,
                derive_seed(config.seed, rep, SEED_RANDOMIZATION),
            )?;
            let out = solve_randomized_lasso(data, lambda, default_epsilon(&data.x), &w)?;
            Ok(f1_score(&out.selected, &sim.support))
        })
        .collect();
    let values: Vec<f64> = f1s.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_values(&values))
}

/// Pooled pivot values and their Kolmogorov–Smirnov test against Unif(0, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub method: Method,
    /// Offset of the evaluation point from the truth, in standard errors.
    pub shift: f64,
    pub n_values: usize,
    pub failures: usize,
    pub ks_statistic: f64,
    pub p_value: f64,
}

/// Pivot values at the true target (plus `shift` standard errors) for every
/// selected coordinate of every replicate.
fn pivots_for_replicate(
    config: &SimConfig,
    rep: usize,
    method: Method,
    shift: f64,
) -> Result<(Vec<f64>, usize)> {
    let sim = simulate_replicate(config, rep)?;
    let data = &sim.data;
    let lambda = lambda_for(config, data)?;
    let sigma = data.sigma.unwrap_or(config.sigma2.sqrt());
    let quad = config.quad()?;
    let (mut values, mut failures) = (Vec::new(), 0);
    match method {
        Method::Exact => {
            let tau2 = tau2_from_split(sigma * sigma, config.n, config.n1())?;
            let scheme = RandomizationScheme::carving(tau2)?;
            let w = sample_randomization(
                &scheme,
                &data.x,
                derive_seed(config.seed, rep, SEED_RANDOMIZATION),
            )?;
            let eps = default_epsilon(&data.x);
            let out = solve_randomized_lasso(data, lambda, eps, &w)?;
            if out.is_empty() {
                return Ok((values, 0));
            }
            let ev = lasso_event_rep(data, &out, lambda, eps)?;
            let ctx = EventContext::new(&ev, &scheme.omega(&data.x)?)?;
            let truth = true_projected_target(&data.x, &out.selected, &sim.beta, config.model)?;
            for (k, t) in build_targets(data, &out.selected, config.model)?
                .iter()
                .enumerate()
            {
                let value = ctx.geometry(t).and_then(|g| {
                    let params = ctx.pivot_params(data, &g, t, sigma)?;
                    exact_pivot(&params, truth[k] + shift * sigma * t.norm2.sqrt(), &quad)
                });
                match value {
                    Ok(v) => values.push(v),
                    Err(_) => failures += 1,
                }
            }
        }
        Method::Polyhedral => {
            let out = solve_randomized_lasso(data, lambda, 0.0, &DVector::zeros(data.p()))?;
            let truth = true_projected_target(&data.x, &out.selected, &sim.beta, config.model)?;
            for (k, t) in build_targets(data, &out.selected, config.model)?
                .iter()
                .enumerate()
            {
                match polyhedral_truncation(data, &out.selected, &out.signs, t, sigma, lambda) {
                    Ok(tr) => values.push(tr.pivot(truth[k] + shift * tr.sd)),
                    Err(_) => failures += 1,
                }
            }
        }
        other => return invalid(format!("no pivot to validate for method `{other}`")),
    }
    Ok((values, failures))
}

/// Marginal uniformity check of a pivot at the true projected targets. The
/// true noise level is used throughout.
pub fn validate_pivot_uniformity(
    config: &SimConfig,
    method: Method,
    shift: f64,
) -> Result<UniformityReport> {
    config.validate()?;
    let per_rep: Vec<Result<(Vec<f64>, usize)>> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| pivots_for_replicate(config, rep, method, shift))
        .collect();
    let (mut values, mut failures) = (Vec::new(), 0);
    for r in per_rep {
        match r {
            Ok((v, f)) => {
                values.extend(v);
                failures += f;
            }
            Err(_) => failures += 1,
        }
    }
    if values.len() < 200 {
        return Err(Error::InsufficientSample {
            got: values.len(),
            need: 200,
        });
    }
    let KsResult {
        statistic,
        p_value,
        n,
    } = ks_uniform(&values)?;
    Ok(UniformityReport {
        method,
        shift,
        n_values: n,
        failures,
        ks_statistic: statistic,
        p_value,
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

pub fn write_rows_csv(rows: &[ReplicateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    if rows.is_empty() {
        w.write_record([
            "rep",
            "method",
            "coordinate",
            "lower",
            "upper",
            "truth",
            "covered",
            "length",
            "f1",
            "selected_size",
        ])
        .map_err(|e| io_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<ReplicateRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| io_err(path, e)))
        .collect()
}
