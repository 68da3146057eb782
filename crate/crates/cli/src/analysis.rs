//! One-shot select-then-infer analyses on a CSV dataset.

use anyhow::{Context, Result};
use exact_selective::conditioning::{build_targets, EventContext, ModelKind};
use exact_selective::inference::{
    exact_intervals, lambda_theory, plug_in_sigma, polyhedral_truncation, split_inference,
    uv_inference, IntervalEstimate, Method,
};
use exact_selective::selection::{
    default_epsilon, lasso_event_rep, lasso_kkt_residual, sample_randomization,
    solve_randomized_lasso, tau2_from_split, Dataset, RandomizationScheme, SelectionOutcome,
};
use exact_selective::study::derive_seed;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, Randomization};
use crate::input::{read_table, Table};

const SEED_RANDOMIZATION: u64 = 3;
const SEED_SPLIT: u64 = 4;
const SEED_UV: u64 = 5;

/// Data and tuning constants shared by every method of one run.
pub struct Prepared {
    pub table: Table,
    pub data: Dataset,
    /// Plug-in noise sd from the full model (or the known value).
    pub sigma_full: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub tau2: f64,
    pub rho: f64,
}

pub fn prepare(cfg: &AnalysisConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut table = read_table(&cfg.input, &cfg.response)?;
    if cfg.center {
        table.center();
    }
    if cfg.scale {
        table.scale()?;
    }
    let data = Dataset::new(table.y.clone(), table.x.clone(), cfg.sigma)?;
    let sigma_full = plug_in_sigma(&data, &[], ModelKind::Full)?;
    let lambda = cfg
        .lambda
        .unwrap_or_else(|| lambda_theory(&data.x, sigma_full, 1.0));
    let epsilon = cfg.epsilon.unwrap_or_else(|| default_epsilon(&data.x));
    let n = data.n();
    let s2 = sigma_full * sigma_full;
    let (tau2, rho) = match cfg.randomization {
        Randomization::Rho(r) => {
            let n1 = ((r * n as f64).round() as usize).clamp(1, n - 1);
            (tau2_from_split(s2, n, n1)?, r)
        }
        Randomization::Tau2(t) => (t, s2 / (s2 + t)),
    };
    Ok(Prepared {
        table,
        data,
        sigma_full,
        lambda,
        epsilon,
        tau2,
        rho,
    })
}

fn randomization_seed(seed: u64) -> u64 {
    derive_seed(seed, 0, SEED_RANDOMIZATION)
}

/// Randomized LASSO with a carving randomization.
pub fn randomized_selection(
    prep: &Prepared,
    seed: u64,
) -> Result<(RandomizationScheme, DVector<f64>, SelectionOutcome)> {
    let scheme = RandomizationScheme::carving(prep.tau2)?;
    let w = sample_randomization(&scheme, &prep.data.x, randomization_seed(seed))?;
    let outcome = solve_randomized_lasso(&prep.data, prep.lambda, prep.epsilon, &w)?;
    Ok((scheme, w, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeature {
    pub index: usize,
    pub name: String,
    pub sign: f64,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectReport {
    pub n: usize,
    pub p: usize,
    pub response: String,
    pub lambda: f64,
    pub epsilon: f64,
    pub tau2: f64,
    pub sigma: f64,
    pub seed: u64,
    pub randomization_seed: u64,
    pub kkt_residual: f64,
    pub selected: Vec<SelectedFeature>,
    pub randomization: Vec<f64>,
}

pub fn run_select(cfg: &AnalysisConfig) -> Result<SelectReport> {
    let prep = prepare(cfg)?;
    let (_, w, out) = randomized_selection(&prep, cfg.seed)?;
    let kkt = lasso_kkt_residual(&prep.data, prep.lambda, prep.epsilon, &w, &out.coefficients);
    Ok(SelectReport {
        n: prep.data.n(),
        p: prep.data.p(),
        response: cfg.response.clone(),
        lambda: prep.lambda,
        epsilon: prep.epsilon,
        tau2: prep.tau2,
        sigma: prep.sigma_full,
        seed: cfg.seed,
        randomization_seed: randomization_seed(cfg.seed),
        kkt_residual: kkt,
        selected: out
            .selected
            .iter()
            .zip(&out.signs)
            .map(|(&j, &s)| SelectedFeature {
                index: j,
                name: prep.table.features[j].clone(),
                sign: s,
                coefficient: out.coefficients[j],
            })
            .collect(),
        randomization: w.as_slice().to_vec(),
    })
}

/// One interval as written to CSV and JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub method: Method,
    pub index: usize,
    pub name: String,
    pub level: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub length: f64,
    /// The interval excludes zero.
    pub significant: bool,
    pub clipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub name: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub selected: Vec<String>,
    pub intervals: Vec<IntervalRow>,
    /// Coordinates whose interval could not be computed.
    pub failures: Vec<Failure>,
    /// Set when the method could not run at all.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferReport {
    pub n: usize,
    pub p: usize,
    pub response: String,
    pub model: ModelKind,
    pub alpha: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub tau2: f64,
    pub rho: f64,
    pub seed: u64,
    pub methods: Vec<MethodReport>,
}

impl InferReport {
    pub fn rows(&self) -> impl Iterator<Item = &IntervalRow> {
        self.methods.iter().flat_map(|m| m.intervals.iter())
    }
}

struct MethodResult {
    selected: Vec<usize>,
    intervals: Vec<(usize, exact_selective::Result<IntervalEstimate>)>,
}

fn exact(prep: &Prepared, cfg: &AnalysisConfig) -> Result<MethodResult> {
    let (scheme, _, out) = randomized_selection(prep, cfg.seed)?;
    if out.is_empty() {
        return Ok(MethodResult {
            selected: Vec::new(),
            intervals: Vec::new(),
        });
    }
    let data = &prep.data;
    let rep = lasso_event_rep(data, &out, prep.lambda, prep.epsilon)?;
    let ctx = EventContext::new(&rep, &scheme.omega(&data.x)?)?;
    let targets = build_targets(data, &out.selected, cfg.model)?;
    let sigma = plug_in_sigma(data, &out.selected, cfg.model)?;
    let results = exact_intervals(data, &ctx, &targets, sigma, cfg.alpha, &cfg.quad);
    Ok(MethodResult {
        intervals: out.selected.iter().copied().zip(results).collect(),
        selected: out.selected,
    })
}

fn polyhedral(prep: &Prepared, cfg: &AnalysisConfig) -> Result<MethodResult> {
    let data = &prep.data;
    let out = solve_randomized_lasso(data, prep.lambda, 0.0, &DVector::zeros(data.p()))
        .context("the non-randomized LASSO needs a full-rank design")?;
    if out.is_empty() {
        return Ok(MethodResult {
            selected: Vec::new(),
            intervals: Vec::new(),
        });
    }
    let targets = build_targets(data, &out.selected, cfg.model)?;
    let sigma = plug_in_sigma(data, &out.selected, cfg.model)?;
    let intervals = targets
        .iter()
        .map(|t| {
            let r = polyhedral_truncation(data, &out.selected, &out.signs, t, sigma, prep.lambda)
                .and_then(|tr| tr.interval(cfg.alpha, t));
            (t.feature, r)
        })
        .collect();
    Ok(MethodResult {
        selected: out.selected,
        intervals,
    })
}

fn baseline(prep: &Prepared, cfg: &AnalysisConfig, method: Method) -> Result<MethodResult> {
    let (selected, intervals) = if method == Method::Split {
        let seed = derive_seed(cfg.seed, 0, SEED_SPLIT);
        let out = split_inference(
            &prep.data,
            prep.rho,
            prep.lambda,
            cfg.alpha,
            cfg.model,
            seed,
        )?;
        (out.selected, out.intervals)
    } else {
        let f = (1.0 - prep.rho) / prep.rho;
        let seed = derive_seed(cfg.seed, 0, SEED_UV);
        let out = uv_inference(&prep.data, f, prep.lambda, cfg.alpha, cfg.model, seed)?;
        (out.selected, out.intervals)
    };
    Ok(MethodResult {
        selected,
        intervals: intervals.into_iter().map(|i| (i.feature, Ok(i))).collect(),
    })
}

pub fn run_infer(cfg: &AnalysisConfig) -> Result<InferReport> {
    let prep = prepare(cfg)?;
    let names = &prep.table.features;
    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let result = match method {
                Method::Exact => exact(&prep, cfg),
                Method::Polyhedral => polyhedral(&prep, cfg),
                Method::Split | Method::Uv => baseline(&prep, cfg, method),
            };
            let mut report = MethodReport {
                method,
                selected: Vec::new(),
                intervals: Vec::new(),
                failures: Vec::new(),
                error: None,
            };
            match result {
                Ok(r) => {
                    report.selected = r.selected.iter().map(|&j| names[j].clone()).collect();
                    for (j, iv) in r.intervals {
                        match iv {
                            Ok(iv) => report.intervals.push(IntervalRow {
                                method,
                                index: j,
                                name: names[j].clone(),
                                level: iv.level,
                                estimate: iv.estimate,
                                lower: iv.lower,
                                upper: iv.upper,
                                length: iv.length(),
                                significant: iv.excludes_zero(),
                                clipped: iv.clipped,
                            }),
                            Err(e) => report.failures.push(Failure {
                                index: j,
                                name: names[j].clone(),
                                message: e.to_string(),
                            }),
                        }
                    }
                }
                Err(e) => report.error = Some(format!("{e:#}")),
            }
            report
        })
        .collect();
    Ok(InferReport {
        n: prep.data.n(),
        p: prep.data.p(),
        response: cfg.response.clone(),
        model: cfg.model,
        alpha: cfg.alpha,
        lambda: prep.lambda,
        epsilon: prep.epsilon,
        tau2: prep.tau2,
        rho: prep.rho,
        seed: cfg.seed,
        methods,
    })
}
