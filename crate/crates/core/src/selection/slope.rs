use nalgebra::{DMatrix, DVector};

use super::{
    check_randomization, Algorithm, Dataset, LinearEventRep, SelectionOutcome, SlopeClusters,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{spectral_norm_sym, SpdFactor};

/// Relative tolerance for treating two magnitudes as one cluster.
const TIE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeSettings {
    pub max_iter: usize,
    /// Required KKT accuracy, relative to `1 + ‖Xᵀy + w‖_∞`.
    pub kkt_tol: f64,
}

impl Default for SlopeSettings {
    fn default() -> Self {
        Self {
            max_iter: 200_000,
            kkt_tol: 1e-9,
        }
    }
}

/// Proximal operator of `b ↦ Σ_k λ_k |b|_(k)` (nonincreasing `λ`), via a
/// stack-based pool-adjacent-violators pass over the sorted magnitudes.
pub fn sorted_l1_prox(v: &DVector<f64>, lambdas: &[f64]) -> DVector<f64> {
    let p = v.len();
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    // Blocks as (start, len, sum).
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(p);
    for (k, &i) in idx.iter().enumerate() {
        blocks.push((k, 1, v[i].abs() - lambdas[k]));
        while blocks.len() > 1 {
            let (s1, l1, a1) = blocks[blocks.len() - 2];
            let (_, l2, a2) = blocks[blocks.len() - 1];
            if a1 / l1 as f64 > a2 / l2 as f64 {
                break;
            }
            blocks.pop();
            blocks.pop();
            blocks.push((s1, l1 + l2, a1 + a2));
        }
    }
    let mut out = DVector::zeros(p);
    for (start, len, sum) in blocks {
        let value = (sum / len as f64).max(0.0);
        for &i in &idx[start..start + len] {
            out[i] = value * v[i].signum();
        }
    }
    out
}

fn sorted_l1(b: &DVector<f64>, lambdas: &[f64]) -> f64 {
    let mut mags: Vec<f64> = b.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.iter().zip(lambdas).map(|(m, l)| m * l).sum()
}

/// `½‖y − Xb‖² + Σ_k λ_k|b|_(k) − wᵀb`.
pub fn slope_objective(data: &Dataset, lambdas: &[f64], w: &DVector<f64>, b: &DVector<f64>) -> f64 {
    0.5 * (&data.y - &data.x * b).norm_squared() + sorted_l1(b, lambdas) - w.dot(b)
}

struct Cluster {
    members: Vec<usize>,
    /// First rank occupied by the cluster in the sorted order.
    rank: usize,
    magnitude: f64,
}

/// Group coordinates of `b` by magnitude. Nonzero clusters come first in
/// decreasing magnitude; the zero cluster (possibly empty) is returned last.
fn clusters(b: &DVector<f64>) -> (Vec<Cluster>, Cluster) {
    let p = b.len();
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&i, &j| b[j].abs().total_cmp(&b[i].abs()).then(i.cmp(&j)));
    let mut out: Vec<Cluster> = Vec::new();
    let mut rank = 0;
    for &i in &idx {
        let m = b[i].abs();
        if m == 0.0 {
            break;
        }
        match out.last_mut() {
            Some(c) if (c.magnitude - m).abs() <= TIE_TOL * c.magnitude.max(m) => c.members.push(i),
            _ => out.push(Cluster {
                members: vec![i],
                rank,
                magnitude: m,
            }),
        }
        rank += 1;
    }
    for c in out.iter_mut() {
        c.members.sort_unstable();
    }
    let mut zero: Vec<usize> = idx[rank..].to_vec();
    zero.sort_unstable();
    (
        out,
        Cluster {
            members: zero,
            rank,
            magnitude: 0.0,
        },
    )
}

/// Worst violation of the majorization conditions that characterize the
/// sorted-ℓ1 subdifferential, for a subgradient vector `g` at `b`.
fn subgradient_violation(b: &DVector<f64>, g: &DVector<f64>, lambdas: &[f64]) -> f64 {
    let (nonzero, zero) = clusters(b);
    let mut worst = 0.0f64;
    let mut check = |vals: &mut Vec<f64>, rank: usize, exact_total: bool| {
        vals.sort_by(|a, b| b.total_cmp(a));
        let (mut cv, mut cl) = (0.0, 0.0);
        for (k, v) in vals.iter().enumerate() {
            cv += v;
            cl += lambdas[rank + k];
            worst = worst.max(cv - cl);
        }
        if exact_total {
            worst = worst.max((cv - cl).abs());
        }
    };
    for c in &nonzero {
        let mut vals: Vec<f64> = c.members.iter().map(|&i| b[i].signum() * g[i]).collect();
        check(&mut vals, c.rank, true);
    }
    let mut vals: Vec<f64> = zero.members.iter().map(|&i| g[i].abs()).collect();
    check(&mut vals, zero.rank, false);
    worst
}

/// Largest KKT violation of a candidate SLOPE solution.
pub fn slope_kkt_residual(
    data: &Dataset,
    lambdas: &[f64],
    w: &DVector<f64>,
    b: &DVector<f64>,
) -> f64 {
    let g = data.x.transpose() * (&data.y - &data.x * b) + w;
    subgradient_violation(b, &g, lambdas)
}

/// Exact solution on the cluster pattern of `b`: signed cluster columns
/// `X̄_k = Σ S_i X_i` solve `X̄ᵀX̄·O = X̄ᵀy + w̄ − λ̄`.
fn polish(
    data: &Dataset,
    lambdas: &[f64],
    w: &DVector<f64>,
    b: &DVector<f64>,
) -> Option<DVector<f64>> {
    let (nonzero, _) = clusters(b);
    if nonzero.is_empty() {
        return Some(DVector::zeros(b.len()));
    }
    let xbar = cluster_design(data, b, &nonzero);
    let rhs = DVector::from_fn(nonzero.len(), |k, _| {
        let c = &nonzero[k];
        let wbar: f64 = c.members.iter().map(|&i| b[i].signum() * w[i]).sum();
        let lbar: f64 = lambdas[c.rank..c.rank + c.members.len()].iter().sum();
        xbar.column(k).dot(&data.y) + wbar - lbar
    });
    let o = SpdFactor::new(&(xbar.transpose() * &xbar), "cluster Gram")
        .ok()?
        .solve_vec(&rhs);
    if o.iter().any(|&v| !(v > 0.0)) || o.as_slice().windows(2).any(|w| w[0] <= w[1]) {
        return None;
    }
    let mut out = DVector::zeros(b.len());
    for (k, c) in nonzero.iter().enumerate() {
        for &i in &c.members {
            out[i] = o[k] * b[i].signum();
        }
    }
    Some(out)
}

fn cluster_design(data: &Dataset, b: &DVector<f64>, nonzero: &[Cluster]) -> DMatrix<f64> {
    let mut xbar = DMatrix::zeros(data.n(), nonzero.len());
    for (k, c) in nonzero.iter().enumerate() {
        for &i in &c.members {
            xbar.column_mut(k)
                .axpy(b[i].signum(), &data.x.column(i), 1.0);
        }
    }
    xbar
}

fn check_lambdas(lambdas: &[f64], p: usize) -> Result<()> {
    if lambdas.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "need {p} penalty levels, got {}",
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return invalid("penalty levels must be positive and finite");
    }
    if lambdas.windows(2).any(|w| w[0] <= w[1]) {
        return invalid("penalty levels must be strictly decreasing");
    }
    Ok(())
}

/// Solve `min ½‖y − Xb‖² + Σ_k λ_k|b|_(k) − wᵀb` by accelerated proximal
/// gradient (fixed step `1/‖XᵀX‖₂`, adaptive restart) followed by an exact
/// solve on the detected cluster pattern, and build its event representation.
pub fn solve_randomized_slope(
    data: &Dataset,
    lambdas: &[f64],
    w: &DVector<f64>,
) -> Result<(SelectionOutcome, LinearEventRep)> {
    solve_randomized_slope_with(data, lambdas, w, &SlopeSettings::default())
}

pub fn solve_randomized_slope_with(
    data: &Dataset,
    lambdas: &[f64],
    w: &DVector<f64>,
    settings: &SlopeSettings,
) -> Result<(SelectionOutcome, LinearEventRep)> {
    let p = data.p();
    check_lambdas(lambdas, p)?;
    check_randomization(w, p)?;
    let gram = data.gram();
    let z = data.x.transpose() * &data.y + w;
    let lip = spectral_norm_sym(&gram);
    if !(lip > 0.0) {
        return Err(Error::SingularDesign("design is identically zero".into()));
    }
    let step_lambdas: Vec<f64> = lambdas.iter().map(|l| l / lip).collect();
    let tol = settings.kkt_tol * (1.0 + z.amax());

    let mut b = DVector::zeros(p);
    let mut y = b.clone();
    let mut t = 1.0f64;
    let mut solution = None;
    let mut residual = f64::INFINITY;
    for iter in 0..settings.max_iter {
        let grad = &gram * &y - &z;
        let next = sorted_l1_prox(&(&y - grad / lip), &step_lambdas);
        let restart = (&y - &next).dot(&(&next - &b)) > 0.0;
        let t_next = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let momentum = if restart { 0.0 } else { (t - 1.0) / t_next };
        y = &next + (&next - &b) * momentum;
        b = next;
        t = t_next;
        if iter % 25 == 24 {
            if let Some(cand) = polish(data, lambdas, w, &b) {
                residual = slope_kkt_residual(data, lambdas, w, &cand);
                if residual <= tol {
                    solution = Some(cand);
                    break;
                }
            }
        }
    }
    let b = solution.ok_or(Error::Convergence {
        iterations: settings.max_iter,
        residual,
    })?;
    build(data, lambdas, w, b)
}

fn build(
    data: &Dataset,
    lambdas: &[f64],
    w: &DVector<f64>,
    b: DVector<f64>,
) -> Result<(SelectionOutcome, LinearEventRep)> {
    let p = data.p();
    let (nonzero, zero) = clusters(&b);
    let q = nonzero.len();
    let g = data.x.transpose() * (&data.y - &data.x * &b) + w;

    let mut dropped = Vec::with_capacity(q);
    for c in &nonzero {
        let d = *c
            .members
            .iter()
            .min_by(|&&i, &&j| (b[i].signum() * g[i]).total_cmp(&(b[j].signum() * g[j])))
            .expect("clusters are nonempty");
        dropped.push(d);
    }
    let mut order = dropped.clone();
    for (c, &d) in nonzero.iter().zip(&dropped) {
        order.extend(c.members.iter().copied().filter(|&i| i != d));
    }
    order.extend(zero.members.iter().copied());

    let u = DVector::from_fn(p - q, |i, _| g[order[q + i]]);
    // T carries the dropped entries, which the cluster equation pins down
    // given the other members: S_d·(λ̄_k − Σ_{i≠d} S_i g_i).
    let mut t = DVector::zeros(p);
    let mut dropped_subgradient = Vec::with_capacity(q);
    for (k, (c, &d)) in nonzero.iter().zip(&dropped).enumerate() {
        let lbar: f64 = lambdas[c.rank..c.rank + c.members.len()].iter().sum();
        let others: f64 = c
            .members
            .iter()
            .filter(|&&i| i != d)
            .map(|&i| b[i].signum() * g[i])
            .sum();
        t[k] = b[d].signum() * (lbar - others);
        dropped_subgradient.push(t[k]);
    }

    let xbar = cluster_design(data, &b, &nonzero);
    let xp = data.x.select_columns(order.iter());
    let mut r = DMatrix::zeros(p, p - q);
    for i in 0..p - q {
        r[(q + i, i)] = 1.0;
    }
    let mut l = DMatrix::zeros(q, q);
    for i in 0..q {
        l[(i, i)] = -1.0;
        if i + 1 < q {
            l[(i, i + 1)] = 1.0;
        }
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|c| c.magnitude_of(&b)).collect();
    let o = DVector::from_vec(magnitudes.clone());

    let mut selected: Vec<usize> = nonzero.iter().flat_map(|c| c.members.clone()).collect();
    selected.sort_unstable();
    let signs = selected.iter().map(|&i| b[i].signum()).collect();
    let outcome = SelectionOutcome {
        selected,
        active_solution: o.clone(),
        signs,
        inactive_subgradient: u.clone(),
        randomization: w.clone(),
        algorithm: Algorithm::Slope,
        slope_clusters: Some(SlopeClusters {
            members: nonzero.iter().map(|c| c.members.clone()).collect(),
            magnitudes,
            dropped,
            dropped_subgradient,
        }),
        coefficients: b,
    };
    let rep = LinearEventRep {
        order,
        p: -xp.transpose(),
        q: xp.transpose() * xbar,
        r,
        t,
        l,
        m: DVector::zeros(q),
        stat: data.y.clone(),
        opt: o,
        sub: u,
    }
    .check(w)?;
    Ok((outcome, rep))
}

impl Cluster {
    fn magnitude_of(&self, b: &DVector<f64>) -> f64 {
        b[self.members[0]].abs()
    }
}
