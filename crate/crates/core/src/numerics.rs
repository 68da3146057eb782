//! Gaussian primitives, truncation probabilities, log-space quadrature and
//! monotone root finding.
//!
//! Everything here works on `f64` with IEEE infinities standing in for
//! unbounded interval endpoints.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Beyond this many standard deviations the Gaussian tail is evaluated with
/// its asymptotic (Mills ratio) expansion instead of `erfc`.
const ASYMPTOTIC_TAIL: f64 = 35.0;

/// An open interval on the extended real line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() {
            return invalid("interval endpoint is NaN");
        }
        if lower >= upper {
            return invalid(format!("degenerate interval [{lower}, {upper}]"));
        }
        Ok(Self { lower, upper })
    }

    pub fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Grid settings for [`integrate_weighted_gaussian`] and the pivot integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Grid half-width in standard deviations.
    pub half_width_sigmas: f64,
    pub n_points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            half_width_sigmas: 8.5,
            n_points: 4097,
        }
    }
}

impl QuadratureSpec {
    pub fn new(half_width_sigmas: f64, n_points: usize) -> Result<Self> {
        let spec = Self {
            half_width_sigmas,
            n_points,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width_sigmas >= 6.0) || !self.half_width_sigmas.is_finite() {
            return invalid(format!(
                "quadrature half width must be >= 6 sigmas, got {}",
                self.half_width_sigmas
            ));
        }
        if self.n_points < 64 {
            return invalid(format!(
                "quadrature needs at least 64 points, got {}",
                self.n_points
            ));
        }
        Ok(())
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn log_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF for non-NaN input.
pub(crate) fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else if x < 0.0 {
        0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    }
}

/// Standard normal CDF `Φ(x)`.
pub fn gaussian_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return invalid("gaussian_cdf of NaN");
    }
    Ok(norm_cdf(x))
}

/// Upper tail `1 − Φ(x)`, accurate in relative terms for large `x`.
pub fn gaussian_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// `log(1 − Φ(z))` for large positive `z`.
fn log_sf_asymptotic(z: f64) -> f64 {
    let t = 1.0 / (z * z);
    // 1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8 - 945/z^10 + 10395/z^12
    let series =
        1.0 + t * (-1.0 + t * (3.0 + t * (-15.0 + t * (105.0 + t * (-945.0 + t * 10395.0)))));
    log_normal_pdf(z) - z.ln() + series.ln()
}

/// `log Φ(x)`, finite for every finite `x`.
pub fn log_gaussian_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x > 0.0 {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x >= -ASYMPTOTIC_TAIL {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        log_sf_asymptotic(-x)
    }
}

/// `log(1 − Φ(x))`.
pub fn log_gaussian_sf(x: f64) -> f64 {
    log_gaussian_cdf(-x)
}

/// `log(exp(a) − exp(b))` for `a ≥ b`.
fn log_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        a
    } else {
        a + (-(b - a).exp_m1()).ln()
    }
}

fn standardize(interval: &Interval, theta: f64, vartheta: f64) -> Result<(f64, f64)> {
    if !(vartheta > 0.0) || !vartheta.is_finite() {
        return invalid(format!(
            "vartheta must be positive and finite, got {vartheta}"
        ));
    }
    if theta.is_nan() {
        return invalid("theta is NaN");
    }
    if interval.lower.is_nan() || interval.upper.is_nan() || interval.lower >= interval.upper {
        return invalid(format!(
            "degenerate interval [{}, {}]",
            interval.lower, interval.upper
        ));
    }
    Ok((
        (interval.lower - theta) / vartheta,
        (interval.upper - theta) / vartheta,
    ))
}

/// `log(Φ(b) − Φ(a))` on standardized endpoints, choosing the form that
/// avoids cancellation.
fn log_tp_standard(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        log_gaussian_cdf(b)
    } else if b == f64::INFINITY {
        log_gaussian_sf(a)
    } else if a >= 0.0 {
        log_diff_exp(log_gaussian_sf(a), log_gaussian_sf(b))
    } else if b <= 0.0 {
        log_diff_exp(log_gaussian_cdf(b), log_gaussian_cdf(a))
    } else {
        (-(norm_cdf(a) + norm_cdf(-b))).ln_1p()
    }
}

fn tp_standard(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        norm_cdf(b)
    } else if b == f64::INFINITY {
        norm_cdf(-a)
    } else if a >= 0.0 {
        let (ua, ub) = (norm_cdf(-a), norm_cdf(-b));
        if ua > 1e-290 {
            ua - ub
        } else {
            log_tp_standard(a, b).exp()
        }
    } else if b <= 0.0 {
        let (lb, la) = (norm_cdf(b), norm_cdf(a));
        if lb > 1e-290 {
            lb - la
        } else {
            log_tp_standard(a, b).exp()
        }
    } else {
        1.0 - (norm_cdf(a) + norm_cdf(-b))
    }
}

/// Probability that `N(theta, vartheta²)` falls in `interval`.
pub fn truncation_prob(interval: &Interval, theta: f64, vartheta: f64) -> Result<f64> {
    let (a, b) = standardize(interval, theta, vartheta)?;
    Ok(tp_standard(a, b).clamp(0.0, 1.0))
}

/// Natural log of [`truncation_prob`], finite far into either tail.
pub fn log_truncation_prob(interval: &Interval, theta: f64, vartheta: f64) -> Result<f64> {
    let (a, b) = standardize(interval, theta, vartheta)?;
    Ok(log_tp_standard(a, b).min(0.0))
}

/// Unchecked log truncation probability for hot loops; arguments must already
/// satisfy the preconditions of [`log_truncation_prob`].
pub(crate) fn log_tp_unchecked(lower: f64, upper: f64, theta: f64, vartheta: f64) -> f64 {
    log_tp_standard((lower - theta) / vartheta, (upper - theta) / vartheta).min(0.0)
}

/// `d/dθ log TP^{[lower, upper]}(θ, ϑ)`.
pub(crate) fn dlog_tp_dtheta(lower: f64, upper: f64, theta: f64, vartheta: f64) -> f64 {
    let a = (lower - theta) / vartheta;
    let b = (upper - theta) / vartheta;
    let log_tp = log_tp_standard(a, b);
    let ra = if a.is_finite() {
        (log_normal_pdf(a) - log_tp).exp()
    } else {
        0.0
    };
    let rb = if b.is_finite() {
        (log_normal_pdf(b) - log_tp).exp()
    } else {
        0.0
    };
    (ra - rb) / vartheta
}

/// Running log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY || v.is_nan() {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Composite Simpson rule for `∫_{lower}^{upper} exp(log_f(x)) dx`, returned
/// on the log scale. The interval count is `n_points − 1` rounded up to even.
pub fn integrate_log_density<F>(
    lower: f64,
    upper: f64,
    n_points: usize,
    mut log_f: F,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lower.is_finite() && upper.is_finite()) {
        return invalid("integration limits must be finite");
    }
    if upper <= lower {
        return Err(Error::EmptyMass);
    }
    let mut intervals = n_points.max(3) - 1;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let h = (upper - lower) / intervals as f64;
    let (ln_one, ln_two, ln_four) = (0.0, 2f64.ln(), 4f64.ln());
    let mut acc = LogSumExp::default();
    for i in 0..=intervals {
        let x = if i == intervals {
            upper
        } else {
            lower + i as f64 * h
        };
        let ln_w = if i == 0 || i == intervals {
            ln_one
        } else if i % 2 == 1 {
            ln_four
        } else {
            ln_two
        };
        acc.push(ln_w + log_f(x));
    }
    let total = acc.value();
    if total == f64::NEG_INFINITY {
        return Err(Error::EmptyMass);
    }
    Ok(total + (h / 3.0).ln())
}

/// `log ∫_{−∞}^{upper} φ((x−mean)/sd)/sd · exp(log_weight(x)) dx` on a grid
/// spanning `mean ± half_width·sd`, clipped at `upper_limit`.
pub fn integrate_weighted_gaussian<F>(
    mean: f64,
    sd: f64,
    mut log_weight: F,
    spec: &QuadratureSpec,
    upper_limit: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    spec.validate()?;
    if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
        return invalid(format!(
            "need finite mean and positive sd, got ({mean}, {sd})"
        ));
    }
    if upper_limit.is_nan() {
        return invalid("upper limit is NaN");
    }
    let lower = mean - spec.half_width_sigmas * sd;
    let upper = (mean + spec.half_width_sigmas * sd).min(upper_limit);
    let ln_sd = sd.ln();
    integrate_log_density(lower, upper, spec.n_points, |x| {
        let z = (x - mean) / sd;
        log_normal_pdf(z) - ln_sd + log_weight(x)
    })
}

/// Maximum number of geometric bracket expansions in [`invert_monotone`].
pub const MAX_EXPANSIONS: usize = 60;
const ROOT_VALUE_TOL: f64 = 1e-8;
const ROOT_WIDTH_TOL: f64 = 1e-10;

/// Solve `g(x) = target` for a continuous monotone `g`.
///
/// The seed bracket is shifted outward (doubling its width each step) until
/// it straddles the target, then refined with Brent's method until
/// `|g(x) − target| ≤ 1e−8` or the bracket is narrower than `1e−10`.
pub fn invert_monotone<G>(mut g: G, target: f64, seed_bracket: Interval) -> Result<f64>
where
    G: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (seed_bracket.lower, seed_bracket.upper);
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return invalid("seed bracket must be finite and non-degenerate");
    }
    let mut fa = g(a)? - target;
    let mut fb = g(b)? - target;
    if fa.abs() <= ROOT_VALUE_TOL {
        return Ok(a);
    }
    if fb.abs() <= ROOT_VALUE_TOL {
        return Ok(b);
    }
    let mut expansions = 0;
    while fa.signum() == fb.signum() {
        if expansions == MAX_EXPANSIONS {
            return Err(Error::NoRoot {
                target,
                expansions,
                lower: a,
                upper: b,
            });
        }
        expansions += 1;
        let width = b - a;
        // Move toward the side whose value is closer to the target.
        if fb.abs() < fa.abs() || (fb.abs() == fa.abs() && expansions % 2 == 0) {
            a = b;
            fa = fb;
            b = a + 2.0 * width;
            fb = g(b)? - target;
        } else {
            b = a;
            fb = fa;
            a = b - 2.0 * width;
            fa = g(a)? - target;
        }
        if fa.abs() <= ROOT_VALUE_TOL {
            return Ok(a);
        }
        if fb.abs() <= ROOT_VALUE_TOL {
            return Ok(b);
        }
    }
    brent(&mut g, target, a, fa, b, fb)
}

fn brent<G>(g: &mut G, target: f64, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Result<f64>
where
    G: FnMut(f64) -> Result<f64>,
{
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.abs() <= ROOT_VALUE_TOL {
            return Ok(b);
        }
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * ROOT_WIDTH_TOL;
        let m = 0.5 * (c - b);
        if m.abs() <= tol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = g(b)? - target;
    }
    Ok(b)
}

/// One-sample Kolmogorov–Smirnov test against Unif(0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_uniform(values: &[f64]) -> Result<KsResult> {
    if values.is_empty() {
        return invalid("KS test on an empty sample");
    }
    if values.iter().any(|v| v.is_nan()) {
        return invalid("KS test sample contains NaN");
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in sorted.iter().enumerate() {
        let f = v.clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        n: sorted.len(),
    })
}

/// Complementary Kolmogorov distribution `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1.18 {
        // Jacobi-theta form converges faster for small arguments.
        if lambda <= 0.0 {
            return 1.0;
        }
        let y = -PI * PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 0..50 {
            let j = (2 * k + 1) as f64;
            s += (y * j * j).exp();
        }
        return (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sided standard normal quantile `z_{1−α/2}`.
pub fn normal_quantile_upper(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    invert_monotone(
        |x| Ok(norm_cdf(x)),
        1.0 - alpha / 2.0,
        Interval {
            lower: 0.0,
            upper: 1.0,
        },
    )
}
