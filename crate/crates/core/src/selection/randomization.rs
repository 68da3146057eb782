use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::SpdFactor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    /// `Ω = τ²·I`.
    Isotropic,
    /// `Ω = τ²·XᵀX`.
    Carving,
    /// `Ω` given explicitly.
    Explicit,
}

/// Covariance of the Gaussian randomization `w ~ N(0, Ω)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomizationScheme {
    pub kind: SchemeKind,
    pub tau2: f64,
    pub matrix: Option<DMatrix<f64>>,
}

impl RandomizationScheme {
    pub fn isotropic(tau2: f64) -> Result<Self> {
        Self::checked(SchemeKind::Isotropic, tau2, None)
    }

    pub fn carving(tau2: f64) -> Result<Self> {
        Self::checked(SchemeKind::Carving, tau2, None)
    }

    pub fn explicit(omega: DMatrix<f64>) -> Result<Self> {
        if !omega.is_square() {
            return Err(Error::InvalidScheme("Ω must be square".into()));
        }
        let asym = (&omega - omega.transpose()).amax();
        if asym > 1e-10 * (1.0 + omega.amax()) {
            return Err(Error::InvalidScheme("Ω must be symmetric".into()));
        }
        SpdFactor::new(&omega, "Ω").map_err(|e| Error::InvalidScheme(e.to_string()))?;
        Ok(Self {
            kind: SchemeKind::Explicit,
            tau2: 1.0,
            matrix: Some(omega),
        })
    }

    fn checked(kind: SchemeKind, tau2: f64, matrix: Option<DMatrix<f64>>) -> Result<Self> {
        // τ² = 0 is accepted as a degenerate limit (no randomization).
        if !(tau2 >= 0.0 && tau2.is_finite()) {
            return Err(Error::InvalidScheme(format!(
                "τ² must be nonnegative, got {tau2}"
            )));
        }
        Ok(Self { kind, tau2, matrix })
    }

    /// The covariance matrix `Ω` for design `x`.
    pub fn omega(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = x.ncols();
        match self.kind {
            SchemeKind::Isotropic => Ok(DMatrix::identity(p, p) * self.tau2),
            SchemeKind::Carving => Ok(x.transpose() * x * self.tau2),
            SchemeKind::Explicit => {
                let m = self.matrix.as_ref().ok_or_else(|| {
                    Error::InvalidScheme("explicit scheme without a matrix".into())
                })?;
                if m.nrows() != p {
                    return Err(Error::DimensionMismatch(format!(
                        "Ω is {}×{} but the design has {p} columns",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Ok(m.clone())
            }
        }
    }
}

/// Draw `w ~ N(0, Ω)` deterministically from `seed`.
///
/// Carving draws use `w = τ·Xᵀz` with `z ~ N(0, I_n)`, which has covariance
/// exactly `τ²XᵀX` even when that matrix is singular.
pub fn sample_randomization(
    scheme: &RandomizationScheme,
    x: &DMatrix<f64>,
    seed: u64,
) -> Result<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = x.shape();
    let tau = scheme.tau2.sqrt();
    match scheme.kind {
        SchemeKind::Isotropic => Ok(DVector::from_fn(p, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            tau * z
        })),
        SchemeKind::Carving => {
            let z = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            Ok(x.transpose() * z * tau)
        }
        SchemeKind::Explicit => {
            let omega = scheme.omega(x)?;
            let f = SpdFactor::new(&omega, "Ω").map_err(|e| Error::InvalidScheme(e.to_string()))?;
            let z = DVector::from_fn(p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            Ok(f.l() * z)
        }
    }
}

/// Randomization scale matching a split with `n1` of `n` rows used for
/// selection: `σ̂²·(n − n1)/n1`.
pub fn tau2_from_split(sigma2_hat: f64, n: usize, n1: usize) -> Result<f64> {
    if !(sigma2_hat > 0.0 && sigma2_hat.is_finite()) {
        return invalid(format!("σ̂² must be positive, got {sigma2_hat}"));
    }
    if n1 == 0 || n1 >= n {
        return invalid(format!("need 0 < n1 < n, got n1 = {n1}, n = {n}"));
    }
    Ok(sigma2_hat * (n - n1) as f64 / n1 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau2_examples() {
        assert_eq!(tau2_from_split(1.0, 2, 1).unwrap(), 1.0);
        assert!((tau2_from_split(3.0, 500, 400).unwrap() - 0.75).abs() < 1e-15);
        assert!(tau2_from_split(2.0, 100, 100).is_err());
        assert!(tau2_from_split(2.0, 100, 0).is_err());
    }

    #[test]
    fn degenerate_isotropic_is_zero() {
        let x = DMatrix::from_element(5, 3, 1.0);
        let s = RandomizationScheme::isotropic(0.0).unwrap();
        assert_eq!(sample_randomization(&s, &x, 9).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn seeded_draws_repeat() {
        let x = DMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64 / 7.0);
        let s = RandomizationScheme::carving(0.5).unwrap();
        assert_eq!(
            sample_randomization(&s, &x, 4).unwrap(),
            sample_randomization(&s, &x, 4).unwrap()
        );
        assert_ne!(
            sample_randomization(&s, &x, 4).unwrap(),
            sample_randomization(&s, &x, 5).unwrap()
        );
    }

    #[test]
    fn explicit_rejects_non_pd() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            RandomizationScheme::explicit(m),
            Err(Error::InvalidScheme(_))
        ));
    }
}
