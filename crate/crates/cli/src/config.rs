//! TOML configuration files. Command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use exact_selective::conditioning::ModelKind;
use exact_selective::inference::Method;
use exact_selective::numerics::QuadratureSpec;
use exact_selective::study::SimConfig;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub analysis: AnalysisFile,
    pub simulation: Option<SimConfig>,
}

/// The `[analysis]` table; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisFile {
    pub input: Option<PathBuf>,
    pub response: Option<String>,
    pub methods: Option<Vec<Method>>,
    pub model: Option<ModelKind>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub tau2: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub quad_points: Option<usize>,
    pub quad_width: Option<f64>,
    pub center: Option<bool>,
    pub scale: Option<bool>,
}

pub fn load(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// How much of the data the selection step is allowed to see.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Randomization {
    /// Fraction of rows a matching data split would use for selection.
    Rho(f64),
    /// Scale of the carving randomization `Ω = τ²XᵀX`.
    Tau2(f64),
}

/// Fully resolved settings of a `select` or `infer` run.
#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub response: String,
    pub methods: Vec<Method>,
    pub model: ModelKind,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub randomization: Randomization,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub sigma: Option<f64>,
    pub quad: QuadratureSpec,
    pub center: bool,
    pub scale: bool,
}

pub const DEFAULT_RHO: f64 = 0.8;
pub const DEFAULT_SEED: u64 = 2024;

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        match self.randomization {
            Randomization::Rho(r) if !(r > 0.0 && r < 1.0) => {
                bail!("rho must lie in (0, 1), got {r}")
            }
            Randomization::Tau2(t) if !(t > 0.0 && t.is_finite()) => {
                bail!("tau2 must be positive, got {t}")
            }
            _ => {}
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                bail!("lambda must be positive, got {l}");
            }
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                bail!("epsilon must be nonnegative, got {e}");
            }
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                bail!("sigma must be positive, got {s}");
            }
        }
        if self.methods.is_empty() {
            bail!("no inference method requested");
        }
        self.quad.validate()?;
        Ok(())
    }
}

/// Pick exactly one of `rho` and `tau2`, defaulting to `rho = 0.8`.
pub fn resolve_randomization(rho: Option<f64>, tau2: Option<f64>) -> Result<Randomization> {
    match (rho, tau2) {
        (Some(_), Some(_)) => bail!("give either rho or tau2, not both"),
        (Some(r), None) => Ok(Randomization::Rho(r)),
        (None, Some(t)) => Ok(Randomization::Tau2(t)),
        (None, None) => Ok(Randomization::Rho(DEFAULT_RHO)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let err = toml::from_str::<ConfigFile>("[analysis]\nalhpa = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("alhpa"), "{err}");
        let err = toml::from_str::<ConfigFile>("[simulation]\nreps = 3\n").unwrap_err();
        assert!(err.to_string().contains("reps"), "{err}");
    }

    #[test]
    fn sections_parse() {
        let c: ConfigFile = toml::from_str(
            "[analysis]\nmethods = [\"exact\", \"split\"]\nmodel = \"full\"\n\n[simulation]\nn = 50\np = 10\n",
        )
        .unwrap();
        assert_eq!(c.analysis.methods, Some(vec![Method::Exact, Method::Split]));
        assert_eq!(c.analysis.model, Some(ModelKind::Full));
        let sim = c.simulation.unwrap();
        assert_eq!((sim.n, sim.p), (50, 10));
        assert_eq!(sim.sparsity, SimConfig::default().sparsity);
    }

    #[test]
    fn rho_and_tau2_are_exclusive() {
        assert!(resolve_randomization(Some(0.5), Some(1.0)).is_err());
        assert_eq!(
            resolve_randomization(None, None).unwrap(),
            Randomization::Rho(DEFAULT_RHO)
        );
    }
}
