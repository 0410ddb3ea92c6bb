//! Run configuration, read from JSON. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, DomainSpec, QuadratureSpec};
use crate::visco::{MemoryKernel, ViscoSettings};

pub const DEFAULT_OUTPUT_DIR: &str = "observalab-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainKind,
    /// Number of positive modes `N`.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Final times; defaults to `5 R`.
    #[serde(default)]
    pub horizons: Option<Vec<f64>>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    /// Truncations swept by `riesz`; defaults to `5, 10, 20, 40` up to `N`.
    #[serde(default)]
    pub riesz_counts: Option<Vec<usize>>,
    #[serde(default = "default_identity_index")]
    pub identity_max_index: usize,
    #[serde(default = "default_antisymmetry_index")]
    pub antisymmetry_max_index: usize,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<MemoryKernel>,
    #[serde(default)]
    pub visco: ViscoOptions,
    /// Monte-Carlo draws per configuration.
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_control_tolerance")]
    pub control_tolerance: f64,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscoOptions {
    #[serde(default = "default_fit_min_lambda")]
    pub fit_min_lambda: f64,
    #[serde(default = "default_draws")]
    pub c_alpha_draws: usize,
}

impl Default for ViscoOptions {
    fn default() -> Self {
        Self {
            fit_min_lambda: default_fit_min_lambda(),
            c_alpha_draws: default_draws(),
        }
    }
}

/// Optional replacements for the pass thresholds applied to reported errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub identity: Option<f64>,
    pub observability_slack: Option<f64>,
    pub steering: Option<f64>,
    pub damped_riesz_margin: Option<f64>,
}

fn default_modes() -> usize {
    20
}
fn default_identity_index() -> usize {
    20
}
fn default_antisymmetry_index() -> usize {
    15
}
fn default_draws() -> usize {
    200
}
fn default_fit_min_lambda() -> f64 {
    5.0
}
fn default_control_tolerance() -> f64 {
    1e-10
}
fn default_kernels() -> Vec<MemoryKernel> {
    [0.0, 0.2, 0.5]
        .into_iter()
        .map(|m0| MemoryKernel::exponential(m0, 1.0))
        .collect()
}

impl RunConfig {
    pub fn for_domain(domain: DomainKind) -> Self {
        serde_json::from_value(serde_json::json!({ "domain": domain }))
            .expect("a bare domain is a complete configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.domain).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn horizons(&self) -> Result<Vec<f64>> {
        match &self.horizons {
            Some(h) => Ok(h.clone()),
            None => Ok(vec![5.0 * self.domain_spec()?.radius]),
        }
    }

    pub fn riesz_counts(&self) -> Vec<usize> {
        match &self.riesz_counts {
            Some(c) => c.clone(),
            None => {
                let mut c: Vec<usize> = [5, 10, 20, 40].into_iter().filter(|&n| n < self.modes).collect();
                c.push(self.modes);
                c
            }
        }
    }

    pub fn visco_settings(&self) -> ViscoSettings {
        ViscoSettings {
            fit_min_lambda: self.visco.fit_min_lambda,
            c_alpha_draws: self.visco.c_alpha_draws,
            seed: self.seed,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.domain_spec()?;
        if self.modes == 0 {
            return bad("modes must be at least 1".into());
        }
        for t in self.horizons()? {
            if !(t > 0.0) || !t.is_finite() {
                return bad(format!("horizons must be positive and finite, got {t}"));
            }
        }
        for n in self.riesz_counts() {
            if n == 0 || n > self.modes {
                return bad(format!("riesz count {n} must be in 1..={}", self.modes));
            }
        }
        if self.draws == 0 || self.visco.c_alpha_draws == 0 {
            return bad("draw counts must be positive".into());
        }
        if self.quadrature.points_per_panel < 2 || self.quadrature.panels == 0 {
            return bad("quadrature needs at least 2 points per panel and 1 panel".into());
        }
        if !(self.control_tolerance > 0.0 && self.control_tolerance < 1.0) {
            return bad(format!("control_tolerance must be in (0, 1), got {}", self.control_tolerance));
        }
        let t = &self.tolerances;
        for v in [t.identity, t.observability_slack, t.steering, t.damped_riesz_margin]
            .into_iter()
            .flatten()
        {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("tolerance overrides must be finite and nonnegative, got {v}"));
            }
        }
        let longest = self.horizons()?.into_iter().fold(0.0, f64::max);
        for k in &self.kernels {
            k.validate(longest)?;
        }
        Ok(())
    }
}
