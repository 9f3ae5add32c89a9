use serde::{Deserialize, Serialize};

use crate::error::{Result, VdmError};

/// How branch weights are derived from branch likelihoods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Indicator at the most likely branch.
    Delta,
    /// Indicator at a branch drawn with probability proportional to likelihood.
    Categorical,
}

/// How latent samples are drawn from the collapsed belief.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    Sca,
    MonteCarlo,
}

/// Latent used when scoring a branch against the next observation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLatent {
    #[default]
    PriorMean,
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_x: usize,
    pub d_z: usize,
    pub d_h: usize,
    pub k: usize,
    pub kappa: f64,
    pub weighting_mode: WeightingMode,
    pub sampler_mode: SamplerMode,
    pub omega1: f64,
    pub omega2: f64,
    pub lr: f64,
    #[serde(default)]
    pub branch_latent: BranchLatent,
}

impl ModelConfig {
    /// SCA configuration with `k = 2 d_z + 1` and both regularizers on.
    pub fn new(d_x: usize, d_z: usize, d_h: usize) -> Self {
        Self {
            d_x,
            d_z,
            d_h,
            k: 2 * d_z + 1,
            kappa: 0.5,
            weighting_mode: WeightingMode::Delta,
            sampler_mode: SamplerMode::Sca,
            omega1: 1.0,
            omega2: 1.0,
            lr: 1e-3,
            branch_latent: BranchLatent::PriorMean,
        }
    }

    pub fn lorenz() -> Self {
        Self::new(3, 6, 32)
    }

    pub fn taxi() -> Self {
        Self::new(2, 6, 32)
    }

    pub fn four_mode() -> Self {
        Self::new(2, 4, 16)
    }

    /// Single-sample Monte-Carlo variant of this configuration.
    pub fn single_sample(mut self) -> Self {
        self.k = 1;
        self.sampler_mode = SamplerMode::MonteCarlo;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VdmError::Config(m));
        if self.d_x == 0 || self.d_z == 0 || self.d_h == 0 {
            return bad("d_x, d_z and d_h must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        for (name, w) in [("omega1", self.omega1), ("omega2", self.omega2)] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {w}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.sampler_mode == SamplerMode::Sca && self.k != 2 * self.d_z + 1 {
            return bad(format!(
                "sca sampling needs k = 2*d_z+1 = {}, got k = {}",
                2 * self.d_z + 1,
                self.k
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [
            ModelConfig::lorenz(),
            ModelConfig::taxi(),
            ModelConfig::four_mode(),
            ModelConfig::four_mode().single_sample(),
        ] {
            c.validate().unwrap();
        }
        assert_eq!(ModelConfig::lorenz().k, 13);
        assert_eq!(ModelConfig::four_mode().k, 9);
    }

    #[test]
    fn sca_requires_cubature_count() {
        let mut c = ModelConfig::lorenz();
        c.k = 5;
        assert!(c.validate().is_err());
        c.sampler_mode = SamplerMode::MonteCarlo;
        c.validate().unwrap();
    }

    #[test]
    fn single_sample_sca_rejected() {
        let mut c = ModelConfig::four_mode();
        c.k = 1;
        assert!(c.validate().is_err());
    }
}
