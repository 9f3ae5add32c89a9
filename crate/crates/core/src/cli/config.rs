use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VdmError};
use crate::eval::{NllOptions, NllReduction};
use crate::nets::{BranchLatent, ModelConfig, SamplerMode, WeightingMode};
use crate::objective::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Generator {
    Lorenz,
    FourMode,
}

/// Run configuration; every field is optional so a file and command-line
/// flags can be layered. Field names are the config-file keys.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,

    pub generator: Option<Generator>,
    pub n_train: Option<usize>,
    pub n_val: Option<usize>,
    pub n_test: Option<usize>,
    pub n_groups: Option<usize>,
    pub group_size: Option<usize>,
    pub seq_len: Option<usize>,
    pub prefix_len: Option<usize>,

    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,

    pub d_z: Option<usize>,
    pub d_h: Option<usize>,
    pub k: Option<usize>,
    pub kappa: Option<f64>,
    pub weighting_mode: Option<WeightingMode>,
    pub sampler_mode: Option<SamplerMode>,
    pub branch_latent: Option<BranchLatent>,
    pub omega1: Option<f64>,
    pub omega2: Option<f64>,
    pub lr: Option<f64>,

    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub chunk_size: Option<usize>,
    pub patience: Option<usize>,
    pub val_sequences: Option<usize>,
    pub val_forecasts: Option<usize>,
    pub normalize: Option<bool>,
    pub threads: Option<usize>,

    pub n_forecasts: Option<usize>,
    pub forecasts_per_truth: Option<usize>,
    pub group_radius: Option<f64>,
    pub eval_sequences: Option<usize>,
    pub nll_reduction: Option<NllReduction>,
    pub per_dim_constant: Option<bool>,

    pub horizon: Option<usize>,
    pub prior_draws: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| VdmError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VdmError::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| VdmError::Config(e.to_string()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        let base = &mut self;
        overlay!(base, top;
            seed, out_dir, generator, n_train, n_val, n_test, n_groups, group_size, seq_len,
            prefix_len, manifest, checkpoint, input, d_z, d_h, k, kappa, weighting_mode,
            sampler_mode, branch_latent, omega1, omega2, lr, epochs, batch_size, chunk_size,
            patience, val_sequences, val_forecasts, normalize, threads, n_forecasts,
            forecasts_per_truth, group_radius, eval_sequences, nll_reduction, per_dim_constant,
            horizon, prior_draws);
        self
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| VdmError::Config("a seed is required (--seed or `seed`)".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Model configuration: a preset chosen by generator and `d_x`, then the
    /// explicit fields. Changing `d_z` under SCA sampling moves `k` along.
    pub fn model_config(&self, d_x: usize, generator: Option<&str>) -> Result<ModelConfig> {
        let mut c = match generator {
            Some("lorenz") if d_x == 3 => ModelConfig::lorenz(),
            Some("four_mode") if d_x == 2 => ModelConfig::four_mode(),
            _ => ModelConfig::new(d_x, 6, 32),
        };
        if let Some(v) = self.sampler_mode {
            c.sampler_mode = v;
        }
        if let Some(v) = self.d_z {
            c.d_z = v;
        }
        c.k = match (self.k, c.sampler_mode) {
            (Some(k), _) => k,
            (None, SamplerMode::Sca) => 2 * c.d_z + 1,
            (None, SamplerMode::MonteCarlo) => c.k,
        };
        if let Some(v) = self.d_h {
            c.d_h = v;
        }
        if let Some(v) = self.kappa {
            c.kappa = v;
        }
        if let Some(v) = self.weighting_mode {
            c.weighting_mode = v;
        }
        if let Some(v) = self.branch_latent {
            c.branch_latent = v;
        }
        if let Some(v) = self.omega1 {
            c.omega1 = v;
        }
        if let Some(v) = self.omega2 {
            c.omega2 = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        c.validate()?;
        Ok(c)
    }

    /// Writes the model fields back so the run record is fully resolved.
    pub fn record_model(&mut self, c: &ModelConfig) {
        self.d_z = Some(c.d_z);
        self.d_h = Some(c.d_h);
        self.k = Some(c.k);
        self.kappa = Some(c.kappa);
        self.weighting_mode = Some(c.weighting_mode);
        self.sampler_mode = Some(c.sampler_mode);
        self.branch_latent = Some(c.branch_latent);
        self.omega1 = Some(c.omega1);
        self.omega2 = Some(c.omega2);
        self.lr = Some(c.lr);
    }

    pub fn nll_options(&self) -> NllOptions {
        NllOptions {
            reduction: self.nll_reduction.unwrap_or_default(),
            per_dim_constant: self.per_dim_constant.unwrap_or(false),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let seed = self.seed()?;
        Ok(TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            chunk_size: self.chunk_size.unwrap_or(d.chunk_size),
            patience: self.patience.unwrap_or(d.patience),
            val_sequences: self.val_sequences.unwrap_or(d.val_sequences),
            val_forecasts: self.val_forecasts.unwrap_or(d.val_forecasts),
            nll: self.nll_options(),
            eval_seed: seed ^ 0x5eed,
            threads: self.threads,
        })
    }

    pub fn record_train(&mut self, t: &TrainConfig) {
        self.epochs = Some(t.epochs);
        self.batch_size = Some(t.batch_size);
        self.chunk_size = Some(t.chunk_size);
        self.patience = Some(t.patience);
        self.val_sequences = Some(t.val_sequences);
        self.val_forecasts = Some(t.val_forecasts);
        self.nll_reduction = Some(t.nll.reduction);
        self.per_dim_constant = Some(t.nll.per_dim_constant);
    }
}
