use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{build_loss, LossBreakdown};
use crate::data::Dataset;
use crate::diffcore::{AdamConfig, DenseArray, ParamId, ParameterStore, Tape};
use crate::error::{Result, VdmError};
use crate::eval::{multi_step_nll_dataset, ModelForecaster, NllOptions};
use crate::inference::Draws;
use crate::nets::{Discriminator, Model};
use crate::VdmRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Sequences per tape; bounds memory, not the gradient.
    pub chunk_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Validation sequences used for the multi-step NLL.
    pub val_sequences: usize,
    pub val_forecasts: usize,
    pub nll: NllOptions,
    pub eval_seed: u64,
    /// Worker threads; `None` reads `VDM_THREADS` and falls back to 1.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            chunk_size: 8,
            patience: 10,
            val_sequences: 100,
            val_forecasts: 100,
            nll: NllOptions::default(),
            eval_seed: 0,
            threads: None,
        }
    }
}

/// One row of the metrics history; epoch 0 is the initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub elbo: f64,
    pub pred: f64,
    pub adv: f64,
    pub disc: f64,
    pub val_nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_nll: Option<f64>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

fn thread_count(cfg: &TrainConfig) -> usize {
    cfg.threads
        .or_else(|| std::env::var("VDM_THREADS").ok()?.parse().ok())
        .unwrap_or(1)
        .max(1)
}

type Grads = Vec<Option<DenseArray>>;

struct ChunkResult {
    model: Grads,
    disc: Option<Grads>,
    loss: LossBreakdown,
    n: usize,
}

fn run_chunk(
    model: &Model,
    disc: &Discriminator,
    seqs: &[&[Vec<f64>]],
    seed: u64,
) -> Result<ChunkResult> {
    let mut tape = Tape::new();
    let mut draws = Draws::from_seed(seed);
    let graph = build_loss(model, Some(disc), &mut tape, seqs, &mut draws)?;
    let g = tape.backward(graph.model_loss)?;
    let model_grads = tape.param_grads(&g, &model.store);
    let disc_grads = match graph.disc_loss {
        Some(d) => {
            let g = tape.backward(d)?;
            Some(tape.param_grads(&g, &disc.store))
        }
        None => None,
    };
    Ok(ChunkResult {
        model: model_grads,
        disc: disc_grads,
        loss: graph.breakdown,
        n: seqs.len(),
    })
}

fn add_grads(store: &mut ParameterStore, grads: &Grads, scale: f64) -> Result<()> {
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            store.accumulate_grad(ParamId(i), &g.map(|v| v * scale))?;
        }
    }
    Ok(())
}

fn is_divergence(e: &VdmError) -> bool {
    matches!(
        e,
        VdmError::NonFinite(_) | VdmError::LossNotFinite { .. } | VdmError::NanGradient(_)
    )
}

/// Validation multi-step NLL with a fixed evaluation seed.
pub fn validation_nll(model: &Model, val: &Dataset, cfg: &TrainConfig) -> Result<f64> {
    let subset = val.take(cfg.val_sequences);
    let mut draws = Draws::from_seed(cfg.eval_seed);
    let f = ModelForecaster::new(model);
    Ok(multi_step_nll_dataset(&f, &subset, cfg.val_forecasts, cfg.nll, &mut draws)?.value)
}

/// One minibatch: forward/backward per chunk, then one discriminator and one
/// model Adam step.
fn train_batch(
    model: &mut Model,
    disc: &mut Discriminator,
    batch: &[&[Vec<f64>]],
    cfg: &TrainConfig,
    pool: &rayon::ThreadPool,
    rng: &mut VdmRng,
) -> Result<(LossBreakdown, usize)> {
    // Chunks hold equally long sequences; seeds are drawn in chunk order.
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by_key(|&i| batch[i].len());
    let mut jobs: Vec<(Vec<&[Vec<f64>]>, u64)> = Vec::new();
    for group in order.chunk_by(|&a, &b| batch[a].len() == batch[b].len()) {
        for c in group.chunks(cfg.chunk_size.max(1)) {
            jobs.push((c.iter().map(|&i| batch[i]).collect(), rng.random()));
        }
    }
    let (m, d) = (&*model, &*disc);
    let results: Vec<Result<ChunkResult>> = if pool.current_num_threads() > 1 {
        pool.install(|| {
            jobs.par_iter()
                .map(|(s, seed)| run_chunk(m, d, s, *seed))
                .collect()
        })
    } else {
        jobs.iter()
            .map(|(s, seed)| run_chunk(m, d, s, *seed))
            .collect()
    };

    let total_n = batch.len() as f64;
    model.store.zero_grads();
    disc.store.zero_grads();
    let mut sum = LossBreakdown::default();
    for r in results {
        let r = r?;
        let w = r.n as f64 / total_n;
        add_grads(&mut model.store, &r.model, w)?;
        if let Some(g) = &r.disc {
            add_grads(&mut disc.store, g, w)?;
        }
        sum.elbo += w * r.loss.elbo;
        sum.pred += w * r.loss.pred;
        sum.adv += w * r.loss.adv;
        sum.disc += w * r.loss.disc;
        sum.total += w * r.loss.total;
    }
    let adam = AdamConfig {
        lr: model.config.lr,
        ..AdamConfig::default()
    };
    if model.config.omega2 > 0.0 {
        disc.store.adam_step(&adam)?;
    }
    model.store.adam_step(&adam)?;
    Ok((sum, batch.len()))
}

/// Minibatch Adam on the training loss with early stopping on validation
/// multi-step NLL. On return `model` and `disc` hold the best-validation
/// state (the final state when there is no validation set).
pub fn train(
    model: &mut Model,
    disc: &mut Discriminator,
    data: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    rng: &mut VdmRng,
) -> Result<TrainOutcome> {
    model.config.validate()?;
    if cfg.epochs > 0 && data.is_empty() {
        return Err(VdmError::Invalid("empty training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(VdmError::Config("batch_size must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cfg))
        .build()
        .map_err(|e| VdmError::Config(e.to_string()))?;

    let val = val.filter(|v| !v.is_empty());
    let mut best_val = val.map(|v| validation_nll(model, v, cfg)).transpose()?;
    let mut history = vec![EpochMetrics {
        epoch: 0,
        loss: f64::NAN,
        elbo: f64::NAN,
        pred: f64::NAN,
        adv: f64::NAN,
        disc: f64::NAN,
        val_nll: best_val,
    }];
    let mut best = (model.clone(), disc.clone());
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut aborted = None;
    let mut indices: Vec<usize> = (0..data.len()).collect();

    'epochs: for epoch in 1..=cfg.epochs {
        indices.shuffle(rng);
        let mut acc = LossBreakdown::default();
        let mut seen = 0usize;
        for idx in indices.chunks(cfg.batch_size) {
            let batch: Vec<&[Vec<f64>]> = idx
                .iter()
                .map(|&i| data.trajectories[i].observations.as_slice())
                .collect();
            match train_batch(model, disc, &batch, cfg, &pool, rng) {
                Ok((l, n)) => {
                    let w = n as f64;
                    acc.elbo += w * l.elbo;
                    acc.pred += w * l.pred;
                    acc.adv += w * l.adv;
                    acc.disc += w * l.disc;
                    acc.total += w * l.total;
                    seen += n;
                }
                Err(e) if is_divergence(&e) => {
                    log::error!("epoch {epoch}: {e}; keeping last good state");
                    aborted = Some(e.to_string());
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let n = seen.max(1) as f64;
        let val_nll = val.map(|v| validation_nll(model, v, cfg)).transpose()?;
        history.push(EpochMetrics {
            epoch,
            loss: acc.total / n,
            elbo: acc.elbo / n,
            pred: acc.pred / n,
            adv: acc.adv / n,
            disc: acc.disc / n,
            val_nll,
        });
        log::info!(
            "epoch {epoch}: loss {:.4} val_nll {:?}",
            acc.total / n,
            val_nll
        );
        let improved = match (val_nll, best_val) {
            (Some(v), Some(b)) => v < b,
            (Some(v), None) => v.is_finite(),
            (None, _) => true,
        };
        if improved {
            best_val = val_nll;
            best_epoch = epoch;
            since_best = 0;
            best = (model.clone(), disc.clone());
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log::info!("stopping after {epoch} epochs without improvement");
                break;
            }
        }
    }
    if aborted.is_some() || val.is_some() {
        *model = best.0;
        *disc = best.1;
    }
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_nll: best_val,
        aborted,
    })
}
