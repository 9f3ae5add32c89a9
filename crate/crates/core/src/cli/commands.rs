use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, Provenance, RngState};
use super::config::{Generator, RunConfig};
use super::fsio::{write_atomic, write_with};
use crate::data::{
    four_mode_splits, group_by_prefix, load_csv, read_groups, simulate_lorenz, write_dataset,
    write_forecasts, write_groups, write_latents, Dataset, FourModeConfig, LorenzConfig,
    LorenzCounts, Manifest, Normalizer, Trajectory,
};
use crate::error::{Result, VdmError};
use crate::eval::{
    multi_step_nll_dataset, one_step_nll, w_distance_protocol, Forecaster, MetricReport,
    ModelForecaster,
};
use crate::inference::{export_predictive_prior, filter_sequence, Draws};
use crate::nets::{Discriminator, Model};
use crate::objective::train;
use crate::VdmRng;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.vdm";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.toml";
pub const FORECAST_FILE: &str = "forecasts.csv";
pub const PRIOR_FILE: &str = "prior.csv";
pub const RUN_FILE: &str = "run.toml";

/// Machine-readable record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
    pub config: RunConfig,
}

fn write_run(out: &Path, command: &str, cfg: &RunConfig, ckpt: Option<String>) -> Result<()> {
    let rec = RunRecord {
        command: command.into(),
        checkpoint_id: ckpt,
        config: cfg.clone(),
    };
    let text = toml::to_string(&rec).map_err(|e| VdmError::Config(e.to_string()))?;
    write_atomic(&out.join(RUN_FILE), text.as_bytes())
}

fn write_csv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    write_with(path, f)
}

/// Simulates a dataset directory: CSV splits, groups (Lorenz) and a manifest.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Manifest> {
    let seed = cfg.seed()?;
    let generator = cfg
        .generator
        .ok_or_else(|| VdmError::Config("a generator is required (--gen)".into()))?;
    let out = cfg.out_dir();
    let mut rng = VdmRng::seed_from_u64(seed);
    let mut resolved = cfg.clone();
    let (name, d_x, seq_len, prefix_len, splits, groups) = match generator {
        Generator::Lorenz => {
            let d = LorenzCounts::default();
            let counts = LorenzCounts {
                train: cfg.n_train.unwrap_or(d.train),
                val: cfg.n_val.unwrap_or(d.val),
                test: cfg.n_test.unwrap_or(d.test),
                groups: cfg.n_groups.unwrap_or(d.groups),
                group_size: cfg.group_size.unwrap_or(d.group_size),
            };
            let l = LorenzConfig {
                seq_len: cfg.seq_len.unwrap_or(LorenzConfig::default().seq_len),
                prefix_len: cfg.prefix_len.unwrap_or(LorenzConfig::default().prefix_len),
                ..LorenzConfig::default()
            };
            let data = simulate_lorenz(&l, &counts, &mut rng)?;
            resolved.n_groups = Some(counts.groups);
            resolved.group_size = Some(counts.group_size);
            (
                "lorenz",
                3,
                l.seq_len,
                l.prefix_len,
                [data.train, data.val, data.test],
                Some(data.groups),
            )
        }
        Generator::FourMode => {
            let f = FourModeConfig {
                seq_len: cfg.seq_len.unwrap_or(FourModeConfig::default().seq_len),
                prefix_len: cfg
                    .prefix_len
                    .unwrap_or(FourModeConfig::default().prefix_len),
                ..FourModeConfig::default()
            };
            let n = cfg.n_train.unwrap_or(5000);
            let sizes = [n, cfg.n_val.unwrap_or(500), cfg.n_test.unwrap_or(500)];
            let s = four_mode_splits(&f, sizes, &mut rng)?;
            ("four_mode", 2, f.seq_len, f.prefix_len, s, None)
        }
    };
    let [train, val, test] = splits;
    resolved.n_train = Some(train.len());
    resolved.n_val = Some(val.len());
    resolved.n_test = Some(test.len());
    resolved.seq_len = Some(seq_len);
    resolved.prefix_len = Some(prefix_len);
    resolved.seed = Some(seed);
    resolved.out_dir = Some(out.clone());

    for (file, ds) in [
        ("train.csv", &train),
        ("val.csv", &val),
        ("test.csv", &test),
    ] {
        write_csv(&out.join(file), |b| write_dataset(b, ds))?;
    }
    if let Some(g) = &groups {
        write_csv(&out.join("groups.csv"), |b| write_groups(b, g))?;
    }
    let manifest = Manifest {
        generator: name.into(),
        seed,
        d_x,
        seq_len,
        prefix_len,
        n_train: train.len(),
        n_val: val.len(),
        n_test: test.len(),
        n_groups: groups.as_ref().map_or(0, Vec::len),
        group_size: groups
            .as_ref()
            .and_then(|g| g.first())
            .map_or(0, Dataset::len),
        train_file: "train.csv".into(),
        val_file: "val.csv".into(),
        test_file: "test.csv".into(),
        groups_file: groups.as_ref().map(|_| "groups.csv".into()),
    };
    write_atomic(&out.join(MANIFEST_FILE), manifest.to_toml()?.as_bytes())?;
    write_run(&out, "simulate", &resolved, None)?;
    Ok(manifest)
}

/// Manifest and its directory.
fn manifest_of(cfg: &RunConfig) -> Result<(Manifest, PathBuf)> {
    let path = cfg
        .manifest
        .clone()
        .ok_or_else(|| VdmError::Config("a dataset manifest is required (--data)".into()))?;
    let path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path
    };
    let m = Manifest::load(&path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((m, dir))
}

fn load_split(m: &Manifest, dir: &Path, file: &str) -> Result<Dataset> {
    load_csv(&dir.join(file), m.d_x, m.seq_len, m.prefix_len)
}

fn normalized(n: &Option<Normalizer>, ds: Dataset) -> Dataset {
    match n {
        Some(n) => n.apply_dataset(&ds),
        None => ds,
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint_id: String,
    pub best_epoch: usize,
    pub best_val_nll: Option<f64>,
    pub aborted: Option<String>,
}

/// Trains a model on a manifest's splits; writes the best checkpoint, the
/// metrics history and the run record. A diverged run still writes the last
/// good checkpoint and then fails.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let seed = cfg.seed()?;
    let (manifest, dir) = manifest_of(cfg)?;
    let out = cfg.out_dir();
    let train_raw = load_split(&manifest, &dir, &manifest.train_file)?;
    let val_raw = load_split(&manifest, &dir, &manifest.val_file)?;

    let (mut model, mut disc, normalizer, mut rng) = match &cfg.checkpoint {
        Some(path) => {
            let (c, _) = Checkpoint::load(path)?;
            if c.model.config.d_x != manifest.d_x {
                return Err(VdmError::Config(format!(
                    "checkpoint d_x {} does not match dataset d_x {}",
                    c.model.config.d_x, manifest.d_x
                )));
            }
            let rng = c.rng.restore()?;
            (c.model, c.disc, c.normalizer, rng)
        }
        None => {
            let mc = cfg.model_config(manifest.d_x, Some(&manifest.generator))?;
            let mut rng = VdmRng::seed_from_u64(seed);
            let model = Model::new(mc, &mut rng)?;
            let disc = Discriminator::for_model(&model.config, &mut rng);
            let normalizer = if cfg.normalize.unwrap_or(true) {
                Some(Normalizer::fit(&train_raw)?)
            } else {
                None
            };
            (model, disc, normalizer, rng)
        }
    };
    let tc = cfg.train_config()?;
    let train_ds = normalized(&normalizer, train_raw);
    let val_ds = normalized(&normalizer, val_raw);
    let outcome = train(
        &mut model,
        &mut disc,
        &train_ds,
        Some(&val_ds),
        &tc,
        &mut rng,
    )?;

    let ckpt = Checkpoint {
        model,
        disc,
        normalizer: normalizer.clone(),
        provenance: Provenance {
            manifest_hash: Some(manifest.hash()?),
            epoch: outcome.best_epoch,
            val_nll: outcome.best_val_nll,
        },
        rng: RngState::capture(&rng),
    };
    let id = ckpt.save(&out.join(CHECKPOINT_FILE))?;
    write_csv(&out.join(METRICS_FILE), |b| {
        let mut w = csv::Writer::from_writer(b);
        for row in &outcome.history {
            w.serialize(row)
                .map_err(|e| VdmError::Data(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut resolved = cfg.clone();
    resolved.record_model(&ckpt.model.config);
    resolved.record_train(&tc);
    resolved.normalize = Some(normalizer.is_some());
    resolved.out_dir = Some(out.clone());
    write_run(&out, "train", &resolved, Some(id.clone()))?;
    if let Some(msg) = &outcome.aborted {
        return Err(VdmError::LossNotFinite {
            step: outcome.history.len(),
            msg: format!("training aborted, last good checkpoint kept: {msg}"),
        });
    }
    Ok(TrainSummary {
        checkpoint_id: id,
        best_epoch: outcome.best_epoch,
        best_val_nll: outcome.best_val_nll,
        aborted: outcome.aborted,
    })
}

fn load_checkpoint(cfg: &RunConfig) -> Result<(Checkpoint, String)> {
    let path = cfg
        .checkpoint
        .clone()
        .ok_or_else(|| VdmError::Config("a checkpoint is required (--checkpoint)".into()))?;
    Checkpoint::load(&path)
}

fn check_dx(ckpt: &Checkpoint, d_x: usize) -> Result<()> {
    if ckpt.model.config.d_x != d_x {
        return Err(VdmError::Shape {
            op: "d_x",
            left: vec![ckpt.model.config.d_x],
            right: vec![d_x],
        });
    }
    Ok(())
}

/// Evaluates a checkpoint on the test split: multi-step NLL, one-step NLL and,
/// when groups are available, the grouped W-distance.
pub fn evaluate_with(
    forecaster: &dyn Forecaster,
    model: &Model,
    test: &Dataset,
    groups: Option<&[Dataset]>,
    cfg: &RunConfig,
    report: &mut MetricReport,
) -> Result<()> {
    let seed = cfg.seed()?;
    let mut root = VdmRng::seed_from_u64(seed);
    let n = cfg.n_forecasts.unwrap_or(1000);
    let mut draws = Draws::fork(&mut root);
    let nll = multi_step_nll_dataset(forecaster, test, n, cfg.nll_options(), &mut draws)?;
    report.push("multi_step_nll", nll);
    let mut draws = Draws::fork(&mut root);
    report.push("one_step_nll", one_step_nll(model, test, &mut draws)?);
    let mut draws = Draws::fork(&mut root);
    match groups {
        Some(g) if !g.is_empty() => {
            let per = cfg.forecasts_per_truth.unwrap_or(10);
            report.push(
                "w_distance",
                w_distance_protocol(forecaster, g, per, &mut draws)?,
            );
        }
        _ => report
            .notes
            .push("w_distance omitted: no groups of similar prefixes available".into()),
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<MetricReport> {
    let seed = cfg.seed()?;
    let (ckpt, id) = load_checkpoint(cfg)?;
    let (manifest, dir) = manifest_of(cfg)?;
    check_dx(&ckpt, manifest.d_x)?;
    let out = cfg.out_dir();
    let mut test = load_split(&manifest, &dir, &manifest.test_file)?;
    if let Some(n) = cfg.eval_sequences {
        test = test.take(n);
    }
    let groups = match (&manifest.groups_file, cfg.group_radius) {
        (Some(f), _) => Some(read_groups(
            std::fs::File::open(dir.join(f)).map_err(|e| VdmError::file(&dir.join(f), e))?,
            manifest.d_x,
            manifest.seq_len,
            manifest.prefix_len,
        )?),
        (None, Some(r)) => {
            let g = group_by_prefix(
                &test,
                cfg.n_groups.unwrap_or(10),
                cfg.group_size.unwrap_or(100),
                r,
            );
            Some(g.groups.into_iter().filter(|d| d.len() > 1).collect())
        }
        (None, None) => None,
    };
    let test = normalized(&ckpt.normalizer, test);
    let groups: Option<Vec<Dataset>> = groups.map(|g| {
        g.into_iter()
            .map(|d| normalized(&ckpt.normalizer, d))
            .collect()
    });

    let mut report = MetricReport {
        checkpoint_id: id.clone(),
        seed,
        ..Default::default()
    };
    if ckpt.normalizer.is_some() {
        report
            .notes
            .push("metrics are in standardized units (training-set mean and std)".into());
    }
    let f = ModelForecaster::new(&ckpt.model);
    evaluate_with(&f, &ckpt.model, &test, groups.as_deref(), cfg, &mut report)?;
    write_atomic(&out.join(REPORT_FILE), report.to_toml()?.as_bytes())?;
    let mut resolved = cfg.clone();
    resolved.n_forecasts = Some(cfg.n_forecasts.unwrap_or(1000));
    resolved.forecasts_per_truth = Some(cfg.forecasts_per_truth.unwrap_or(10));
    resolved.nll_reduction = Some(cfg.nll_options().reduction);
    resolved.per_dim_constant = Some(cfg.nll_options().per_dim_constant);
    write_run(&out, "evaluate", &resolved, Some(id))?;
    Ok(report)
}

/// Forecast files written by [`cmd_forecast`].
#[derive(Clone, Debug)]
pub struct ForecastOutput {
    pub forecasts: PathBuf,
    pub prior: Option<PathBuf>,
}

pub fn cmd_forecast(cfg: &RunConfig) -> Result<ForecastOutput> {
    let seed = cfg.seed()?;
    let horizon = cfg
        .horizon
        .filter(|&h| h > 0)
        .ok_or_else(|| VdmError::Config("horizon must be a positive integer".into()))?;
    let (ckpt, id) = load_checkpoint(cfg)?;
    let data = match &cfg.input {
        Some(path) => {
            let (seq_len, prefix_len) = match (cfg.seq_len, cfg.prefix_len) {
                (Some(s), Some(p)) => (s, p),
                _ => {
                    return Err(VdmError::Config(
                        "--input needs seq_len and prefix_len".into(),
                    ))
                }
            };
            load_csv(path, ckpt.model.config.d_x, seq_len, prefix_len)?
        }
        None => {
            let (m, dir) = manifest_of(cfg)?;
            check_dx(&ckpt, m.d_x)?;
            let mut ds = load_split(&m, &dir, &m.test_file)?;
            if let Some(p) = cfg.prefix_len {
                ds = ds.with_prefix_len(p)?;
            }
            ds
        }
    };
    check_dx(&ckpt, data.d_x)?;
    let data = normalized(&ckpt.normalizer, data);
    let n = cfg.n_forecasts.unwrap_or(1);
    let out = cfg.out_dir();
    let mut root = VdmRng::seed_from_u64(seed);
    let mut draws = Draws::fork(&mut root);
    let trs: Vec<&Trajectory> = data.iter().collect();
    let f = ModelForecaster::new(&ckpt.model);
    let mut forecasts = f.forecast(&trs, horizon, n, &mut draws)?;
    if let Some(norm) = &ckpt.normalizer {
        for x in forecasts.iter_mut().flatten().flatten() {
            *x = norm.invert(x);
        }
    }
    let fpath = out.join(FORECAST_FILE);
    write_csv(&fpath, |b| write_forecasts(b, &forecasts))?;

    let prior = match cfg.prior_draws.filter(|&m| m > 0) {
        Some(m) => {
            let mut all = Vec::with_capacity(trs.len());
            for t in &trs {
                let (_, beliefs) = filter_sequence(&ckpt.model, t.prefix(), &mut root)?;
                all.push(export_predictive_prior(
                    &ckpt.model,
                    &beliefs,
                    m,
                    &mut root,
                )?);
            }
            let p = out.join(PRIOR_FILE);
            write_csv(&p, |b| write_latents(b, &all))?;
            Some(p)
        }
        None => None,
    };
    let mut resolved = cfg.clone();
    resolved.n_forecasts = Some(n);
    write_run(&out, "forecast", &resolved, Some(id))?;
    Ok(ForecastOutput {
        forecasts: fpath,
        prior,
    })
}
