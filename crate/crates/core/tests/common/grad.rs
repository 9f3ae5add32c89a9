use rand::Rng;
use vdm::diffcore::{DenseArray, ParamId, ParameterStore, Tape, Var};
use vdm::inference::Draws;
use vdm::nets::{Discriminator, Model, ModelConfig, WeightingMode};
use vdm::objective::build_loss;

use super::{fd_check, rel_err, rng, sample_entries, FdCheck};

pub const TOL: f64 = 1e-4;

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub non_smooth: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl GradReport {
    fn record(&mut self, what: &str, r: FdCheck) {
        self.checked += 1;
        match r {
            FdCheck::Match(e) => self.worst = self.worst.max(e),
            FdCheck::NonSmooth => self.non_smooth += 1,
            FdCheck::Mismatch {
                analytic,
                numeric,
                err,
            } => self
                .failures
                .push(format!("{what}: analytic {analytic} numeric {numeric} rel {err:.2e}")),
        }
    }

    pub fn merge(&mut self, o: GradReport) {
        self.checked += o.checked;
        self.non_smooth += o.non_smooth;
        self.worst = self.worst.max(o.worst);
        self.failures.extend(o.failures);
    }
}

pub fn grad_config(seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(2, 2, 4);
    if seed % 2 == 1 {
        cfg.weighting_mode = WeightingMode::Categorical;
    }
    cfg
}

fn random_matrix(r: &mut vdm::VdmRng, rows: usize, cols: usize) -> DenseArray {
    let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
    DenseArray::matrix(rows, cols, data).unwrap()
}

fn param_grads(tape: &Tape, loss: Var, store: &ParameterStore) -> Vec<Option<DenseArray>> {
    let g = tape.backward(loss).unwrap();
    tape.param_grads(&g, store)
}

fn analytic(grads: &[Option<DenseArray>], id: ParamId, i: usize) -> f64 {
    grads[id.index()].as_ref().map_or(0.0, |g| g.data()[i])
}

/// `sum(out * weights)` of a network applied to random inputs, checked in every
/// parameter with the given name prefix and in every input entry.
fn check_network<T: Clone>(
    obj: &T,
    store: fn(&mut T) -> &mut ParameterStore,
    prefix: &str,
    inputs: Vec<DenseArray>,
    out_weights: &DenseArray,
    forward: impl Fn(&T, &mut Tape, &[Var]) -> Var,
    seed: u64,
) -> GradReport {
    let mut report = GradReport::default();
    let eval = |obj: &T, inputs: &[DenseArray]| -> (Tape, Var, Vec<Var>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|a| tape.input(a.clone())).collect();
        let out = forward(obj, &mut tape, &vars);
        let w = tape.constant(out_weights.clone());
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod);
        (tape, loss, vars)
    };
    let mut obj = obj.clone();
    let (tape, loss, vars) = eval(&obj, &inputs);
    let grads = tape.backward(loss).unwrap();
    let pg = tape.param_grads(&grads, store(&mut obj));

    let ids: Vec<(ParamId, usize)> = sample_entries(store(&mut obj), 6, seed)
        .into_iter()
        .filter(|(id, _)| {
            let name = store(&mut obj.clone()).name(*id).to_string();
            name.starts_with(&format!("{prefix}."))
        })
        .collect();
    assert!(!ids.is_empty(), "no parameters named {prefix}.*");
    for (id, i) in ids {
        let a = analytic(&pg, id, i);
        let r = fd_check(&mut obj, store, id, i, a, TOL, |o| {
            let (t, l, _) = eval(o, &inputs);
            t.scalar(l)
        });
        report.record(&format!("{prefix} param {id:?}[{i}]"), r);
    }

    for (n, v) in vars.iter().enumerate() {
        let g = grads.get(*v).cloned().unwrap_or_else(|| DenseArray::zeros(inputs[n].shape()));
        for i in 0..inputs[n].len() {
            let f = |h: f64| {
                let mut shifted = inputs.clone();
                shifted[n].data_mut()[i] += h;
                let (t, l, _) = eval(&obj, &shifted);
                t.scalar(l)
            };
            let num = |h: f64| (f(h) - f(-h)) / (2.0 * h);
            let n1 = num(1e-6);
            let e = rel_err(g.data()[i], n1);
            let r = if e < TOL {
                FdCheck::Match(e)
            } else if rel_err(n1, num(2.5e-7)) > TOL {
                FdCheck::NonSmooth
            } else {
                FdCheck::Mismatch {
                    analytic: g.data()[i],
                    numeric: n1,
                    err: e,
                }
            };
            report.record(&format!("{prefix} input {n}[{i}]"), r);
        }
    }
    report
}

fn model_store(m: &mut Model) -> &mut ParameterStore {
    &mut m.store
}

fn disc_store(d: &mut Discriminator) -> &mut ParameterStore {
    &mut d.store
}

/// Every network on its own, then the model and discriminator losses of a
/// two-sequence batch with `T = 3`, all under frozen noise and selections.
pub fn gradient_suite(seed: u64) -> GradReport {
    let cfg = grad_config(seed);
    let (dx, dz, dh) = (cfg.d_x, cfg.d_z, cfg.d_h);
    let mut r = rng(1000 + seed);
    let model = Model::new(cfg.clone(), &mut r).unwrap();
    let disc = Discriminator::for_model(&cfg, &mut r);
    let rows = 3;
    let mut report = GradReport::default();

    let head_w = random_matrix(&mut r, rows, 2 * dz);
    let x = random_matrix(&mut r, rows, dx);
    let h = random_matrix(&mut r, rows, dh);
    let z = random_matrix(&mut r, rows, dz);
    report.merge(check_network(&model, model_store, "enc", vec![x.clone()], &head_w,
        |m, t, v| m.encoder_head(t, v[0]).unwrap(), seed));
    report.merge(check_network(&model, model_store, "tra", vec![h.clone()], &head_w,
        |m, t, v| m.transition_head(t, v[0]).unwrap(), seed));
    report.merge(check_network(&model, model_store, "inf", vec![h.clone(), x.clone()], &head_w,
        |m, t, v| m.inference_head(t, v[0], v[1]).unwrap(), seed));
    let dec_w = random_matrix(&mut r, rows, 2 * dx);
    report.merge(check_network(&model, model_store, "dec", vec![z.clone(), h.clone()], &dec_w,
        |m, t, v| m.decoder_head(t, v[0], v[1]).unwrap(), seed));
    let h_w = random_matrix(&mut r, rows, dh);
    report.merge(check_network(&model, model_store, "gru", vec![z.clone(), h.clone()], &h_w,
        |m, t, v| m.gru_step(t, v[0], v[1]).unwrap(), seed));
    report.merge(check_network(&disc, disc_store, "disc.gru", vec![x.clone(), h.clone()], &h_w,
        |d, t, v| d.summary_step(t, v[0], v[1]).unwrap(), seed));
    let p_w = random_matrix(&mut r, rows, 1);
    report.merge(check_network(&disc, disc_store, "disc.mlp", vec![h.clone(), x.clone()], &p_w,
        |d, t, v| d.prob(t, v[0], v[1]).unwrap(), seed));

    report.merge(loss_suite(&model, &disc, seed));
    report
}

fn batch(seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut r = rng(2000 + seed);
    (0..2)
        .map(|_| (0..3).map(|_| (0..2).map(|_| r.random_range(-1.5..1.5)).collect()).collect())
        .collect()
}

fn losses(model: &Model, disc: &Discriminator, seqs: &[Vec<Vec<f64>>], draws: &Draws) -> (f64, f64) {
    let mut d = draws.replay();
    let refs: Vec<&[Vec<f64>]> = seqs.iter().map(|s| s.as_slice()).collect();
    let mut tape = Tape::new();
    let g = build_loss(model, Some(disc), &mut tape, &refs, &mut d).unwrap();
    (tape.scalar(g.model_loss), tape.scalar(g.disc_loss.unwrap()))
}

fn loss_suite(model: &Model, disc: &Discriminator, seed: u64) -> GradReport {
    let mut report = GradReport::default();
    let seqs = batch(seed);
    let refs: Vec<&[Vec<f64>]> = seqs.iter().map(|s| s.as_slice()).collect();
    let mut draws = Draws::recording(rng(3000 + seed));
    let mut tape = Tape::new();
    let g = build_loss(model, Some(disc), &mut tape, &refs, &mut draws).unwrap();
    let model_g = param_grads(&tape, g.model_loss, &model.store);
    let disc_g = param_grads(&tape, g.disc_loss.unwrap(), &disc.store);

    // The recorded draws reproduce the loss exactly.
    assert_eq!(losses(model, disc, &seqs, &draws).0, tape.scalar(g.model_loss));

    let mut m = model.clone();
    for (id, i) in sample_entries(&model.store, 3, seed) {
        let a = analytic(&model_g, id, i);
        let r = fd_check(&mut m, model_store, id, i, a, TOL, |m| losses(m, disc, &seqs, &draws).0);
        report.record(&format!("total loss wrt {}[{i}]", model.store.name(id)), r);
    }
    let mut dc = disc.clone();
    for (id, i) in sample_entries(&disc.store, 3, seed) {
        let a = analytic(&disc_g, id, i);
        let r = fd_check(&mut dc, disc_store, id, i, a, TOL, |d| losses(model, d, &seqs, &draws).1);
        report.record(&format!("disc loss wrt {}[{i}]", disc.store.name(id)), r);
    }
    report
}
