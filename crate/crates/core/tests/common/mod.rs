#![allow(dead_code)]

use rand::SeedableRng;
use vdm::data::{Dataset, Trajectory};
use vdm::diffcore::{ParamId, ParameterStore};
use vdm::nets::{Model, ModelConfig};
use vdm::VdmRng;

pub fn rng(seed: u64) -> VdmRng {
    VdmRng::seed_from_u64(seed)
}

pub fn model(cfg: ModelConfig, seed: u64) -> Model {
    Model::new(cfg, &mut rng(seed)).unwrap()
}

pub fn dataset(d_x: usize, seqs: Vec<Vec<Vec<f64>>>, prefix_len: usize) -> Dataset {
    let t = seqs
        .into_iter()
        .map(|s| Trajectory::new(s, prefix_len).unwrap())
        .collect();
    Dataset::new(d_x, t).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Outcome of comparing one analytic partial with central differences.
#[derive(Debug)]
pub enum FdCheck {
    Match(f64),
    /// Two step sizes disagree with each other: the entry sits on a kink.
    NonSmooth,
    Mismatch { analytic: f64, numeric: f64, err: f64 },
}

/// Central difference of `f` in entry `i` of parameter `id` of the store
/// that `store` selects inside `obj`, compared with `analytic`.
pub fn fd_check<T>(
    obj: &mut T,
    store: impl Fn(&mut T) -> &mut ParameterStore,
    id: ParamId,
    i: usize,
    analytic: f64,
    tol: f64,
    mut f: impl FnMut(&T) -> f64,
) -> FdCheck {
    let mut central = |obj: &mut T, h: f64| {
        let x0 = store(obj).value(id).data()[i];
        store(obj).value_mut(id).data_mut()[i] = x0 + h;
        let up = f(obj);
        store(obj).value_mut(id).data_mut()[i] = x0 - h;
        let down = f(obj);
        store(obj).value_mut(id).data_mut()[i] = x0;
        (up - down) / (2.0 * h)
    };
    let n1 = central(obj, 1e-6);
    let e1 = rel_err(analytic, n1);
    if e1 < tol {
        return FdCheck::Match(e1);
    }
    let n2 = central(obj, 2.5e-7);
    if rel_err(n1, n2) > tol {
        return FdCheck::NonSmooth;
    }
    FdCheck::Mismatch {
        analytic,
        numeric: n1,
        err: e1,
    }
}

/// Up to `per_tensor` entry indices of every parameter, chosen by `seed`.
pub fn sample_entries(store: &ParameterStore, per_tensor: usize, seed: u64) -> Vec<(ParamId, usize)> {
    use rand::Rng;
    let mut r = rng(seed);
    let mut out = Vec::new();
    for id in store.ids() {
        let n = store.value(id).len();
        if n <= per_tensor {
            out.extend((0..n).map(|i| (id, i)));
        } else {
            for _ in 0..per_tensor {
                out.push((id, r.random_range(0..n)));
            }
        }
    }
    out
}
pub mod grad;
pub mod oracles;

/// Values, Adam moments and step count of a store, for exact comparisons.
pub fn snapshot(store: &ParameterStore) -> (Vec<Vec<f64>>, u64) {
    let mut out = Vec::new();
    for id in store.ids() {
        out.push(store.value(id).data().to_vec());
        out.push(store.first_moment(id).data().to_vec());
        out.push(store.second_moment(id).data().to_vec());
    }
    (out, store.step())
}
