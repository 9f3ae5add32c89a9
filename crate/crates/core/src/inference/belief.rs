use super::draws::Draws;
use super::engine::{branch_step, init_state, select_branch, BatchState};
use crate::diffcore::{DenseArray, DiagGaussian, Tape};
use crate::error::{Result, VdmError};
use crate::nets::{Model, WeightingMode};
use crate::VdmRng;

/// Filtering state of one sequence after conditioning on an observation.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureBelief {
    /// Posterior component per branch.
    pub components: Vec<DiagGaussian>,
    /// Branch weights (an indicator).
    pub weights: Vec<f64>,
    /// Recurrent sample per branch.
    pub branch_states: Vec<Vec<f64>>,
    /// Weighted average of the branch states.
    pub expected_h: Vec<f64>,
    /// Gaussian carried to the next step.
    pub collapsed: DiagGaussian,
}

impl MixtureBelief {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn selected(&self) -> usize {
        self.weights
            .iter()
            .position(|&w| w == 1.0)
            .unwrap_or_default()
    }
}

/// Value-level filtering state of a batch of sequences.
#[derive(Clone, Debug)]
pub struct BatchBelief {
    pub mean: DenseArray,
    pub log_std: DenseArray,
    pub h: DenseArray,
    /// Branch states `(B*k, d_h)`; the zero state after initialization.
    pub branch_states: DenseArray,
    pub comp_mean: DenseArray,
    pub comp_log_std: DenseArray,
    pub selected: Vec<usize>,
    pub k: usize,
}

fn std_of(log_std: &[f64]) -> Vec<f64> {
    log_std.iter().map(|v| v.exp()).collect()
}

impl BatchBelief {
    pub fn len(&self) -> usize {
        self.mean.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn collapsed(&self, b: usize) -> DiagGaussian {
        DiagGaussian {
            mean: self.mean.row(b).to_vec(),
            std: std_of(self.log_std.row(b)),
        }
    }

    pub fn belief(&self, b: usize) -> MixtureBelief {
        let k = self.k;
        let rows = b * k..(b + 1) * k;
        let components = rows
            .clone()
            .map(|r| DiagGaussian {
                mean: self.comp_mean.row(r).to_vec(),
                std: std_of(self.comp_log_std.row(r)),
            })
            .collect();
        let mut weights = vec![0.0; k];
        weights[self.selected[b]] = 1.0;
        MixtureBelief {
            components,
            weights,
            branch_states: rows.map(|r| self.branch_states.row(r).to_vec()).collect(),
            expected_h: self.h.row(b).to_vec(),
            collapsed: self.collapsed(b),
        }
    }

    /// Rebuilds batch state from single-sequence beliefs.
    pub fn from_beliefs(beliefs: &[&MixtureBelief]) -> Result<Self> {
        let k = beliefs.first().map_or(1, |b| b.k());
        if beliefs.iter().any(|b| b.k() != k) {
            return Err(VdmError::Invalid("beliefs differ in branch count".into()));
        }
        let mean: Vec<&[f64]> = beliefs
            .iter()
            .map(|b| b.collapsed.mean.as_slice())
            .collect();
        let log_std: Vec<Vec<f64>> = beliefs
            .iter()
            .map(|b| b.collapsed.std.iter().map(|s| s.ln()).collect())
            .collect();
        let h: Vec<&[f64]> = beliefs.iter().map(|b| b.expected_h.as_slice()).collect();
        let states: Vec<&[f64]> = beliefs
            .iter()
            .flat_map(|b| b.branch_states.iter().map(Vec::as_slice))
            .collect();
        let cm: Vec<&[f64]> = beliefs
            .iter()
            .flat_map(|b| b.components.iter().map(|c| c.mean.as_slice()))
            .collect();
        let cl: Vec<Vec<f64>> = beliefs
            .iter()
            .flat_map(|b| {
                b.components
                    .iter()
                    .map(|c| c.std.iter().map(|s| s.ln()).collect())
            })
            .collect();
        Ok(Self {
            mean: DenseArray::from_rows(&mean)?,
            log_std: DenseArray::from_rows(&log_std)?,
            h: DenseArray::from_rows(&h)?,
            branch_states: DenseArray::from_rows(&states)?,
            comp_mean: DenseArray::from_rows(&cm)?,
            comp_log_std: DenseArray::from_rows(&cl)?,
            selected: beliefs.iter().map(|b| b.selected()).collect(),
            k,
        })
    }
}

fn check_obs(model: &Model, x: &DenseArray) -> Result<()> {
    if x.cols() != model.config.d_x {
        return Err(VdmError::Shape {
            op: "observation",
            left: x.shape().to_vec(),
            right: vec![model.config.d_x],
        });
    }
    if !x.all_finite() {
        return Err(VdmError::NonFinite("observation".into()));
    }
    Ok(())
}

/// Encoder belief for first observations `x1` of shape `(B, d_x)`.
pub fn init_batch(model: &Model, x1: &DenseArray) -> Result<BatchBelief> {
    check_obs(model, x1)?;
    let mut tape = Tape::new();
    let xv = tape.constant(x1.clone());
    let (state, _, _) = init_state(model, &mut tape, xv)?;
    let mean = tape.value(state.mean).clone();
    let log_std = tape.value(state.log_std).clone();
    let h = tape.value(state.h).clone();
    Ok(BatchBelief {
        branch_states: h.clone(),
        comp_mean: mean.clone(),
        comp_log_std: log_std.clone(),
        selected: vec![0; x1.rows()],
        k: 1,
        mean,
        log_std,
        h,
    })
}

/// One filter step of a batch with a fresh tape.
pub fn step_batch(
    model: &Model,
    prev: &BatchBelief,
    x: &DenseArray,
    draws: &mut Draws,
) -> Result<BatchBelief> {
    check_obs(model, x)?;
    if x.rows() != prev.len() {
        return Err(VdmError::Shape {
            op: "step_batch",
            left: vec![prev.len()],
            right: vec![x.rows()],
        });
    }
    let mut tape = Tape::new();
    let state = BatchState {
        mean: tape.constant(prev.mean.clone()),
        log_std: tape.constant(prev.log_std.clone()),
        h: tape.constant(prev.h.clone()),
    };
    let xv = tape.constant(x.clone());
    let step = branch_step(model, &mut tape, &state, xv, draws)?;
    Ok(BatchBelief {
        mean: tape.value(step.next.mean).clone(),
        log_std: tape.value(step.next.log_std).clone(),
        h: tape.value(step.next.h).clone(),
        branch_states: tape.value(step.s).clone(),
        comp_mean: tape.value(step.q_mean).clone(),
        comp_log_std: tape.value(step.q_log_std).clone(),
        selected: step.selected,
        k: model.config.k,
    })
}

/// Filters a batch of equally long prefixes; returns the belief after every step.
pub fn filter_batch(
    model: &Model,
    prefixes: &[&[Vec<f64>]],
    draws: &mut Draws,
) -> Result<Vec<BatchBelief>> {
    let len = prefixes.first().map_or(0, |p| p.len());
    if len == 0 {
        return Err(VdmError::Invalid("empty prefix".into()));
    }
    if prefixes.iter().any(|p| p.len() != len) {
        return Err(VdmError::Invalid("prefixes differ in length".into()));
    }
    let obs = |t: usize| -> Result<DenseArray> {
        let rows: Vec<&[f64]> = prefixes.iter().map(|p| p[t].as_slice()).collect();
        DenseArray::from_rows(&rows)
    };
    let mut out = vec![init_batch(model, &obs(0)?)?];
    for t in 1..len {
        let next = step_batch(model, out.last().expect("nonempty"), &obs(t)?, draws)?;
        out.push(next);
    }
    Ok(out)
}

/// Log-likelihood of `x` under each branch state (transition prior, latent
/// at the prior mean or a draw, emission).
pub fn branch_log_likelihoods(
    model: &Model,
    branch_states: &[Vec<f64>],
    x: &[f64],
    draws: &mut Draws,
) -> Result<Vec<f64>> {
    use crate::nets::BranchLatent;
    let mut out = Vec::with_capacity(branch_states.len());
    for s in branch_states {
        let prior = model.transition_prior(s)?;
        let z = match model.config.branch_latent {
            BranchLatent::PriorMean => prior.mean,
            BranchLatent::Sample => {
                let eps = draws.normal(1, prior.dim())?;
                prior
                    .mean
                    .iter()
                    .zip(&prior.std)
                    .zip(eps.data())
                    .map(|((m, s), e)| m + s * e)
                    .collect()
            }
        };
        out.push(model.emit(&z, s)?.log_pdf(x)?);
    }
    Ok(out)
}

/// Indicator weights over branches for observation `x`.
pub fn compute_weights(
    model: &Model,
    branch_states: &[Vec<f64>],
    x: &[f64],
    mode: WeightingMode,
    rng: &mut VdmRng,
) -> Result<Vec<f64>> {
    let mut draws = Draws::fork(rng);
    let lls = branch_log_likelihoods(model, branch_states, x, &mut draws)?;
    weights_from_log_likelihoods(&lls, mode, rng)
}

pub fn weights_from_log_likelihoods(
    lls: &[f64],
    mode: WeightingMode,
    rng: &mut VdmRng,
) -> Result<Vec<f64>> {
    let j = select_branch(lls, mode, rng)?;
    let mut w = vec![0.0; lls.len()];
    w[j] = 1.0;
    Ok(w)
}

pub fn belief_init(model: &Model, x_first: &[f64]) -> Result<MixtureBelief> {
    let x = DenseArray::row_vector(x_first.to_vec());
    Ok(init_batch(model, &x)?.belief(0))
}

pub fn belief_step(
    model: &Model,
    belief: &MixtureBelief,
    x: &[f64],
    rng: &mut VdmRng,
) -> Result<MixtureBelief> {
    let mut draws = Draws::fork(rng);
    belief_step_with(model, belief, x, &mut draws)
}

pub fn belief_step_with(
    model: &Model,
    belief: &MixtureBelief,
    x: &[f64],
    draws: &mut Draws,
) -> Result<MixtureBelief> {
    let prev = BatchBelief::from_beliefs(&[belief])?;
    let x = DenseArray::row_vector(x.to_vec());
    Ok(step_batch(model, &prev, &x, draws)?.belief(0))
}

/// Filters a prefix; returns the final belief and the belief after every step.
pub fn filter_sequence(
    model: &Model,
    x_prefix: &[Vec<f64>],
    rng: &mut VdmRng,
) -> Result<(MixtureBelief, Vec<MixtureBelief>)> {
    let mut draws = Draws::fork(rng);
    let steps = filter_batch(model, &[x_prefix], &mut draws)?;
    let beliefs: Vec<MixtureBelief> = steps.iter().map(|b| b.belief(0)).collect();
    Ok((beliefs.last().expect("nonempty").clone(), beliefs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::ModelConfig;
    use rand::SeedableRng;

    fn setup() -> (Model, VdmRng) {
        let mut rng = VdmRng::seed_from_u64(21);
        let m = Model::new(ModelConfig::new(2, 2, 4), &mut rng).unwrap();
        (m, rng)
    }

    #[test]
    fn init_belief_shape() {
        let (m, _) = setup();
        let b = belief_init(&m, &[0.3, -0.2]).unwrap();
        assert_eq!(b.weights, vec![1.0]);
        assert_eq!(b.expected_h, vec![0.0; 4]);
        assert_eq!(b.components[0], b.collapsed);
        assert_eq!(b.collapsed, m.encode_initial(&[0.3, -0.2]).unwrap());
    }

    #[test]
    fn step_invariants() {
        let (m, mut rng) = setup();
        let b0 = belief_init(&m, &[0.3, -0.2]).unwrap();
        let b1 = belief_step(&m, &b0, &[0.5, 0.1], &mut rng).unwrap();
        assert_eq!(b1.k(), 5);
        assert_eq!(b1.weights.iter().sum::<f64>(), 1.0);
        assert_eq!(b1.weights.iter().filter(|&&w| w == 1.0).count(), 1);
        let j = b1.selected();
        let mut eh = vec![0.0; 4];
        for (w, s) in b1.weights.iter().zip(&b1.branch_states) {
            for (e, v) in eh.iter_mut().zip(s) {
                *e += w * v;
            }
        }
        for (a, b) in eh.iter().zip(&b1.expected_h) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(b1.collapsed, b1.components[j]);
    }

    #[test]
    fn selection_matches_direct_weights() {
        let (m, mut rng) = setup();
        let b0 = belief_init(&m, &[0.3, -0.2]).unwrap();
        let x = [0.5, 0.1];
        let b1 = belief_step(&m, &b0, &x, &mut rng).unwrap();
        let w = compute_weights(&m, &b1.branch_states, &x, WeightingMode::Delta, &mut rng).unwrap();
        assert_eq!(w, b1.weights);
        let expected: Vec<DiagGaussian> = b1
            .branch_states
            .iter()
            .map(|s| m.infer_component(s, &x).unwrap())
            .collect();
        for (a, e) in b1.components.iter().zip(&expected) {
            for (x, y) in a.mean.iter().zip(&e.mean) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn filtering_is_deterministic() {
        let (m, _) = setup();
        let seq = vec![vec![0.1, 0.2], vec![0.3, 0.1], vec![-0.4, 0.9]];
        let a = filter_sequence(&m, &seq, &mut VdmRng::seed_from_u64(4)).unwrap();
        let b = filter_sequence(&m, &seq, &mut VdmRng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 3);
        assert!(filter_sequence(&m, &[], &mut VdmRng::seed_from_u64(4)).is_err());
        let (only, _) = filter_sequence(&m, &seq[..1], &mut VdmRng::seed_from_u64(4)).unwrap();
        assert_eq!(only, belief_init(&m, &seq[0]).unwrap());
    }
}
