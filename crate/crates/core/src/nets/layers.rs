use rand::Rng;

use crate::diffcore::{DenseArray, ParamId, ParameterStore, Tape, Var};
use crate::error::Result;

/// Fully connected layer `y = x W + b` with `W` of shape `(fan_in, fan_out)`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Weights and bias uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = store.insert_uniform(format!("{name}.w"), &[fan_in, fan_out], bound, rng);
        let b = store.insert_uniform(format!("{name}.b"), &[1, fan_out], bound, rng);
        Self {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.affine(x, w, b)
    }

    pub fn zero(&self, store: &mut ParameterStore) {
        for id in [self.w, self.b] {
            store.value_mut(id).data_mut().fill(0.0);
        }
    }
}

/// Stack of linear layers with ReLU between consecutive layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        sizes: &[usize],
        rng: &mut R,
    ) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = tape.relu(h);
            }
            h = layer.forward(tape, store, h)?;
        }
        Ok(h)
    }

    pub fn output_layer(&self) -> &Linear {
        self.layers.last().expect("mlp has layers")
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn out_dim(&self) -> usize {
        self.output_layer().fan_out
    }
}

/// Single-layer gated recurrent unit.
///
/// `r, u = sigmoid([z, h] W_g + b_g)`, `c = tanh([z, r*h] W_c + b_c)`,
/// `h' = u*h + (1-u)*c`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub gates: Linear,
    pub candidate: Linear,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let n = input_dim + hidden_dim;
        Self {
            gates: Linear::new(store, &format!("{name}.gates"), n, 2 * hidden_dim, rng),
            candidate: Linear::new(store, &format!("{name}.cand"), n, hidden_dim, rng),
            input_dim,
            hidden_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, z: Var, h: Var) -> Result<Var> {
        let d = self.hidden_dim;
        let zh = tape.concat_cols(&[z, h])?;
        let pre = self.gates.forward(tape, store, zh)?;
        let gates = tape.sigmoid(pre);
        let r = tape.slice_cols(gates, 0, d)?;
        let u = tape.slice_cols(gates, d, 2 * d)?;
        let rh = tape.mul(r, h)?;
        let zrh = tape.concat_cols(&[z, rh])?;
        let cpre = self.candidate.forward(tape, store, zrh)?;
        let c = tape.tanh(cpre);
        // h' = c + u*(h - c)
        let diff = tape.sub(h, c)?;
        let carried = tape.mul(u, diff)?;
        tape.add(c, carried)
    }

    /// Indices of the update-gate biases inside the fused gate bias row.
    pub fn update_bias_range(&self) -> std::ops::Range<usize> {
        self.hidden_dim..2 * self.hidden_dim
    }
}

pub(crate) fn row_input(tape: &mut Tape, v: &[f64]) -> Var {
    tape.constant(DenseArray::row_vector(v.to_vec()))
}
