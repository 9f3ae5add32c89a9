use rand::Rng;

use super::config::ModelConfig;
use super::layers::{row_input, GruCell, Mlp};
use crate::diffcore::{head_row_to_gaussian, DiagGaussian, ParameterStore, Tape, Var};
use crate::error::{Result, VdmError};

pub const ENCODER_HIDDEN: usize = 32;
pub const TRANSITION_HIDDEN: usize = 64;
pub const DECODER_HIDDEN: usize = 32;
pub const INFERENCE_HIDDEN: usize = 64;
pub const DISCRIMINATOR_HIDDEN: usize = 32;

fn check_input(what: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(VdmError::Shape {
            op: "network input",
            left: vec![v.len()],
            right: vec![len],
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(VdmError::NonFinite(what.into()));
    }
    Ok(())
}

/// Encoder, transition, decoder, inference network and latent GRU sharing one
/// parameter store.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParameterStore,
    pub encoder: Mlp,
    pub transition: Mlp,
    pub decoder: Mlp,
    pub inference: Mlp,
    pub gru: GruCell,
}

impl Model {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (dx, dz, dh) = (config.d_x, config.d_z, config.d_h);
        let mut store = ParameterStore::new();
        let encoder = Mlp::new(
            &mut store,
            "enc",
            &[dx, ENCODER_HIDDEN, ENCODER_HIDDEN, 2 * dz],
            rng,
        );
        let transition = Mlp::new(
            &mut store,
            "tra",
            &[dh, TRANSITION_HIDDEN, TRANSITION_HIDDEN, 2 * dz],
            rng,
        );
        let decoder = Mlp::new(
            &mut store,
            "dec",
            &[dz + dh, DECODER_HIDDEN, DECODER_HIDDEN, 2 * dx],
            rng,
        );
        let inference = Mlp::new(
            &mut store,
            "inf",
            &[dh + dx, INFERENCE_HIDDEN, INFERENCE_HIDDEN, 2 * dz],
            rng,
        );
        let gru = GruCell::new(&mut store, "gru", dz, dh, rng);
        Ok(Self {
            config,
            store,
            encoder,
            transition,
            decoder,
            inference,
            gru,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Sets the last layer of every Gaussian head to zero, so each emits N(0, I).
    pub fn zero_output_layers(&mut self) {
        for mlp in [
            &self.encoder,
            &self.transition,
            &self.decoder,
            &self.inference,
        ] {
            mlp.output_layer().zero(&mut self.store);
        }
    }

    pub fn encoder_head(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.encoder.forward(tape, &self.store, x)
    }

    pub fn transition_head(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        self.transition.forward(tape, &self.store, h)
    }

    /// Emission head from a latent and the previous recurrent state.
    pub fn decoder_head(&self, tape: &mut Tape, z: Var, h_prev: Var) -> Result<Var> {
        let zh = tape.concat_cols(&[z, h_prev])?;
        self.decoder.forward(tape, &self.store, zh)
    }

    pub fn inference_head(&self, tape: &mut Tape, s: Var, x: Var) -> Result<Var> {
        let sx = tape.concat_cols(&[s, x])?;
        self.inference.forward(tape, &self.store, sx)
    }

    pub fn gru_step(&self, tape: &mut Tape, z: Var, h: Var) -> Result<Var> {
        self.gru.forward(tape, &self.store, z, h)
    }

    pub fn encode_initial(&self, x: &[f64]) -> Result<DiagGaussian> {
        check_input("encoder input", x, self.config.d_x)?;
        let mut tape = Tape::new();
        let xv = row_input(&mut tape, x);
        let head = self.encoder_head(&mut tape, xv)?;
        head_row_to_gaussian(tape.value(head), 0)
    }

    pub fn transition_prior(&self, h: &[f64]) -> Result<DiagGaussian> {
        check_input("transition input", h, self.config.d_h)?;
        let mut tape = Tape::new();
        let hv = row_input(&mut tape, h);
        let head = self.transition_head(&mut tape, hv)?;
        head_row_to_gaussian(tape.value(head), 0)
    }

    pub fn gru_advance(&self, z: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        check_input("gru latent", z, self.config.d_z)?;
        check_input("gru state", h_prev, self.config.d_h)?;
        let mut tape = Tape::new();
        let zv = row_input(&mut tape, z);
        let hv = row_input(&mut tape, h_prev);
        let out = self.gru_step(&mut tape, zv, hv)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn emit(&self, z: &[f64], h_prev: &[f64]) -> Result<DiagGaussian> {
        check_input("decoder latent", z, self.config.d_z)?;
        check_input("decoder state", h_prev, self.config.d_h)?;
        let mut tape = Tape::new();
        let zv = row_input(&mut tape, z);
        let hv = row_input(&mut tape, h_prev);
        let head = self.decoder_head(&mut tape, zv, hv)?;
        head_row_to_gaussian(tape.value(head), 0)
    }

    pub fn infer_component(&self, s: &[f64], x: &[f64]) -> Result<DiagGaussian> {
        check_input("inference state", s, self.config.d_h)?;
        check_input("inference observation", x, self.config.d_x)?;
        let mut tape = Tape::new();
        let sv = row_input(&mut tape, s);
        let xv = row_input(&mut tape, x);
        let head = self.inference_head(&mut tape, sv, xv)?;
        head_row_to_gaussian(tape.value(head), 0)
    }
}

/// Conditional discriminator: a GRU summarizes past observations and an MLP
/// scores the candidate next observation.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub d_x: usize,
    pub d_h: usize,
    pub store: ParameterStore,
    pub gru: GruCell,
    pub head: Mlp,
}

impl Discriminator {
    pub fn new<R: Rng>(d_x: usize, d_h: usize, rng: &mut R) -> Self {
        let mut store = ParameterStore::new();
        let gru = GruCell::new(&mut store, "disc.gru", d_x, d_h, rng);
        let head = Mlp::new(
            &mut store,
            "disc.mlp",
            &[d_h + d_x, DISCRIMINATOR_HIDDEN, DISCRIMINATOR_HIDDEN, 1],
            rng,
        );
        Self {
            d_x,
            d_h,
            store,
            gru,
            head,
        }
    }

    pub fn for_model<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        Self::new(config.d_x, config.d_h, rng)
    }

    pub fn zero_output_layer(&mut self) {
        self.head.output_layer().zero(&mut self.store);
    }

    pub fn summary_step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        self.gru.forward(tape, &self.store, x, h)
    }

    /// Probability column `(n, 1)` that `x` continues the summarized prefix.
    pub fn prob(&self, tape: &mut Tape, summary: Var, x: Var) -> Result<Var> {
        let hx = tape.concat_cols(&[summary, x])?;
        let logit = self.head.forward(tape, &self.store, hx)?;
        Ok(tape.sigmoid(logit))
    }

    /// Runs the summarizer GRU over `prefix` starting from zero.
    pub fn summarize(&self, prefix: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut h = vec![0.0; self.d_h];
        for x in prefix {
            check_input("discriminator observation", x, self.d_x)?;
            let mut tape = Tape::new();
            let xv = row_input(&mut tape, x);
            let hv = row_input(&mut tape, &h);
            let out = self.summary_step(&mut tape, xv, hv)?;
            h = tape.value(out).data().to_vec();
        }
        Ok(h)
    }

    pub fn discriminate(&self, summary: &[f64], x: &[f64]) -> Result<f64> {
        check_input("discriminator summary", summary, self.d_h)?;
        check_input("discriminator observation", x, self.d_x)?;
        let mut tape = Tape::new();
        let hv = row_input(&mut tape, summary);
        let xv = row_input(&mut tape, x);
        let p = self.prob(&mut tape, hv, xv)?;
        Ok(tape.scalar(p))
    }
}
