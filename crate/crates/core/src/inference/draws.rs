use rand::{Rng, SeedableRng};

use crate::diffcore::DenseArray;
use crate::error::{Result, VdmError};
use crate::sampling::standard_normal_matrix;
use crate::VdmRng;

#[derive(Clone, Debug)]
enum Entry {
    Normal(DenseArray),
    Index(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Live,
    Record,
    Replay,
}

/// Source of every random quantity used by the filter and the losses.
///
/// In record mode each draw is kept; [`Draws::replay`] then returns the same
/// noise and branch selections in the same order. Replaying makes a loss a
/// deterministic function of the parameters, which is what finite-difference
/// checks need.
#[derive(Clone, Debug)]
pub struct Draws {
    rng: VdmRng,
    mode: Mode,
    log: Vec<Entry>,
    cursor: usize,
}

impl Draws {
    pub fn live(rng: VdmRng) -> Self {
        Self {
            rng,
            mode: Mode::Live,
            log: Vec::new(),
            cursor: 0,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::live(VdmRng::seed_from_u64(seed))
    }

    /// Live draws seeded from one value taken from `rng`.
    pub fn fork(rng: &mut VdmRng) -> Self {
        Self::from_seed(rng.random())
    }

    pub fn recording(rng: VdmRng) -> Self {
        Self {
            mode: Mode::Record,
            ..Self::live(rng)
        }
    }

    /// Switches to replaying everything recorded so far from the beginning.
    pub fn replay(&self) -> Self {
        Self {
            rng: self.rng.clone(),
            mode: Mode::Replay,
            log: self.log.clone(),
            cursor: 0,
        }
    }

    pub fn rng(&mut self) -> &mut VdmRng {
        &mut self.rng
    }

    fn next(&mut self) -> Result<Entry> {
        let e = self
            .log
            .get(self.cursor)
            .cloned()
            .ok_or_else(|| VdmError::Invalid("replay exhausted".into()))?;
        self.cursor += 1;
        Ok(e)
    }

    /// Standard normal matrix of shape `(rows, cols)`.
    pub fn normal(&mut self, rows: usize, cols: usize) -> Result<DenseArray> {
        match self.mode {
            Mode::Replay => match self.next()? {
                Entry::Normal(a) if a.dims() == (rows, cols) => Ok(a),
                _ => Err(VdmError::Invalid(format!(
                    "replay mismatch: expected normal ({rows}, {cols})"
                ))),
            },
            mode => {
                let a = standard_normal_matrix(rows, cols, &mut self.rng);
                if mode == Mode::Record {
                    self.log.push(Entry::Normal(a.clone()));
                }
                Ok(a)
            }
        }
    }

    /// Index draws produced by `f`, or the recorded ones when replaying.
    pub fn indices(
        &mut self,
        f: impl FnOnce(&mut VdmRng) -> Result<Vec<usize>>,
    ) -> Result<Vec<usize>> {
        match self.mode {
            Mode::Replay => match self.next()? {
                Entry::Index(v) => Ok(v),
                _ => Err(VdmError::Invalid(
                    "replay mismatch: expected indices".into(),
                )),
            },
            mode => {
                let v = f(&mut self.rng)?;
                if mode == Mode::Record {
                    self.log.push(Entry::Index(v.clone()));
                }
                Ok(v)
            }
        }
    }
}
