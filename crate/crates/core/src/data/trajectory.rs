use serde::{Deserialize, Serialize};

use crate::error::{Result, VdmError};

/// A `T x d_x` observation sequence; the first `prefix_len` steps condition
/// forecasts of the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub prefix_len: usize,
}

impl Trajectory {
    pub fn new(observations: Vec<Vec<f64>>, prefix_len: usize) -> Result<Self> {
        let t = Self {
            observations,
            prefix_len,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.observations.first().map_or(0, Vec::len);
        if self.observations.iter().any(|x| x.len() != d) {
            return Err(VdmError::Data("observations differ in dimension".into()));
        }
        if self.observations.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VdmError::Data("non-finite observation".into()));
        }
        if self.prefix_len == 0 || self.prefix_len > self.observations.len() {
            return Err(VdmError::Data(format!(
                "prefix length {} outside 1..={}",
                self.prefix_len,
                self.observations.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.observations.first().map_or(0, Vec::len)
    }

    pub fn prefix(&self) -> &[Vec<f64>] {
        &self.observations[..self.prefix_len]
    }

    pub fn continuation(&self) -> &[Vec<f64>] {
        &self.observations[self.prefix_len..]
    }

    pub fn horizon(&self) -> usize {
        self.len() - self.prefix_len
    }
}

/// A collection of trajectories with a common observation dimension.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub d_x: usize,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(d_x: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        for (i, t) in trajectories.iter().enumerate() {
            if t.dim() != d_x {
                return Err(VdmError::Data(format!(
                    "sequence {i} has dimension {} instead of {d_x}",
                    t.dim()
                )));
            }
        }
        Ok(Self { d_x, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    pub fn take(&self, n: usize) -> Self {
        Self {
            d_x: self.d_x,
            trajectories: self.trajectories.iter().take(n).cloned().collect(),
        }
    }

    pub fn with_prefix_len(mut self, prefix_len: usize) -> Result<Self> {
        for t in &mut self.trajectories {
            t.prefix_len = prefix_len;
            t.validate()?;
        }
        Ok(self)
    }
}

/// Per-dimension affine standardization `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Mean and standard deviation of every observation in `data`.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let d = data.d_x;
        let mut n = 0usize;
        let mut mean = vec![0.0; d];
        for x in data.iter().flat_map(|t| &t.observations) {
            n += 1;
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        if n < 2 {
            return Err(VdmError::Data("too few observations to standardize".into()));
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for x in data.iter().flat_map(|t| &t.observations) {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| (s / (n - 1) as f64).sqrt().max(1e-12))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Dataset {
        Dataset {
            d_x: data.d_x,
            trajectories: data
                .iter()
                .map(|t| Trajectory {
                    observations: t.observations.iter().map(|x| self.apply(x)).collect(),
                    prefix_len: t.prefix_len,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::new(vec![vec![1.0], vec![2.0]], 1).is_ok());
        assert!(Trajectory::new(vec![vec![1.0], vec![2.0]], 0).is_err());
        assert!(Trajectory::new(vec![vec![1.0], vec![2.0]], 3).is_err());
        assert!(Trajectory::new(vec![vec![f64::NAN]], 1).is_err());
        assert!(Trajectory::new(vec![vec![1.0], vec![2.0, 3.0]], 1).is_err());
    }

    #[test]
    fn normalizer_round_trip() {
        let ds = Dataset::new(
            2,
            vec![
                Trajectory::new(vec![vec![1.0, 10.0], vec![3.0, 30.0], vec![5.0, 20.0]], 1)
                    .unwrap(),
            ],
        )
        .unwrap();
        let n = Normalizer::fit(&ds).unwrap();
        assert_eq!(n.mean, vec![3.0, 20.0]);
        let x = [4.0, 12.0];
        let back = n.invert(&n.apply(&x));
        assert!((back[0] - 4.0).abs() < 1e-12 && (back[1] - 12.0).abs() < 1e-12);
    }
}
