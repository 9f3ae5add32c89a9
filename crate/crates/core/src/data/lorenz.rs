use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trajectory::{Dataset, Trajectory};
use crate::error::{Result, VdmError};
use crate::VdmRng;

/// Stochastic Lorenz system: RK4 flow, two-component Gaussian-mixture process
/// noise and additive Gaussian observation noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzConfig {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub seq_len: usize,
    pub prefix_len: usize,
    pub m0: [f64; 3],
    pub m1: [f64; 3],
    pub p: [[f64; 3]; 3],
    pub obs_std: [f64; 3],
    /// Initial states are uniform in this box.
    pub init_low: [f64; 3],
    pub init_high: [f64; 3],
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            dt: 0.01,
            seq_len: 100,
            prefix_len: 10,
            m0: [0.0, 1.0, 0.0],
            m1: [0.0, -1.0, 0.0],
            p: [[0.06, 0.03, 0.01], [0.03, 0.03, 0.03], [0.01, 0.03, 0.05]],
            obs_std: [0.6, 0.4, 0.8],
            init_low: [-10.0, -10.0, 10.0],
            init_high: [10.0, 10.0, 30.0],
        }
    }
}

impl LorenzConfig {
    /// Same flow with all noise switched off.
    pub fn noiseless() -> Self {
        Self {
            m0: [0.0; 3],
            m1: [0.0; 3],
            p: [[0.0; 3]; 3],
            obs_std: [0.0; 3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(VdmError::Config("dt must be positive".into()));
        }
        if self.prefix_len == 0 || self.prefix_len > self.seq_len {
            return Err(VdmError::Config("prefix_len must be in 1..=seq_len".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                if (self.p[i][j] - self.p[j][i]).abs() > 1e-12 {
                    return Err(VdmError::Config("process covariance not symmetric".into()));
                }
            }
        }
        cholesky3(&self.p).map(|_| ())
    }

    fn field(&self, s: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (s[1] - s[0]),
            s[0] * (self.rho - s[2]) - s[1],
            s[0] * s[1] - self.beta * s[2],
        ]
    }
}

/// Lower Cholesky factor of a symmetric positive semi-definite 3x3 matrix.
fn cholesky3(p: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = p[i][i] - s;
                if d < -1e-12 {
                    return Err(VdmError::Config("process covariance not PSD".into()));
                }
                l[i][i] = d.max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = (p[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// One classical fourth-order Runge-Kutta step of the Lorenz field.
pub fn rk4_step(state: [f64; 3], cfg: &LorenzConfig) -> [f64; 3] {
    let h = cfg.dt;
    let add =
        |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = cfg.field(state);
    let k2 = cfg.field(add(state, k1, h / 2.0));
    let k3 = cfg.field(add(state, k2, h / 2.0));
    let k4 = cfg.field(add(state, k3, h));
    let mut out = state;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Latent path and noisy observations of one sequence starting at `x0`.
///
/// The first observation is `x0` plus observation noise; every later state is
/// an RK4 step plus one draw of the process-noise mixture.
pub fn simulate_sequence(
    cfg: &LorenzConfig,
    x0: [f64; 3],
    rng: &mut VdmRng,
) -> Result<(Vec<[f64; 3]>, Vec<Vec<f64>>)> {
    let l = cholesky3(&cfg.p)?;
    let mut latent = Vec::with_capacity(cfg.seq_len);
    let mut obs = Vec::with_capacity(cfg.seq_len);
    let mut s = x0;
    for t in 0..cfg.seq_len {
        if t > 0 {
            s = rk4_step(s, cfg);
            let m = if rng.random_bool(0.5) { cfg.m0 } else { cfg.m1 };
            let e: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
            for i in 0..3 {
                s[i] += m[i] + (0..=i).map(|j| l[i][j] * e[j]).sum::<f64>();
            }
        }
        latent.push(s);
        obs.push(
            (0..3)
                .map(|i| s[i] + cfg.obs_std[i] * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
    }
    Ok((latent, obs))
}

fn initial_state(cfg: &LorenzConfig, rng: &mut VdmRng) -> [f64; 3] {
    std::array::from_fn(|i| rng.random_range(cfg.init_low[i]..=cfg.init_high[i]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub groups: usize,
    pub group_size: usize,
}

impl Default for LorenzCounts {
    fn default() -> Self {
        Self {
            train: 5000,
            val: 200,
            test: 800,
            groups: 10,
            group_size: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LorenzData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Each group shares one initial state and differs only in noise.
    pub groups: Vec<Dataset>,
}

/// Simulates the train/validation/test splits and the W-distance groups.
pub fn simulate_lorenz(
    cfg: &LorenzConfig,
    counts: &LorenzCounts,
    rng: &mut VdmRng,
) -> Result<LorenzData> {
    cfg.validate()?;
    let split = |n: usize, rng: &mut VdmRng| -> Result<Dataset> {
        let seqs = (0..n)
            .map(|_| {
                let x0 = initial_state(cfg, rng);
                let (_, obs) = simulate_sequence(cfg, x0, rng)?;
                Trajectory::new(obs, cfg.prefix_len)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(3, seqs)
    };
    let train = split(counts.train, rng)?;
    let val = split(counts.val, rng)?;
    let test = split(counts.test, rng)?;
    let mut groups = Vec::with_capacity(counts.groups);
    for _ in 0..counts.groups {
        let x0 = initial_state(cfg, rng);
        let seqs = (0..counts.group_size)
            .map(|_| {
                let (_, obs) = simulate_sequence(cfg, x0, rng)?;
                Trajectory::new(obs, cfg.prefix_len)
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(Dataset::new(3, seqs)?);
    }
    Ok(LorenzData {
        train,
        val,
        test,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn origin_is_fixed() {
        assert_eq!(rk4_step([0.0; 3], &LorenzConfig::default()), [0.0; 3]);
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let p = LorenzConfig::default().p;
        let l = cholesky3(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - p[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn noiseless_simulation_follows_rk4() {
        let cfg = LorenzConfig::noiseless();
        let mut rng = VdmRng::seed_from_u64(1);
        let (latent, obs) = simulate_sequence(&cfg, [1.0, 2.0, 20.0], &mut rng).unwrap();
        let mut s = [1.0, 2.0, 20.0];
        for (t, o) in obs.iter().enumerate() {
            if t > 0 {
                s = rk4_step(s, &cfg);
            }
            assert_eq!(latent[t], s);
            assert_eq!(o.as_slice(), &s);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let counts = LorenzCounts {
            train: 3,
            val: 2,
            test: 2,
            groups: 2,
            group_size: 3,
        };
        let cfg = LorenzConfig::default();
        let a = simulate_lorenz(&cfg, &counts, &mut VdmRng::seed_from_u64(7)).unwrap();
        let b = simulate_lorenz(&cfg, &counts, &mut VdmRng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.groups.len(), 2);
        assert_eq!(a.train.trajectories[0].len(), 100);
        assert_eq!(a.train.trajectories[0].prefix_len, 10);
    }
}
