//! Cubature sigma points, the stochastic cubature approximation (SCA) and a
//! Monte-Carlo fallback.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::diffcore::{DenseArray, DiagGaussian};
use crate::VdmRng;

/// Sigma points of a Gaussian together with their noise-infused samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSet {
    pub xi: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub noise_seed: u64,
}

/// The `2d+1` cubature abscissas and weights for a standard normal in `d`
/// dimensions: `xi_0 = 0`, `xi_{2j+1}, xi_{2j+2} = ±sqrt(d+kappa) e_j`.
pub fn sigma_points(d: usize, kappa: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let spread = (d as f64 + kappa).sqrt();
    let mut xi = vec![vec![0.0; d]];
    let mut gamma = vec![kappa / (d as f64 + kappa)];
    let w = 1.0 / (2.0 * (d as f64 + kappa));
    for j in 0..d {
        for sign in [1.0, -1.0] {
            let mut p = vec![0.0; d];
            p[j] = sign * spread;
            xi.push(p);
            gamma.push(w);
        }
    }
    (xi, gamma)
}

/// `(k, d)` matrix of the sigma-point abscissas.
pub fn abscissa_matrix(d: usize, kappa: f64) -> DenseArray {
    let (xi, _) = sigma_points(d, kappa);
    DenseArray::from_rows(&xi).expect("equal lengths")
}

pub fn standard_normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseArray {
    let data = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DenseArray::matrix(rows, cols, data).expect("sized")
}

/// SCA samples `mu + sigma * (xi_i + eps_i)` with independent `eps_i`.
///
/// The noise is drawn from a stream seeded by one value taken from `rng`, and
/// that seed is kept so the set can be regenerated.
pub fn sca_sample(g: &DiagGaussian, kappa: f64, rng: &mut VdmRng) -> SigmaSet {
    let seed = rng.random();
    sca_sample_seeded(g, kappa, seed)
}

pub fn sca_sample_seeded(g: &DiagGaussian, kappa: f64, noise_seed: u64) -> SigmaSet {
    let d = g.dim();
    let mut noise = VdmRng::seed_from_u64(noise_seed);
    let eps = standard_normal_matrix(2 * d + 1, d, &mut noise);
    let mut set = sca_with_noise(g, kappa, &eps);
    set.noise_seed = noise_seed;
    set
}

/// SCA construction with explicit noise rows (`eps` of shape `(2d+1, d)`).
pub fn sca_with_noise(g: &DiagGaussian, kappa: f64, eps: &DenseArray) -> SigmaSet {
    let (xi, gamma) = sigma_points(g.dim(), kappa);
    let samples = xi
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let e = eps.row(i);
            (0..g.dim())
                .map(|j| g.mean[j] + g.std[j] * (x[j] + e[j]))
                .collect()
        })
        .collect();
    SigmaSet {
        xi,
        gamma,
        samples,
        noise_seed: 0,
    }
}

/// `k` independent reparameterized draws `mu + sigma * eps`.
pub fn mc_sample<R: Rng>(g: &DiagGaussian, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            g.mean
                .iter()
                .zip(&g.std)
                .map(|(m, s)| {
                    let e: f64 = rng.sample(StandardNormal);
                    m + s * e
                })
                .collect()
        })
        .collect()
}
