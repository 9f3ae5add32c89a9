use vdm::data::{rk4_step, LorenzConfig};

/// Classical RK4 written from its Butcher tableau.
pub fn rk4_tableau(y: [f64; 3], c: &LorenzConfig) -> [f64; 3] {
    const A: [[f64; 3]; 4] = [
        [0.0, 0.0, 0.0],
        [0.5, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [0.0, 0.0, 1.0],
    ];
    const B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
    let f = |v: &[f64; 3]| {
        [
            c.sigma * (v[1] - v[0]),
            v[0] * (c.rho - v[2]) - v[1],
            v[0] * v[1] - c.beta * v[2],
        ]
    };
    let mut k = [[0.0; 3]; 4];
    for s in 0..4 {
        let mut arg = y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for d in 0..3 {
                arg[d] += c.dt * A[s][j] * kj[d];
            }
        }
        k[s] = f(&arg);
    }
    let mut out = y;
    for d in 0..3 {
        out[d] += c.dt * (0..4).map(|s| B[s] * k[s][d]).sum::<f64>();
    }
    out
}

fn integrate(y0: [f64; 3], dt: f64, horizon: f64) -> [f64; 3] {
    let cfg = LorenzConfig {
        dt,
        ..LorenzConfig::noiseless()
    };
    let n = (horizon / dt).round() as usize;
    (0..n).fold(y0, |y, _| rk4_step(y, &cfg))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Observed order `log2(|y_h - y_{h/2}| / |y_{h/2} - y_{h/4}|)` of the
/// library integrator over a fixed horizon.
pub fn observed_order(y0: [f64; 3], h: f64, horizon: f64) -> f64 {
    let a = integrate(y0, h, horizon);
    let b = integrate(y0, h / 2.0, horizon);
    let c = integrate(y0, h / 4.0, horizon);
    (dist(a, b) / dist(b, c)).log2()
}

/// Minimum mean matching cost by enumerating every permutation (Heap's algorithm).
pub fn w_enumerate(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |perm: &[usize]| (0..n).map(|i| d(&p[i], &q[perm[i]])).sum::<f64>();
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

/// `-ln((1/n) sum_i (2 pi)^(-1/2) exp(-e_i / 2))` evaluated term by term.
pub fn nll_direct(truth: &[Vec<f64>], forecasts: &[Vec<Vec<f64>>], mean: bool) -> f64 {
    let coords: usize = truth.iter().map(Vec::len).sum();
    let mut acc = 0.0;
    for f in forecasts {
        let mut sq = 0.0;
        for (a, b) in f.iter().zip(truth) {
            for (x, y) in a.iter().zip(b) {
                sq += (x - y) * (x - y);
            }
        }
        let e = if mean { sq / coords as f64 } else { sq };
        acc += (2.0 * std::f64::consts::PI).powf(-0.5) * (-e / 2.0).exp();
    }
    -(acc / forecasts.len() as f64).ln()
}

fn normal_logpdf(x: f64, m: f64, s: f64) -> f64 {
    let u = (x - m) / s;
    -0.5 * u * u - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Points and log trapezoid weights on `[lo, hi]`.
fn trapezoid(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 { h / 2.0 } else { h };
            (lo + h * i as f64, w.ln())
        })
        .collect()
}

/// `log p(x2 | z1) = log int tra(z2 | s) dec(x2 | z2, s) dz2` with
/// `s = gru(z1, 0)`, for a model with one-dimensional `x` and `z`.
fn log_next_evidence(model: &vdm::nets::Model, z1: f64, x2: f64, n: usize) -> f64 {
    use vdm::diffcore::{split_head, DenseArray, Tape};
    let dh = model.config.d_h;
    let s = model.gru_advance(&[z1], &vec![0.0; dh]).unwrap();
    let prior = model.transition_prior(&s).unwrap();
    let (m2, s2) = (prior.mean[0], prior.std[0]);
    let grid = trapezoid(m2 - 12.0 * s2, m2 + 12.0 * s2, n);
    let mut tape = Tape::new();
    let z = tape.constant(DenseArray::matrix(n, 1, grid.iter().map(|g| g.0).collect()).unwrap());
    let h = tape.constant(DenseArray::matrix(n, dh, s.repeat(n)).unwrap());
    let head = model.decoder_head(&mut tape, z, h).unwrap();
    let (mean, log_std) = split_head(&mut tape, head).unwrap();
    let (mean, log_std) = (tape.value(mean).data().to_vec(), tape.value(log_std).data().to_vec());
    let terms: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(i, (z2, lw))| lw + normal_logpdf(*z2, m2, s2) + normal_logpdf(x2, mean[i], log_std[i].exp()))
        .collect();
    lse(&terms)
}

/// `log int r(z1) p(x2 | z1) dz1` for `r` a weighted mixture of
/// one-dimensional Gaussians `(weight, mean, std)`.
pub fn evidence_under_proposal(
    model: &vdm::nets::Model,
    proposal: &[(f64, f64, f64)],
    x2: f64,
    n: usize,
) -> f64 {
    let lo = proposal.iter().map(|p| p.1 - 12.0 * p.2).fold(f64::INFINITY, f64::min);
    let hi = proposal.iter().map(|p| p.1 + 12.0 * p.2).fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = trapezoid(lo, hi, n)
        .into_iter()
        .map(|(z1, lw)| {
            let comps: Vec<f64> = proposal.iter().map(|(w, m, s)| w.ln() + normal_logpdf(z1, *m, *s)).collect();
            lw + lse(&comps) + log_next_evidence(model, z1, x2, n)
        })
        .collect();
    lse(&terms)
}

/// Generative `log p(x2 | x1)` of a two-step model with one-dimensional `x`
/// and `z`, integrating `z1` under `tra(z1 | 0) dec(x1 | z1, 0)`.
pub fn generative_conditional(model: &vdm::nets::Model, x1: f64, x2: f64, n: usize) -> f64 {
    let dh = model.config.d_h;
    let h0 = vec![0.0; dh];
    let p0 = model.transition_prior(&h0).unwrap();
    let grid = trapezoid(p0.mean[0] - 12.0 * p0.std[0], p0.mean[0] + 12.0 * p0.std[0], n);
    let mut joint = Vec::with_capacity(n);
    let mut first = Vec::with_capacity(n);
    for (z1, lw) in grid {
        let e = model.emit(&[z1], &h0).unwrap();
        let a = lw + normal_logpdf(z1, p0.mean[0], p0.std[0]) + normal_logpdf(x1, e.mean[0], e.std[0]);
        first.push(a);
        joint.push(a + log_next_evidence(model, z1, x2, n));
    }
    lse(&joint) - lse(&first)
}
