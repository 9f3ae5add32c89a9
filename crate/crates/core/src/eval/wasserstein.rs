use crate::error::{Result, VdmError};

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cost_matrix(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if p.len() != q.len() {
        return Err(VdmError::Shape {
            op: "wasserstein",
            left: vec![p.len()],
            right: vec![q.len()],
        });
    }
    if p.is_empty() {
        return Err(VdmError::Invalid("empty sample sets".into()));
    }
    let d = p[0].len();
    if p.iter().chain(q).any(|v| v.len() != d) {
        return Err(VdmError::Invalid("sample vectors differ in length".into()));
    }
    Ok(p.iter()
        .map(|a| q.iter().map(|b| euclid(a, b)).collect())
        .collect())
}

/// Minimum-cost perfect matching of a square cost matrix (shortest augmenting
/// paths with potentials, O(n^3)). `assignment[i]` is the column of row `i`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    // 1-based arrays; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Empirical Wasserstein-1 distance between equal-size sample sets: the
/// minimum over matchings of the mean Euclidean distance.
pub fn wasserstein(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64> {
    let cost = cost_matrix(p, q)?;
    let a = hungarian(&cost);
    let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(total / p.len() as f64)
}

/// Same quantity by enumerating all permutations; for small test instances.
pub fn wasserstein_brute_force(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64> {
    let cost = cost_matrix(p, q)?;
    let n = p.len();
    if n > 9 {
        return Err(VdmError::Invalid("brute force limited to n <= 9".into()));
    }
    fn search(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                search(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    search(&cost, 0, &mut vec![false; n], 0.0, &mut best);
    Ok(best / n as f64)
}
