//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centers: Matrix,
    pub assignments: Vec<usize>,
    /// Objective after every assignment step, in order.
    pub objective_history: Vec<f64>,
    /// Objective of the returned centers against `assignments`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn kmeans(points: &Matrix, params: &KMeansParams) -> Result<KMeansResult> {
    let n = points.rows();
    let k = params.k;
    if k == 0 {
        return Err(Error::Cluster("K must be at least 1".into()));
    }
    if n < k {
        return Err(Error::Cluster(format!("N < K: {n} points for {k} clusters")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centers = kmeans_plus_plus(points, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut distances = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let objective = assign(points, &centers, &mut assignments, &mut distances);
        history.push(objective);
        iterations += 1;
        if let [.., prev, last] = history[..] {
            if prev <= 0.0 || (prev - last) / prev < params.tol {
                converged = true;
            }
        }
        if objective == 0.0 {
            converged = true;
        }
        if converged || iterations >= params.max_iters {
            break;
        }
        let empty = update_centers(points, &assignments, &mut centers);
        reseed_empty(points, &mut centers, &empty);
    }

    // Final mean update so every returned center is the mean of its points.
    update_centers(points, &assignments, &mut centers);
    let objective = (0..n)
        .map(|i| squared_distance(points.row(i), centers.row(assignments[i])))
        .sum();

    Ok(KMeansResult {
        centers,
        assignments,
        objective_history: history,
        objective,
        iterations,
        converged,
    })
}

fn kmeans_plus_plus(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(first)))
        .collect();

    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // round-off can leave target just above the final sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every remaining point coincides with a center
            (0..n).find(|&i| !is_chosen[i]).unwrap()
        };
        chosen.push(next);
        is_chosen[next] = true;
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Nearest-center assignment (lowest index on ties); returns the objective.
fn assign(points: &Matrix, centers: &Matrix, assignments: &mut [usize], distances: &mut [f64]) -> f64 {
    let mut objective = 0.0;
    for i in 0..points.rows() {
        let p = points.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter_rows().enumerate() {
            let d = squared_distance(p, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignments[i] = best;
        distances[i] = best_d;
        objective += best_d;
    }
    objective
}

/// Moves each non-empty center to its points' mean; returns the empty ones.
fn update_centers(points: &Matrix, assignments: &[usize], centers: &mut Matrix) -> Vec<usize> {
    let k = centers.rows();
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for (s, &v) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    let mut empty = Vec::new();
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            empty.push(c);
            continue;
        }
        let inv = count as f64;
        for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
            *dst = s / inv;
        }
    }
    empty
}

/// Places each empty center on the point farthest from its nearest live center.
fn reseed_empty(points: &Matrix, centers: &mut Matrix, empty: &[usize]) {
    if empty.is_empty() {
        return;
    }
    let live: Vec<usize> = (0..centers.rows()).filter(|c| !empty.contains(c)).collect();
    let mut nearest: Vec<f64> = (0..points.rows())
        .map(|i| {
            live.iter()
                .map(|&c| squared_distance(points.row(i), centers.row(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    for &c in empty {
        let mut far = 0;
        for i in 1..nearest.len() {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        let p = points.row(far).to_vec();
        centers.row_mut(c).copy_from_slice(&p);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), &p));
        }
    }
}
