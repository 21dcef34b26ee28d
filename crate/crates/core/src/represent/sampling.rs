//! Farthest-point and uniform random row sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

fn check_count(n: usize, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::Sampling("S must be at least 1".into()));
    }
    if n < s {
        return Err(Error::Sampling(format!("N < S: cannot draw {s} samples from {n} rows")));
    }
    Ok(())
}

/// Greedy max-min selection. The first pick is the row farthest from the
/// column mean; each later pick maximizes its distance to the nearest row
/// already picked. Ties go to the lowest row index. Returns row indices in
/// selection order.
pub fn farthest_point_indices(points: &Matrix, s: usize) -> Result<Vec<usize>> {
    let n = points.rows();
    check_count(n, s)?;
    let mean = points.column_means();

    let mut first = 0;
    let mut first_d = f64::NEG_INFINITY;
    for i in 0..n {
        let d = squared_distance(points.row(i), &mean);
        if d > first_d {
            first_d = d;
            first = i;
        }
    }

    let mut selected = Vec::with_capacity(s);
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut next = first;
    loop {
        selected.push(next);
        taken[next] = true;
        if selected.len() == s {
            break;
        }
        let anchor = points.row(next);
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = squared_distance(points.row(i), anchor);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > best_d {
                best_d = nearest[i];
                best = i;
            }
        }
        next = best;
    }
    Ok(selected)
}

pub fn farthest_point_sample(points: &Matrix, s: usize) -> Result<Matrix> {
    farthest_point_indices(points, s).map(|idx| points.select_rows(&idx))
}

/// `s` distinct row indices drawn uniformly with a ChaCha generator.
pub fn random_indices(n: usize, s: usize, seed: u64) -> Result<Vec<usize>> {
    check_count(n, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, s).into_vec())
}

pub fn random_sample(points: &Matrix, s: usize, seed: u64) -> Result<Matrix> {
    random_indices(points.rows(), s, seed).map(|idx| points.select_rows(&idx))
}
