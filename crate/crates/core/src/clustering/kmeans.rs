//! Lloyd's algorithm with k-means++ seeding under an explicit seed.

use super::{ClusterAssignment, ClusterError, Method};
use crate::embedding::EmbeddingMatrix;
use crate::ids::{ClusterId, SentenceId};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn kmeans(
    matrix: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterAssignment, ClusterError> {
    let (assignment, _) = kmeans_traced(matrix, k, seed, max_iter)?;
    Ok(assignment)
}

/// Runs K-means and also returns the SSE after every assignment pass, for
/// monotonicity checks.
pub(crate) fn kmeans_traced(
    matrix: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(ClusterAssignment, Vec<f64>), ClusterError> {
    let n = matrix.len();
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > n {
        return Err(ClusterError::KExceedsN { k, n });
    }
    let dim = matrix.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(matrix, k, &mut rng);

    let mut labels = assign(matrix, &centroids);
    let mut sse_trace = vec![sse(matrix, &centroids, &labels)];
    for _ in 0..max_iter {
        update_centroids(matrix, &labels, &mut centroids, dim);
        repair_empty(matrix, &labels, &mut centroids);
        let next = assign(matrix, &centroids);
        sse_trace.push(sse(matrix, &centroids, &next));
        let converged = next == labels;
        labels = next;
        if converged {
            break;
        }
    }
    force_fill_empty(&mut labels, matrix, &centroids, k);

    let labels = labels
        .into_iter()
        .map(|c| Some(ClusterId(c as u32)))
        .collect();
    Ok((
        ClusterAssignment::from_labels(Method::Kmeans { k }, labels),
        sse_trace,
    ))
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - y;
            d * d
        })
        .sum()
}

fn seed_plus_plus(matrix: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = matrix.len();
    let row_f64 = |i: usize| -> Vec<f64> {
        matrix
            .row(SentenceId(i as u32))
            .iter()
            .map(|x| *x as f64)
            .collect()
    };
    let first = rng.gen_range(0..n);
    let mut centroids = vec![row_f64(first)];
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(matrix.row(SentenceId(i as u32)), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            // all remaining mass is zero (duplicate points): take the
            // smallest index not yet chosen
            (0..n).find(|i| !chosen[*i]).unwrap_or(0)
        };
        chosen[pick] = true;
        let c = row_f64(pick);
        for i in 0..n {
            let d = sq_dist(matrix.row(SentenceId(i as u32)), &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.push(c);
    }
    centroids
}

/// Nearest centroid per point, ties to the smallest centroid index.
fn assign(matrix: &EmbeddingMatrix, centroids: &[Vec<f64>]) -> Vec<usize> {
    (0..matrix.len())
        .map(|i| {
            let row = matrix.row(SentenceId(i as u32));
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(row, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn update_centroids(
    matrix: &EmbeddingMatrix,
    labels: &[usize],
    centroids: &mut [Vec<f64>],
    dim: usize,
) {
    let k = centroids.len();
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (j, x) in matrix.row(SentenceId(i as u32)).iter().enumerate() {
            sums[c][j] += *x as f64;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..dim {
                centroids[c][j] = sums[c][j] / counts[c] as f64;
            }
        }
        // empty clusters keep their previous centroid until repaired
    }
}

/// Reseed each empty cluster from the point currently farthest from its own
/// centroid. Distinct points are taken for distinct empty clusters.
fn repair_empty(matrix: &EmbeddingMatrix, labels: &[usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &c in labels {
        counts[c] += 1;
    }
    let mut taken = vec![false; labels.len()];
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0f64;
        for (i, &l) in labels.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = sq_dist(matrix.row(SentenceId(i as u32)), &centroids[l]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            taken[i] = true;
            centroids[c] = matrix
                .row(SentenceId(i as u32))
                .iter()
                .map(|x| *x as f64)
                .collect();
        }
    }
}

fn sse(matrix: &EmbeddingMatrix, centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(matrix.row(SentenceId(i as u32)), &centroids[c]))
        .sum()
}

/// Duplicate points can leave a cluster empty at convergence because ties
/// always resolve to the smallest centroid index. Move points out of
/// multi-member clusters until every cluster is populated, so the
/// size-sum invariant (k non-empty clusters, N/k mean) holds whenever k <= N.
fn force_fill_empty(labels: &mut [usize], matrix: &EmbeddingMatrix, centroids: &[Vec<f64>], k: usize) {
    let mut counts = vec![0usize; k];
    for &c in labels.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        while counts[empty] == 0 {
            let mut pick = None;
            let mut pick_d = -1.0f64;
            for (i, &l) in labels.iter().enumerate() {
                if counts[l] < 2 {
                    continue;
                }
                let d = sq_dist(matrix.row(SentenceId(i as u32)), &centroids[l]);
                if d > pick_d {
                    pick_d = d;
                    pick = Some(i);
                }
            }
            match pick {
                Some(i) => {
                    counts[labels[i]] -= 1;
                    labels[i] = empty;
                    counts[empty] += 1;
                }
                None => break,
            }
        }
    }
}
