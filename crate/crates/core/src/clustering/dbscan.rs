//! DBSCAN with deterministic scan order: clusters are seeded in ascending
//! point order and border points join the first discovered core cluster.

use super::{ClusterAssignment, ClusterError, Method};
use crate::embedding::{euclidean, EmbeddingMatrix};
use crate::ids::{ClusterId, SentenceId};
use std::collections::VecDeque;

const UNCLASSIFIED: usize = usize::MAX;
const NOISE: usize = usize::MAX - 1;

pub fn dbscan(
    matrix: &EmbeddingMatrix,
    eps: f64,
    min_pts: usize,
) -> Result<ClusterAssignment, ClusterError> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(ClusterError::BadEps(eps));
    }
    if min_pts == 0 {
        return Err(ClusterError::ZeroMinPts);
    }
    let n = matrix.len();

    // neighborhoods include the point itself, the classic core condition
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let a = matrix.row(SentenceId(i as u32));
            (0..n)
                .filter(|&j| euclidean(a, matrix.row(SentenceId(j as u32))) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    let mut labels = vec![UNCLASSIFIED; n];
    let mut next_cluster = 0usize;
    for i in 0..n {
        if labels[i] != UNCLASSIFIED {
            continue;
        }
        if !core[i] {
            labels[i] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = neighbors[i].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster; // border point adopted by the first cluster to reach it
                continue;
            }
            if labels[q] != UNCLASSIFIED {
                continue;
            }
            labels[q] = cluster;
            if core[q] {
                queue.extend(neighbors[q].iter().copied());
            }
        }
    }

    let labels = labels
        .into_iter()
        .map(|l| match l {
            NOISE => None,
            c => Some(ClusterId(c as u32)),
        })
        .collect();
    Ok(ClusterAssignment::from_labels(
        Method::Dbscan { eps, min_pts },
        labels,
    ))
}
