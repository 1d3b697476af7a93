//! HDBSCAN: mutual-reachability distances, minimum spanning tree,
//! single-linkage dendrogram, condensed cluster tree and excess-of-mass
//! cluster selection. Sub-`min_cluster_size` leaves collapse into their
//! parent; points without a selected ancestor cluster are noise.

use super::{ClusterAssignment, ClusterError, Method};
use crate::embedding::{euclidean, EmbeddingMatrix};
use crate::ids::{ClusterId, SentenceId};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub fn hdbscan(
    matrix: &EmbeddingMatrix,
    min_cluster_size: usize,
) -> Result<ClusterAssignment, ClusterError> {
    if min_cluster_size < 2 {
        return Err(ClusterError::BadMinClusterSize(min_cluster_size));
    }
    let n = matrix.len();
    if n < min_cluster_size {
        return Err(ClusterError::TooFewPoints {
            need: min_cluster_size,
            got: n,
        });
    }

    let dist = pairwise(matrix);
    let core = core_distances(&dist, n, min_cluster_size);
    let mst = minimum_spanning_tree(&dist, &core, n);
    let hierarchy = single_linkage(mst, n);
    let condensed = condense(&hierarchy, n, min_cluster_size);
    let selected = select_excess_of_mass(&condensed, n);
    let labels = label_points(&condensed, &selected, n);

    Ok(ClusterAssignment::from_labels(
        Method::Hdbscan { min_cluster_size },
        labels,
    ))
}

fn pairwise(matrix: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    let n = matrix.len();
    let mut d = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = euclidean(
                matrix.row(SentenceId(i as u32)),
                matrix.row(SentenceId(j as u32)),
            );
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Distance to the k-th nearest neighbor with k = min_cluster_size, clamped
/// to n-1 on tiny inputs.
fn core_distances(dist: &[Vec<f64>], n: usize, min_cluster_size: usize) -> Vec<f64> {
    let k = min_cluster_size.min(n - 1);
    (0..n)
        .map(|i| {
            let mut row = dist[i].clone(); // includes the 0.0 self distance
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            row[k]
        })
        .collect()
}

struct MstEdge {
    a: usize,
    b: usize,
    weight: f64,
}

/// Prim over the implicit complete graph of mutual-reachability distances
/// max(core_a, core_b, d(a,b)).
fn minimum_spanning_tree(dist: &[Vec<f64>], core: &[f64], n: usize) -> Vec<MstEdge> {
    let mr = |a: usize, b: usize| dist[a][b].max(core[a]).max(core[b]);
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    in_tree[0] = true;
    for j in 1..n {
        best[j] = mr(0, j);
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick = usize::MAX;
        let mut pick_w = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && best[j] < pick_w {
                pick_w = best[j];
                pick = j;
            }
        }
        if pick == usize::MAX {
            // all remaining candidates at infinite weight; take first out-of-tree
            pick = (0..n).find(|&j| !in_tree[j]).unwrap();
            pick_w = best[pick];
        }
        edges.push(MstEdge {
            a: from[pick],
            b: pick,
            weight: pick_w,
        });
        in_tree[pick] = true;
        for j in 0..n {
            if !in_tree[j] {
                let w = mr(pick, j);
                if w < best[j] {
                    best[j] = w;
                    from[j] = pick;
                }
            }
        }
    }
    edges.sort_by(|x, y| {
        x.weight
            .partial_cmp(&y.weight)
            .unwrap()
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    edges
}

/// One merge per row; merge t creates dendrogram node n + t.
struct DendroNode {
    left: usize,
    right: usize,
    dist: f64,
    size: usize,
}

fn single_linkage(edges: Vec<MstEdge>, n: usize) -> Vec<DendroNode> {
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // union-find root -> current dendrogram node id
    let mut node_of: Vec<usize> = (0..2 * n - 1).collect();
    let mut size_of: Vec<usize> = vec![1; 2 * n - 1];
    let mut hierarchy = Vec::with_capacity(n - 1);
    for (t, e) in edges.into_iter().enumerate() {
        let new_node = n + t;
        let ra = find(&mut parent, e.a);
        let rb = find(&mut parent, e.b);
        let (la, lb) = (node_of[ra], node_of[rb]);
        let size = size_of[ra] + size_of[rb];
        hierarchy.push(DendroNode {
            left: la,
            right: lb,
            dist: e.weight,
            size,
        });
        parent[ra] = new_node;
        parent[rb] = new_node;
        node_of[new_node] = new_node;
        size_of[new_node] = size;
    }
    hierarchy
}

/// Condensed-tree row: `child` is a point when `size == 1` and `child < n`,
/// otherwise a cluster.
struct CondRow {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

fn lambda_of(dist: f64) -> f64 {
    if dist > 0.0 {
        1.0 / dist
    } else {
        f64::INFINITY
    }
}

fn leaves_under(hierarchy: &[DendroNode], node: usize, n: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let row = &hierarchy[x - n];
            stack.push(row.left);
            stack.push(row.right);
        }
    }
}

fn condense(hierarchy: &[DendroNode], n: usize, min_cluster_size: usize) -> Vec<CondRow> {
    let root = 2 * n - 2;
    let total = 2 * n - 1;
    let mut relabel = vec![usize::MAX; total];
    relabel[root] = n; // condensed root id
    let mut next_label = n + 1;
    let mut ignore = vec![false; total];
    let mut rows = Vec::new();

    // level order over the dendrogram
    let mut order = Vec::with_capacity(total);
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        order.push(x);
        if x >= n {
            let row = &hierarchy[x - n];
            queue.push_back(row.left);
            queue.push_back(row.right);
        }
    }

    for node in order {
        if ignore[node] || node < n {
            continue;
        }
        let row = &hierarchy[node - n];
        let lambda = lambda_of(row.dist);
        let size = |x: usize| if x < n { 1 } else { hierarchy[x - n].size };
        let (left, right) = (row.left, row.right);
        let (lc, rc) = (size(left), size(right));
        let cluster = relabel[node];

        let fall_out = |child: usize, rows: &mut Vec<CondRow>, ignore: &mut Vec<bool>| {
            let mut leaves = Vec::new();
            leaves_under(hierarchy, child, n, &mut leaves);
            leaves.sort_unstable();
            for p in leaves {
                rows.push(CondRow {
                    parent: cluster,
                    child: p,
                    lambda,
                    size: 1,
                });
            }
            mark_subtree(hierarchy, child, n, ignore);
        };

        if lc >= min_cluster_size && rc >= min_cluster_size {
            relabel[left] = next_label;
            next_label += 1;
            rows.push(CondRow {
                parent: cluster,
                child: relabel[left],
                lambda,
                size: lc,
            });
            relabel[right] = next_label;
            next_label += 1;
            rows.push(CondRow {
                parent: cluster,
                child: relabel[right],
                lambda,
                size: rc,
            });
        } else if lc < min_cluster_size && rc < min_cluster_size {
            fall_out(left, &mut rows, &mut ignore);
            fall_out(right, &mut rows, &mut ignore);
        } else if lc < min_cluster_size {
            relabel[right] = cluster;
            fall_out(left, &mut rows, &mut ignore);
        } else {
            relabel[left] = cluster;
            fall_out(right, &mut rows, &mut ignore);
        }
    }
    rows
}

fn mark_subtree(hierarchy: &[DendroNode], node: usize, n: usize, ignore: &mut [bool]) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        ignore[x] = true;
        if x >= n {
            let row = &hierarchy[x - n];
            stack.push(row.left);
            stack.push(row.right);
        }
    }
}

/// Cluster stability: sum over child rows of (lambda - birth_lambda) * size,
/// with inf - inf treated as zero mass.
fn stabilities(condensed: &[CondRow], n: usize) -> BTreeMap<usize, f64> {
    let mut births: BTreeMap<usize, f64> = BTreeMap::new();
    for row in condensed {
        if row.child >= n {
            births.insert(row.child, row.lambda);
        }
    }
    births.insert(n, 0.0);
    let mut stability: BTreeMap<usize, f64> = BTreeMap::new();
    for row in condensed {
        stability.entry(row.parent).or_insert(0.0);
        if row.child >= n {
            stability.entry(row.child).or_insert(0.0);
        }
    }
    for row in condensed {
        let birth = births[&row.parent];
        let mass = (row.lambda - birth) * row.size as f64;
        if !mass.is_nan() {
            *stability.get_mut(&row.parent).unwrap() += mass;
        }
    }
    stability
}

/// Excess-of-mass selection over non-root clusters. When the condensed tree
/// never split (no non-root clusters), the root itself is the single
/// cluster; without this the degenerate all-similar input would be all
/// noise.
fn select_excess_of_mass(condensed: &[CondRow], n: usize) -> BTreeSet<usize> {
    let mut stability = stabilities(condensed, n);
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for row in condensed {
        if row.child >= n {
            children.entry(row.parent).or_default().push(row.child);
        }
    }
    let mut node_list: Vec<usize> = stability.keys().copied().filter(|&c| c != n).collect();
    if node_list.is_empty() {
        return BTreeSet::from([n]);
    }
    node_list.sort_unstable_by(|a, b| b.cmp(a));

    let mut is_selected: BTreeMap<usize, bool> =
        node_list.iter().map(|&c| (c, true)).collect();
    for &node in &node_list {
        let subtree: f64 = children
            .get(&node)
            .map(|cs| cs.iter().map(|c| stability[c]).sum())
            .unwrap_or(0.0);
        if subtree > stability[&node] {
            is_selected.insert(node, false);
            stability.insert(node, subtree);
        } else {
            // node wins: deselect every descendant cluster
            let mut queue = VecDeque::from([node]);
            while let Some(x) = queue.pop_front() {
                if let Some(cs) = children.get(&x) {
                    for &c in cs {
                        is_selected.insert(c, false);
                        queue.push_back(c);
                    }
                }
            }
        }
    }
    is_selected
        .into_iter()
        .filter_map(|(c, sel)| sel.then_some(c))
        .collect()
}

fn label_points(condensed: &[CondRow], selected: &BTreeSet<usize>, n: usize) -> Vec<Option<ClusterId>> {
    let mut cluster_parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut point_parent: BTreeMap<usize, usize> = BTreeMap::new();
    for row in condensed {
        if row.child >= n {
            cluster_parent.insert(row.child, row.parent);
        } else {
            point_parent.insert(row.child, row.parent);
        }
    }
    let label_of: BTreeMap<usize, u32> = selected
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u32))
        .collect();

    (0..n)
        .map(|p| {
            let mut cur = point_parent.get(&p).copied();
            while let Some(c) = cur {
                if let Some(&l) = label_of.get(&c) {
                    return Some(ClusterId(l));
                }
                cur = cluster_parent.get(&c).copied();
            }
            None
        })
        .collect()
}
