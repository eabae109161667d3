use std::collections::BTreeSet;

use super::CscMatrix;

/// Exact minimum-degree ordering on the graph of a symmetric pattern
/// (either triangle, or both). Ties go to the lowest index, so the result is
/// deterministic. Returns `perm` with `perm[k]` = original index eliminated
/// k-th.
///
/// The elimination graph is kept explicitly, which is fine for the few
/// thousand unknowns of a transmission-scale KKT system.
pub fn minimum_degree(pattern: &CscMatrix) -> Vec<usize> {
    let n = pattern.ncols;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, j, _) in pattern.iter() {
        if i != j {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut alive = vec![true; n];
    let mut perm = Vec::with_capacity(n);
    for _ in 0..n {
        let pivot = (0..n)
            .filter(|&i| alive[i])
            .min_by_key(|&i| (adj[i].len(), i))
            .expect("a live node remains");
        alive[pivot] = false;
        perm.push(pivot);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[pivot]).into_iter().collect();
        for &a in &nbrs {
            adj[a].remove(&pivot);
            for &b in &nbrs {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    perm
}
