//! Exact k-means in one dimension.
//!
//! Optimal 1-D clusters are contiguous runs of the sorted values, so the
//! problem is a shortest-path over split points. Each DP layer is filled with
//! divide-and-conquer over the monotone optimal split, giving
//! `O(k * m log m)` for `m` distinct values.

use crate::error::{Error, Result};

/// Result of an optimal partition of the input values.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Cluster index (0-based, ordered by centroid) for each input value.
    pub assignment: Vec<usize>,
    /// Strictly increasing centroids.
    pub centroids: Vec<f64>,
    pub wcss: f64,
}

struct Prefix {
    w: Vec<f64>,
    s: Vec<f64>,
    q: Vec<f64>,
}

impl Prefix {
    fn new(values: &[f64], weights: &[f64]) -> Self {
        let mut p = Prefix {
            w: vec![0.0],
            s: vec![0.0],
            q: vec![0.0],
        };
        for (&v, &w) in values.iter().zip(weights) {
            p.w.push(p.w.last().unwrap() + w);
            p.s.push(p.s.last().unwrap() + w * v);
            p.q.push(p.q.last().unwrap() + w * v * v);
        }
        p
    }

    /// Sum of squared deviations of distinct values `i..j` (exclusive) around their mean.
    fn cost(&self, i: usize, j: usize) -> f64 {
        let w = self.w[j] - self.w[i];
        if w <= 0.0 {
            return 0.0;
        }
        let s = self.s[j] - self.s[i];
        let q = self.q[j] - self.q[i];
        (q - s * s / w).max(0.0)
    }
}

fn fill_layer(prev: &[f64], cur: &mut [f64], arg: &mut [usize], prefix: &Prefix, lo: usize, hi: usize, opt_lo: usize, opt_hi: usize) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = f64::INFINITY;
    let mut best_k = opt_lo;
    let top = opt_hi.min(mid - 1);
    for k in opt_lo..=top {
        let c = prev[k] + prefix.cost(k, mid);
        if c < best {
            best = c;
            best_k = k;
        }
    }
    cur[mid] = best;
    arg[mid] = best_k;
    if mid > lo {
        fill_layer(prev, cur, arg, prefix, lo, mid - 1, opt_lo, best_k);
    }
    fill_layer(prev, cur, arg, prefix, mid + 1, hi, best_k, opt_hi);
}

/// Optimal k-means partition of `values`. Equal values always share a cluster.
pub fn kmeans_1d(values: &[f64], k: usize) -> Result<Partition> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cluster values must be finite"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut distinct: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for &i in &order {
        if distinct.last() == Some(&values[i]) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            distinct.push(values[i]);
            counts.push(1.0);
        }
    }
    let m = distinct.len();
    if k < 1 || k > m {
        return Err(Error::invalid(format!("k = {k} must be in 1..={m} (distinct values)")));
    }
    let prefix = Prefix::new(&distinct, &counts);

    // cost[j] = best cost of clustering the first j distinct values.
    let mut layer: Vec<f64> = (0..=m).map(|j| prefix.cost(0, j)).collect();
    let mut args: Vec<Vec<usize>> = Vec::with_capacity(k);
    for c in 1..k {
        let mut cur = vec![f64::INFINITY; m + 1];
        let mut arg = vec![0usize; m + 1];
        // With c+1 clusters, the first j values need j >= c+1.
        fill_layer(&layer, &mut cur, &mut arg, &prefix, c + 1, m, c, m - 1);
        args.push(arg);
        layer = cur;
    }

    // Walk the split points back.
    let mut bounds = vec![m];
    let mut j = m;
    for arg in args.iter().rev() {
        j = arg[j];
        bounds.push(j);
    }
    bounds.push(0);
    bounds.reverse();

    let mut cluster_of_distinct = vec![0usize; m];
    let mut centroids = Vec::with_capacity(k);
    let mut wcss = 0.0;
    for (c, w) in bounds.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let weight = prefix.w[b] - prefix.w[a];
        centroids.push((prefix.s[b] - prefix.s[a]) / weight);
        wcss += prefix.cost(a, b);
        cluster_of_distinct[a..b].iter_mut().for_each(|x| *x = c);
    }
    let mut assignment = vec![0usize; values.len()];
    for (i, v) in values.iter().enumerate() {
        let pos = distinct.partition_point(|d| d < v);
        assignment[i] = cluster_of_distinct[pos];
    }
    Ok(Partition {
        assignment,
        centroids,
        wcss,
    })
}
