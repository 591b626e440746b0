//! Reference implementations used only by tests.
//!
//! Everything here is a deliberately naive double-loop over plain slices,
//! sharing no code with the modules it checks: weights and losses follow
//! their defining formulas with bare `exp`, retrieval counts ranks by
//! comparison, and the assignment oracle is successive shortest paths with
//! Bellman-Ford relaxation rather than the potential-based solver.

/// Batch weights straight from the definition. Returns (row, col) matrices
/// with unit diagonals.
pub fn weights(s: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = s.len();
    let mut row = vec![vec![1.0; n]; n];
    let mut col = vec![vec![1.0; n]; n];
    if n < 2 {
        return (row, col);
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut denom_row = 0.0;
            for k in 0..n {
                if k != i {
                    denom_row += s[i][k];
                }
            }
            row[i][j] = (n - 1) as f64 * s[i][j] / denom_row;
            let mut denom_col = 0.0;
            for k in 0..n {
                if k != j {
                    denom_col += s[k][j];
                }
            }
            col[i][j] = (n - 1) as f64 * s[i][j] / denom_col;
        }
    }
    (row, col)
}

fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Plain symmetric contrastive loss value, bare exponentials.
pub fn plain_loss(e_img: &[Vec<f64>], e_shape: &[Vec<f64>], logit_scale: f64) -> f64 {
    let n = e_img.len();
    let ones = vec![vec![1.0; n]; n];
    weighted_loss(e_img, e_shape, &ones, &ones, logit_scale)
}

/// Weighted contrastive loss value, bare exponentials on both denominators.
pub fn weighted_loss(
    e_img: &[Vec<f64>],
    e_shape: &[Vec<f64>],
    w_row: &[Vec<f64>],
    w_col: &[Vec<f64>],
    logit_scale: f64,
) -> f64 {
    let n = e_img.len();
    let mut total = 0.0;
    for i in 0..n {
        let pos = (logit_scale * naive_dot(&e_img[i], &e_shape[i])).exp();
        let mut denom = 0.0;
        for s in 0..n {
            denom += w_row[i][s] * (logit_scale * naive_dot(&e_img[i], &e_shape[s])).exp();
        }
        total -= (pos / denom).ln();
    }
    for s in 0..n {
        let pos = (logit_scale * naive_dot(&e_img[s], &e_shape[s])).exp();
        let mut denom = 0.0;
        for i in 0..n {
            denom += w_col[i][s] * (logit_scale * naive_dot(&e_img[i], &e_shape[s])).exp();
        }
        total -= (pos / denom).ln();
    }
    total / (2.0 * n as f64)
}

/// Top-k retrieval accuracy by rank counting: an item's rank is the number
/// of gallery entries scoring strictly higher plus the ties at lower index.
pub fn retrieval_top_k(
    queries: &[Vec<f64>],
    gallery: &[Vec<f64>],
    truth: &[usize],
    k: usize,
) -> f64 {
    let mut hits = 0usize;
    for (q, &t) in queries.iter().zip(truth) {
        let score_t = naive_dot(q, &gallery[t]);
        let mut rank = 0usize;
        for (j, g) in gallery.iter().enumerate() {
            let s = naive_dot(q, g);
            if s > score_t || (s == score_t && j < t) {
                rank += 1;
            }
        }
        if rank < k {
            hits += 1;
        }
    }
    hits as f64 / queries.len() as f64
}

/// Exhaustive minimum over all matchings of the mean matched distance.
/// Only feasible for tiny sets.
pub fn emd_exhaustive(p: &[[f64; 3]], q: &[[f64; 3]]) -> f64 {
    assert_eq!(p.len(), q.len());
    let n = p.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
    fn recurse(k: usize, perm: &mut Vec<usize>, p: &[[f64; 3]], q: &[[f64; 3]], best: &mut f64) {
        if k == perm.len() {
            let total: f64 = perm
                .iter()
                .enumerate()
                .map(|(i, &j)| dist(&p[i], &q[j]))
                .sum();
            if total < *best {
                *best = total;
            }
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            recurse(k + 1, perm, p, q, best);
            perm.swap(k, i);
        }
    }
    recurse(0, &mut perm, p, q, &mut best);
    best / n as f64
}

/// Minimum-cost perfect matching by successive shortest augmenting paths
/// with Bellman-Ford relaxation. Returns the total cost.
pub fn assignment_min_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    if n == 0 {
        return 0.0;
    }
    let none = usize::MAX;
    let mut match_l = vec![none; n];
    let mut match_r = vec![none; n];
    for _ in 0..n {
        let mut dist_l = vec![f64::INFINITY; n];
        let mut dist_r = vec![f64::INFINITY; n];
        let mut parent_r = vec![none; n];
        for i in 0..n {
            if match_l[i] == none {
                dist_l[i] = 0.0;
            }
        }
        loop {
            let mut improved = false;
            for i in 0..n {
                if dist_l[i].is_finite() {
                    for j in 0..n {
                        if match_l[i] != j && dist_l[i] + cost[i][j] < dist_r[j] - 1e-12 {
                            dist_r[j] = dist_l[i] + cost[i][j];
                            parent_r[j] = i;
                            improved = true;
                        }
                    }
                }
            }
            for j in 0..n {
                if dist_r[j].is_finite() && match_r[j] != none {
                    let i = match_r[j];
                    if dist_r[j] - cost[i][j] < dist_l[i] - 1e-12 {
                        dist_l[i] = dist_r[j] - cost[i][j];
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        let mut target = none;
        for j in 0..n {
            if match_r[j] == none
                && dist_r[j].is_finite()
                && (target == none || dist_r[j] < dist_r[target])
            {
                target = j;
            }
        }
        assert_ne!(target, none, "augmenting path must exist");
        let mut j = target;
        loop {
            let i = parent_r[j];
            let prev = match_l[i];
            match_r[j] = i;
            match_l[i] = j;
            if prev == none {
                break;
            }
            j = prev;
        }
    }
    (0..n).map(|i| cost[i][match_l[i]]).sum()
}
