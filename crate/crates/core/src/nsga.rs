//! Non-dominated sorting and crowding distance for two minimized objectives.

use std::cmp::Ordering;

/// `a` is no worse than `b` in both objectives and strictly better in one.
pub fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Front index of every point: `0` for the non-dominated set, `k` for the set that becomes
/// non-dominated once fronts `0..k` are removed.
pub fn fast_non_dominated_sort(objs: &[[f64; 2]]) -> Vec<usize> {
    let n = objs.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            }
        }
    }
    let mut rank = vec![0usize; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    let mut level = 0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = level;
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        current = next;
        level += 1;
    }
    rank
}

/// Groups point indices by rank, each front in ascending index order.
pub fn fronts(ranks: &[usize]) -> Vec<Vec<usize>> {
    let levels = ranks.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); levels];
    for (i, &r) in ranks.iter().enumerate() {
        out[r].push(i);
    }
    out
}

/// Crowding distance within one front. Extreme points of either objective get `+inf`; an
/// objective with zero range contributes nothing to interior points.
pub fn crowding_distance(objs: &[[f64; 2]]) -> Vec<f64> {
    let n = objs.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for k in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objs[a][k].total_cmp(&objs[b][k]).then(a.cmp(&b)));
        let range = objs[order[n - 1]][k] - objs[order[0]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if range > 0.0 {
            for w in 1..n - 1 {
                let i = order[w];
                dist[i] += (objs[order[w + 1]][k] - objs[order[w - 1]][k]) / range;
            }
        }
    }
    dist
}

/// Indices of the non-dominated points, in input order. Duplicates survive together.
pub fn pareto_filter(objs: &[[f64; 2]]) -> Vec<usize> {
    (0..objs.len())
        .filter(|&i| !objs.iter().any(|o| dominates(o, &objs[i])))
        .collect()
}

/// Binary tournament: lower rank wins, then larger crowding distance, then lower index.
pub fn tournament_winner(ranks: &[usize], crowding: &[f64], a: usize, b: usize) -> usize {
    let order = ranks[a]
        .cmp(&ranks[b])
        .then_with(|| crowding[b].partial_cmp(&crowding[a]).unwrap_or(Ordering::Equal))
        .then(a.cmp(&b));
    if order == Ordering::Greater {
        b
    } else {
        a
    }
}

/// Roulette weights from crowding distances: `+inf` becomes twice the largest finite distance
/// (or `1` when none is finite).
pub fn roulette_weights(crowding: &[f64]) -> Vec<f64> {
    let max_finite = crowding
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let inf_weight = if max_finite.is_finite() && max_finite > 0.0 {
        2.0 * max_finite
    } else {
        1.0
    };
    crowding
        .iter()
        .map(|&d| if d.is_infinite() { inf_weight } else { d.max(0.0) })
        .collect()
}
