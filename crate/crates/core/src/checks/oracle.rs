//! Scalar reference implementations used to cross-check the batched
//! programs.

use std::collections::{BTreeMap, BTreeSet};

use crate::symbol::Symbol;

/// Probability of every result symbol, obtained by walking the full product
/// of independent, mutually exclusive inputs and summing the weight of each
/// combination that `f` maps to a symbol.
pub fn enumerate<F>(inputs: &[(Vec<Symbol>, Vec<f64>)], f: F) -> BTreeMap<Symbol, f64>
where
    F: Fn(&[&Symbol]) -> Option<Symbol>,
{
    let mut out = BTreeMap::new();
    if inputs.iter().any(|(s, _)| s.is_empty()) {
        return out;
    }
    let mut idx = vec![0usize; inputs.len()];
    loop {
        let args: Vec<&Symbol> = idx.iter().zip(inputs).map(|(&i, (s, _))| &s[i]).collect();
        if let Some(r) = f(&args) {
            let w: f64 = idx.iter().zip(inputs).map(|(&i, (_, p))| p[i]).product();
            *out.entry(r).or_insert(0.0) += w;
        }
        let mut ax = inputs.len();
        loop {
            if ax == 0 {
                return out;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < inputs[ax].0.len() {
                break;
            }
            idx[ax] = 0;
        }
    }
}

/// Pairs `(x, y)` joined by a directed path of one or more edges.
pub fn reachability(edges: &[(i64, i64)]) -> BTreeSet<(i64, i64)> {
    let mut adj: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for &(x, y) in edges {
        adj.entry(x).or_default().push(y);
    }
    let mut out = BTreeSet::new();
    for &start in adj.keys() {
        let mut stack = adj[&start].clone();
        let mut seen = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                out.insert((start, v));
                stack.extend(adj.get(&v).into_iter().flatten());
            }
        }
    }
    out
}

/// Add-mult closure over scalar edge probabilities, round by round: each
/// round extends every known path by one edge, sums the contributions per
/// pair, and merges them into the known paths with a clamped sum. Stops
/// once a round adds no pair.
pub fn closure_add_mult(edges: &[((i64, i64), f64)]) -> BTreeMap<(i64, i64), f64> {
    let mut paths: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for &(e, p) in edges {
        let v = paths.entry(e).or_insert(0.0);
        *v = (*v + p).min(1.0);
    }
    loop {
        let mut step: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        for (&(x, y), &pp) in &paths {
            for &((u, z), pe) in edges {
                if u == y {
                    *step.entry((x, z)).or_insert(0.0) += pp * pe;
                }
            }
        }
        let before: BTreeSet<(i64, i64)> = paths.keys().copied().collect();
        for (pair, s) in step {
            let v = paths.entry(pair).or_insert(0.0);
            *v = (*v + s.min(1.0)).min(1.0);
        }
        if paths.keys().copied().collect::<BTreeSet<_>>() == before {
            return paths;
        }
    }
}

/// Every distinct product of `n` digits.
pub fn digit_products(n: usize) -> BTreeSet<i64> {
    let mut acc: BTreeSet<i64> = BTreeSet::from([1]);
    for _ in 0..n {
        acc = acc.iter().flat_map(|a| (0..10).map(move |d| a * d)).collect();
    }
    acc
}
