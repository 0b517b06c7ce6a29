//! Top-k proofs with add-mult probability.
//!
//! A tag is up to `k` proofs; a proof is a set of input-symbol columns of the
//! registry. In matrix form a proof row holds `p_j` in every column it uses,
//! `+inf` in the columns it does not use, and an absent row is all `-inf`.
//! Here the rows are kept as sorted column lists (the presence mask) and the
//! payload `p_j` is read from the registry, so the tensor arithmetic never
//! sees an infinity.

use std::collections::HashSet;
use std::rc::Rc;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{CustomBackward, Tensor, Var};

/// Registry limit for exact model counting.
pub const WMC_MAX_INPUTS: usize = 20;

/// A sorted, duplicate-free set of registry columns.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Proof(SmallVec<[u32; 8]>);

impl Proof {
    pub fn empty() -> Self {
        Proof(SmallVec::new())
    }

    pub fn single(column: usize) -> Self {
        Proof(smallvec::smallvec![column as u32])
    }

    pub fn from_columns(columns: impl IntoIterator<Item = usize>) -> Self {
        let mut v: SmallVec<[u32; 8]> = columns.into_iter().map(|c| c as u32).collect();
        v.sort_unstable();
        v.dedup();
        Proof(v)
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&c| c as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, column: usize) -> bool {
        self.0.binary_search(&(column as u32)).is_ok()
    }

    pub fn is_disjoint(&self, other: &Proof) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    /// Union of two proofs. In matrix form this is the columnwise minimum
    /// of the two rows, since `min(p, +inf) = p` and `min(p, p) = p`.
    pub fn union(&self, other: &Proof) -> Proof {
        let (a, b) = (&self.0, &other.0);
        let mut out = SmallVec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Proof(out)
    }

    /// Product of the normalized row: `p_j` for used columns, 1 elsewhere.
    pub fn prob(&self, p: &[f64]) -> f64 {
        self.0.iter().map(|&c| p[c as usize]).product()
    }
}

/// Keeps the `k` most probable distinct proofs of `candidates`. Duplicates
/// keep their first occurrence; equal probabilities keep candidate order.
pub fn top_k(candidates: Vec<Proof>, k: usize, p: &[f64]) -> Vec<Proof> {
    let distinct: Vec<Proof> = if candidates.len() <= 16 {
        let mut out: Vec<Proof> = Vec::with_capacity(candidates.len());
        for c in candidates {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    } else {
        let mut seen = HashSet::with_capacity(candidates.len());
        candidates
            .into_iter()
            .filter(|c| seen.insert(c.clone()))
            .collect()
    };
    let mut scored: Vec<(f64, Proof)> = distinct.into_iter().map(|c| (c.prob(p), c)).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("proof probabilities are finite"));
    scored.truncate(k);
    scored.into_iter().map(|(_, c)| c).collect()
}

/// `t ⊗ t'`: pairwise unions of present proofs, then top-k.
pub fn conj(a: &[Proof], b: &[Proof], k: usize, p: &[f64]) -> Vec<Proof> {
    let mut cands = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            cands.push(x.union(y));
        }
    }
    top_k(cands, k, p)
}

/// `t ⊕ t' ⊕ …`: concatenation of all present proofs, then top-k.
pub fn disj<'a>(parts: impl IntoIterator<Item = &'a [Proof]>, k: usize, p: &[f64]) -> Vec<Proof> {
    let cands: Vec<Proof> = parts.into_iter().flatten().cloned().collect();
    top_k(cands, k, p)
}

pub fn zero() -> Vec<Proof> {
    Vec::new()
}

/// The tag holding only the empty proof.
pub fn one() -> Vec<Proof> {
    vec![Proof::empty()]
}

/// Add-mult probability of one tag, clamped to `[0, 1]`.
pub fn tag_prob(proofs: &[Proof], p: &[f64]) -> f64 {
    proofs.iter().map(|pr| pr.prob(p)).sum::<f64>().clamp(0.0, 1.0)
}

/// Batched top-k proof tags: one proof list per (batch row, symbol).
#[derive(Clone, Debug, PartialEq)]
pub struct DtkpTags {
    k: usize,
    batch: usize,
    symbols: usize,
    cells: Vec<Vec<Proof>>,
    /// Registry row holding the leaf probabilities for each batch row.
    reg_rows: Vec<usize>,
}

impl DtkpTags {
    pub fn new(
        k: usize,
        batch: usize,
        symbols: usize,
        cells: Vec<Vec<Proof>>,
        reg_rows: Vec<usize>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("top-k needs k >= 1".into()));
        }
        if cells.len() != batch * symbols || reg_rows.len() != batch {
            return Err(Error::ShapeMismatch {
                op: "dtkp tags",
                lhs: vec![batch, symbols],
                rhs: vec![cells.len(), reg_rows.len()],
            });
        }
        if cells.iter().any(|c| c.len() > k) {
            return Err(Error::InvalidArgument(format!("a tag holds more than k={k} proofs")));
        }
        Ok(DtkpTags {
            k,
            batch,
            symbols,
            cells,
            reg_rows,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn reg_rows(&self) -> &[usize] {
        &self.reg_rows
    }

    pub fn cell(&self, row: usize, symbol: usize) -> &[Proof] {
        &self.cells[row * self.symbols + symbol]
    }

    pub(crate) fn cells(&self) -> &[Vec<Proof>] {
        &self.cells
    }

    /// Matrix form of one symbol's tag: shape (batch, k, columns) with
    /// `p_j`, `+inf` (column unused) and `-inf` (absent proof).
    pub fn matrix(&self, symbol: usize, leaves: &Tensor) -> Tensor {
        let cols = leaves.shape()[1];
        let mut data = vec![f64::NEG_INFINITY; self.batch * self.k * cols];
        for r in 0..self.batch {
            let p = leaves.row(self.reg_rows[r]);
            for (i, proof) in self.cell(r, symbol).iter().enumerate() {
                let row = &mut data[(r * self.k + i) * cols..(r * self.k + i + 1) * cols];
                row.fill(f64::INFINITY);
                for c in proof.columns() {
                    row[c] = p[c];
                }
            }
        }
        Tensor::new(vec![self.batch, self.k, cols], data).expect("shape")
    }
}

/// Normalizes a matrix-form entry: `+inf -> 1`, `-inf -> 0`.
pub fn norm(v: f64) -> f64 {
    if v == f64::INFINITY {
        1.0
    } else if v == f64::NEG_INFINITY {
        0.0
    } else {
        v
    }
}

/// Differentiable `Pr` of every tag, shape (batch, symbols), against the
/// registry leaves `leaves` of shape (registry rows, columns).
pub fn prob(tags: &Arc<DtkpTags>, leaves: &Var) -> Result<Var> {
    let lv = leaves.value();
    let cols = lv.shape()[1];
    let n = tags.symbols;
    let rows = par::map_indices(tags.batch, tags.cells.len() * tags.k * 4, |r| {
        let p = lv.row(tags.reg_rows[r]);
        (0..n).map(|s| tag_prob(tags.cell(r, s), p)).collect::<Vec<f64>>()
    });
    let out = Tensor::new(vec![tags.batch, n], rows.concat())?;
    debug_assert!(tags
        .cells
        .iter()
        .flatten()
        .flat_map(|p| p.columns())
        .all(|c| c < cols));
    leaves.tape().custom(
        &[leaves],
        out,
        Rc::new(ProofProbBackward { tags: tags.clone() }),
    )
}

struct ProofProbBackward {
    tags: Arc<DtkpTags>,
}

impl CustomBackward for ProofProbBackward {
    fn backward(&self, upstream: &Tensor, inputs: &[Arc<Tensor>], _output: &Tensor) -> Vec<Tensor> {
        let leaves = &inputs[0];
        let cols = leaves.shape()[1];
        let tags = &self.tags;
        let n = tags.symbols;
        // per-row partials first, then an in-order sum so that rows sharing a
        // registry row accumulate deterministically
        let partials = par::map_indices(tags.batch, tags.cells.len() * tags.k * 4, |r| {
            let p = leaves.row(tags.reg_rows[r]);
            let mut g = vec![0.0; cols];
            for s in 0..n {
                let up = upstream.data()[r * n + s];
                if up == 0.0 {
                    continue;
                }
                // the clamp passes the gradient through unchanged
                for proof in tags.cell(r, s) {
                    let idx: Vec<usize> = proof.columns().collect();
                    let mut prefix = 1.0;
                    let mut loo = vec![0.0; idx.len()];
                    for (i, &c) in idx.iter().enumerate() {
                        loo[i] = prefix;
                        prefix *= p[c];
                    }
                    let mut suffix = 1.0;
                    for i in (0..idx.len()).rev() {
                        g[idx[i]] += up * loo[i] * suffix;
                        suffix *= p[idx[i]];
                    }
                }
            }
            g
        });
        let mut grad = vec![0.0; leaves.len()];
        for (r, g) in partials.iter().enumerate() {
            let base = tags.reg_rows[r] * cols;
            for (dst, v) in grad[base..base + cols].iter_mut().zip(g) {
                *dst += v;
            }
        }
        vec![Tensor::new(leaves.shape().to_vec(), grad).expect("shape")]
    }
}

/// Exact probability that at least one proof holds when input `j` is true
/// independently with probability `probs[j]`. Enumerates all assignments.
pub fn wmc_exact(proofs: &[Proof], probs: &[f64]) -> Result<f64> {
    let groups: Vec<usize> = (0..probs.len()).collect();
    wmc_categorical(proofs, probs, &groups)
}

/// Exact probability that at least one proof holds when the inputs form
/// independent categorical variables: inputs sharing a `groups` id are
/// mutually exclusive, and a group whose probabilities sum below 1 leaves
/// the rest for "no input of this group".
pub fn wmc_categorical(proofs: &[Proof], probs: &[f64], groups: &[usize]) -> Result<f64> {
    let n = probs.len();
    if n > WMC_MAX_INPUTS {
        return Err(Error::RegistryTooLarge {
            inputs: n,
            limit: WMC_MAX_INPUTS,
        });
    }
    if groups.len() != n {
        return Err(Error::ShapeMismatch {
            op: "wmc_categorical",
            lhs: vec![n],
            rhs: vec![groups.len()],
        });
    }
    if let Some(c) = proofs.iter().flat_map(|p| p.columns()).find(|&c| c >= n) {
        return Err(Error::IndexOutOfRange {
            op: "wmc_categorical",
            index: c,
            extent: n,
        });
    }
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    // Per group: (member columns, probability of choosing none).
    let members: Vec<(Vec<usize>, f64)> = ids
        .iter()
        .map(|&g| {
            let cols: Vec<usize> = (0..n).filter(|&j| groups[j] == g).collect();
            let rest = 1.0 - cols.iter().map(|&j| probs[j]).sum::<f64>();
            (cols, rest.max(0.0))
        })
        .collect();
    let masks: Vec<u32> = proofs
        .iter()
        .map(|p| p.columns().fold(0u32, |m, c| m | (1 << c)))
        .collect();
    // Odometer over one choice per group; the last choice is "none".
    let mut choice = vec![0usize; members.len()];
    let mut total = 0.0;
    loop {
        let mut world = 0u32;
        let mut w = 1.0;
        for ((cols, rest), &c) in members.iter().zip(&choice) {
            match cols.get(c) {
                Some(&j) => {
                    world |= 1 << j;
                    w *= probs[j];
                }
                None => w *= rest,
            }
        }
        if masks.iter().any(|&m| world & m == m) {
            total += w;
        }
        let mut g = members.len();
        loop {
            if g == 0 {
                return Ok(total);
            }
            g -= 1;
            choice[g] += 1;
            if choice[g] <= members[g].0.len() {
                break;
            }
            choice[g] = 0;
        }
    }
}
