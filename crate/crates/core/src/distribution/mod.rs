//! Distributions over symbols and their five primitives.
//!
//! Symbols live on the host and are shared by every row of the batch; tags
//! are batched. User functions therefore run once per symbol combination,
//! whatever the batch size, and all tag arithmetic is one batched op per
//! primitive.

mod context;

use std::cmp::Ordering;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use context::ProgramContext;

use crate::error::{Error, Result};
use crate::par;
use crate::provenance::dtkp::{self, DtkpTags, Proof};
use crate::symbol::Symbol;
use crate::tensor::Var;

/// Outcome of a user function: `Ok(None)` means "no result" and drops the
/// combination; `Err` aborts the primitive.
pub type UdfResult = std::result::Result<Option<Symbol>, String>;

/// Batched tags, one per symbol.
#[derive(Clone)]
pub enum Tags {
    /// Shape (batch, symbols) probabilities.
    Damp(Var),
    Dtkp(Arc<DtkpTags>),
}

#[derive(Clone)]
pub struct Distribution {
    ctx: ProgramContext,
    symbols: Rc<[Symbol]>,
    tags: Tags,
    batch: usize,
}

impl fmt::Debug for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Distribution")
            .field("symbols", &self.symbols)
            .field("batch", &self.batch)
            .finish()
    }
}

/// Map and shuffle stages of an apply: the result symbol of every
/// contributing combination and the bucket it reduces into.
#[derive(Clone, Debug, PartialEq)]
pub struct ApplyPlan {
    pub arity: usize,
    /// Distinct result symbols in first-derivation order.
    pub symbols: Vec<Symbol>,
    /// Flattened input indices, `arity` per contributing combination.
    pub combos: Vec<usize>,
    /// Result-symbol index of each combination.
    pub buckets: Vec<usize>,
}

impl ApplyPlan {
    /// Enumerates the product of `inputs` in lexicographic order (first
    /// input slowest), evaluating `cond` and then `f` on each combination.
    pub fn build<F, C>(inputs: &[&[Symbol]], f: F, cond: C) -> Result<ApplyPlan>
    where
        F: Fn(&[&Symbol]) -> UdfResult,
        C: Fn(&[&Symbol]) -> bool,
    {
        let arity = inputs.len();
        let mut plan = ApplyPlan {
            arity,
            symbols: vec![],
            combos: vec![],
            buckets: vec![],
        };
        if arity == 0 || inputs.iter().any(|s| s.is_empty()) {
            return Ok(plan);
        }
        let mut index: IndexMap<Symbol, usize> = IndexMap::new();
        let mut odo = vec![0usize; arity];
        let mut args: Vec<&Symbol> = Vec::with_capacity(arity);
        loop {
            args.clear();
            args.extend(odo.iter().zip(inputs).map(|(&i, s)| &s[i]));
            if cond(&args) {
                match f(&args) {
                    Ok(Some(sym)) => {
                        let next = index.len();
                        let b = *index.entry(sym).or_insert(next);
                        plan.combos.extend_from_slice(&odo);
                        plan.buckets.push(b);
                    }
                    Ok(None) => {}
                    Err(message) => {
                        return Err(Error::Udf {
                            symbols: args.iter().map(|s| (*s).clone()).collect(),
                            message,
                        })
                    }
                }
            }
            let mut ax = arity;
            loop {
                if ax == 0 {
                    plan.symbols = index.into_keys().collect();
                    return Ok(plan);
                }
                ax -= 1;
                odo[ax] += 1;
                if odo[ax] < inputs[ax].len() {
                    break;
                }
                odo[ax] = 0;
            }
        }
    }

    pub fn combination_count(&self) -> usize {
        self.buckets.len()
    }

    /// Combination indices grouped by bucket, in combination order.
    pub fn bucket_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![vec![]; self.symbols.len()];
        for (c, &b) in self.buckets.iter().enumerate() {
            members[b].push(c);
        }
        members
    }
}

/// How [`Distribution::sample_symbols`] picks the retained symbols.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SampleStrategy {
    /// Highest batch-mean probability; ties broken by symbol encoding.
    #[default]
    TopMean,
    /// Categorical draws without replacement, weighted by batch-mean
    /// probability, from a seeded generator.
    Seeded(u64),
}

impl Distribution {
    pub(crate) fn from_parts(ctx: ProgramContext, symbols: Vec<Symbol>, tags: Tags, batch: usize) -> Self {
        Distribution {
            ctx,
            symbols: symbols.into(),
            tags,
            batch,
        }
    }

    pub fn context(&self) -> &ProgramContext {
        &self.ctx
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn tags(&self) -> &Tags {
        &self.tags
    }

    pub fn index_of(&self, s: &Symbol) -> Option<usize> {
        self.symbols.iter().position(|x| x == s)
    }

    fn check_compatible(inputs: &[&Distribution]) -> Result<()> {
        let first = inputs[0];
        for d in &inputs[1..] {
            if !d.ctx.same_as(&first.ctx) {
                return Err(Error::ContextMismatch);
            }
            if d.batch != first.batch {
                return Err(Error::BatchMismatch {
                    expected: first.batch,
                    found: d.batch,
                });
            }
            if let (Tags::Dtkp(a), Tags::Dtkp(b)) = (&first.tags, &d.tags) {
                if a.reg_rows() != b.reg_rows() {
                    return Err(Error::InvalidArgument(
                        "distributions come from differently stacked batches".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Reduce stage shared by apply and union: builds a distribution whose
    /// tag for bucket `b` is the disjunction of the listed source tags.
    fn reduce(&self, symbols: Vec<Symbol>, damp: impl FnOnce() -> Result<Var>, dtkp: impl FnOnce() -> Result<DtkpTags>) -> Result<Distribution> {
        let tags = match self.tags {
            Tags::Damp(_) => Tags::Damp(damp()?),
            Tags::Dtkp(_) => Tags::Dtkp(Arc::new(dtkp()?)),
        };
        Ok(Distribution::from_parts(self.ctx.clone(), symbols, tags, self.batch))
    }

    /// Probabilities of every symbol, shape (batch, symbols). Not
    /// normalized.
    pub fn get_probs(&self) -> Result<Var> {
        let frozen = self.ctx.freeze()?;
        match &self.tags {
            Tags::Damp(v) => Ok(v.clone()),
            Tags::Dtkp(t) => dtkp::prob(t, &frozen.leaves),
        }
    }

    /// Keeps the symbols satisfying `pred`; their tags are untouched.
    pub fn filter<P>(&self, pred: P) -> Result<Distribution>
    where
        P: Fn(&Symbol) -> std::result::Result<bool, String>,
    {
        let mut keep = Vec::new();
        for (i, s) in self.symbols.iter().enumerate() {
            match pred(s) {
                Ok(true) => keep.push(i),
                Ok(false) => {}
                Err(message) => {
                    return Err(Error::Udf {
                        symbols: vec![s.clone()],
                        message,
                    })
                }
            }
        }
        self.select(&keep)
    }

    /// Sub-distribution over the symbols at `keep`, in that order.
    fn select(&self, keep: &[usize]) -> Result<Distribution> {
        let symbols = keep.iter().map(|&i| self.symbols[i].clone()).collect();
        let tags = match &self.tags {
            Tags::Damp(v) => Tags::Damp(v.index_select(1, keep)?),
            Tags::Dtkp(t) => {
                let n = t.symbols();
                let cells = (0..t.batch())
                    .flat_map(|r| keep.iter().map(move |&i| r * n + i))
                    .map(|ix| t.cells()[ix].clone())
                    .collect();
                Tags::Dtkp(Arc::new(DtkpTags::new(
                    t.k(),
                    t.batch(),
                    keep.len(),
                    cells,
                    t.reg_rows().to_vec(),
                )?))
            }
        };
        Ok(Distribution::from_parts(self.ctx.clone(), symbols, tags, self.batch))
    }

    /// Symbol union; tags of shared symbols are disjoined.
    pub fn union(&self, other: &Distribution) -> Result<Distribution> {
        Distribution::check_compatible(&[self, other])?;
        self.ctx.freeze()?;
        let mut index: IndexMap<Symbol, usize> = IndexMap::new();
        for s in self.symbols.iter().chain(other.symbols.iter()) {
            let next = index.len();
            index.entry(s.clone()).or_insert(next);
        }
        let seg_self: Vec<usize> = self.symbols.iter().map(|s| index[s]).collect();
        let seg_other: Vec<usize> = other.symbols.iter().map(|s| index[s]).collect();
        let m = index.len();
        let symbols: Vec<Symbol> = index.into_keys().collect();
        let ctx = self.ctx.clone();
        self.reduce(
            symbols,
            || {
                let (Tags::Damp(a), Tags::Damp(b)) = (&self.tags, &other.tags) else {
                    unreachable!("one provenance per context")
                };
                let both = ctx.tape().concat(&[a, b], 1)?;
                let segments: Vec<usize> = seg_self.iter().chain(&seg_other).copied().collect();
                both.segment_sum(1, &segments, m)?.clamp(0.0, 1.0)
            },
            || {
                let (Tags::Dtkp(a), Tags::Dtkp(b)) = (&self.tags, &other.tags) else {
                    unreachable!("one provenance per context")
                };
                let frozen = ctx.freeze()?;
                let k = a.k();
                let mut sources: Vec<Vec<(bool, usize)>> = vec![vec![]; m];
                for (i, &s) in seg_self.iter().enumerate() {
                    sources[s].push((false, i));
                }
                for (i, &s) in seg_other.iter().enumerate() {
                    sources[s].push((true, i));
                }
                let rows = par::map_indices(a.batch(), a.batch() * m * k * 4, |r| {
                    let p = frozen.values.row(a.reg_rows()[r]);
                    sources
                        .iter()
                        .map(|src| {
                            let parts = src.iter().map(|&(right, i)| {
                                if right {
                                    b.cell(r, i)
                                } else {
                                    a.cell(r, i)
                                }
                            });
                            dtkp::disj(parts, k, p)
                        })
                        .collect::<Vec<_>>()
                });
                DtkpTags::new(k, a.batch(), m, rows.concat(), a.reg_rows().to_vec())
            },
        )
    }

    /// Keeps at most `m` symbols.
    pub fn sample_symbols(&self, m: usize, strategy: SampleStrategy) -> Result<Distribution> {
        if m < 1 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        if m >= self.len() {
            return Ok(self.clone());
        }
        let probs = self.get_probs()?.value();
        let n = self.len();
        let mean: Vec<f64> = (0..n)
            .map(|j| (0..self.batch).map(|r| probs.row(r)[j]).sum::<f64>() / self.batch.max(1) as f64)
            .collect();
        let mut keep: Vec<usize> = match strategy {
            SampleStrategy::TopMean => {
                let enc: Vec<Vec<u8>> = self.symbols.iter().map(Symbol::encode).collect();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    mean[b]
                        .partial_cmp(&mean[a])
                        .unwrap_or(Ordering::Equal)
                        .then_with(|| enc[a].cmp(&enc[b]))
                });
                order.truncate(m);
                order
            }
            SampleStrategy::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut pool: Vec<usize> = (0..n).collect();
                let mut picked = Vec::with_capacity(m);
                for _ in 0..m {
                    let weights: Vec<f64> = pool.iter().map(|&i| mean[i].max(0.0)).collect();
                    let total: f64 = weights.iter().sum();
                    let pos = if total > 0.0 {
                        let mut u = rng.gen::<f64>() * total;
                        let mut chosen = weights.len() - 1;
                        for (i, w) in weights.iter().enumerate() {
                            if u < *w {
                                chosen = i;
                                break;
                            }
                            u -= w;
                        }
                        chosen
                    } else {
                        rng.gen_range(0..pool.len())
                    };
                    picked.push(pool.remove(pos));
                }
                picked
            }
        };
        keep.sort_unstable();
        self.select(&keep)
    }

    /// Concatenates per-sample distributions along the batch axis. The
    /// symbol set is the union of the parts; symbols a part lacks get the
    /// zero tag in that part's rows.
    pub fn stack(parts: &[&Distribution]) -> Result<Distribution> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack needs at least one part".into()))?;
        for p in &parts[1..] {
            if !p.ctx.same_as(&first.ctx) {
                return Err(Error::ContextMismatch);
            }
        }
        let ctx = first.ctx.clone();
        let frozen = ctx.freeze()?;
        let mut index: IndexMap<Symbol, usize> = IndexMap::new();
        for p in parts {
            for s in p.symbols.iter() {
                let next = index.len();
                index.entry(s.clone()).or_insert(next);
            }
        }
        let m = index.len();
        let batch: usize = parts.iter().map(|p| p.batch).sum();
        let tags = match &first.tags {
            Tags::Damp(_) => {
                let aligned = parts
                    .iter()
                    .map(|p| {
                        let Tags::Damp(v) = &p.tags else { unreachable!() };
                        let seg: Vec<usize> = p.symbols.iter().map(|s| index[s]).collect();
                        v.segment_sum(1, &seg, m)
                    })
                    .collect::<Result<Vec<Var>>>()?;
                let refs: Vec<&Var> = aligned.iter().collect();
                Tags::Damp(ctx.tape().concat(&refs, 0)?)
            }
            Tags::Dtkp(t0) => {
                let mut cells = Vec::with_capacity(batch * m);
                let mut reg_rows = Vec::with_capacity(batch);
                for p in parts {
                    let Tags::Dtkp(t) = &p.tags else { unreachable!() };
                    if t.k() != t0.k() {
                        return Err(Error::InvalidArgument("stacked tags disagree on k".into()));
                    }
                    let pos: Vec<Option<usize>> =
                        index.keys().map(|s| p.index_of(s)).collect();
                    for r in 0..t.batch() {
                        for slot in &pos {
                            cells.push(slot.map_or_else(dtkp::zero, |i| t.cell(r, i).to_vec()));
                        }
                        reg_rows.push(t.reg_rows()[r]);
                    }
                }
                debug_assert!(reg_rows.iter().all(|&r| r < frozen.values.shape()[0].max(1)));
                Tags::Dtkp(Arc::new(DtkpTags::new(t0.k(), batch, m, cells, reg_rows)?))
            }
        };
        Ok(Distribution::from_parts(ctx, index.into_keys().collect(), tags, batch))
    }
}

/// Map-shuffle-reduce over `inputs`: `f` runs on every symbol combination,
/// each combination's tag is the conjunction of its input tags, and tags
/// landing on the same result symbol are disjoined.
pub fn apply<F>(inputs: &[&Distribution], f: F) -> Result<Distribution>
where
    F: Fn(&[&Symbol]) -> UdfResult,
{
    apply_if(inputs, f, |_| true)
}

/// [`apply`] restricted to the combinations satisfying `cond`.
pub fn apply_if<F, C>(inputs: &[&Distribution], f: F, cond: C) -> Result<Distribution>
where
    F: Fn(&[&Symbol]) -> UdfResult,
    C: Fn(&[&Symbol]) -> bool,
{
    let first = *inputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("apply needs at least one distribution".into()))?;
    Distribution::check_compatible(inputs)?;
    let ctx = first.ctx.clone();
    let frozen = ctx.freeze()?;
    let lists: Vec<&[Symbol]> = inputs.iter().map(|d| d.symbols()).collect();
    let plan = ApplyPlan::build(&lists, f, cond)?;
    let arity = plan.arity;
    let c = plan.combination_count();
    let m = plan.symbols.len();
    first.reduce(
        plan.symbols.clone(),
        || {
            let mut acc: Option<Var> = None;
            for (i, d) in inputs.iter().enumerate() {
                let Tags::Damp(v) = &d.tags else { unreachable!() };
                let cols: Vec<usize> = (0..c).map(|j| plan.combos[j * arity + i]).collect();
                let g = v.index_select(1, &cols)?;
                acc = Some(match acc {
                    None => g,
                    Some(a) => a.mul(&g)?,
                });
            }
            acc.expect("arity >= 1")
                .segment_sum(1, &plan.buckets, m)?
                .clamp(0.0, 1.0)
        },
        || {
            let tags: Vec<&Arc<DtkpTags>> = inputs
                .iter()
                .map(|d| match &d.tags {
                    Tags::Dtkp(t) => t,
                    Tags::Damp(_) => unreachable!(),
                })
                .collect();
            let k = tags[0].k();
            let batch = first.batch;
            let reg_rows = tags[0].reg_rows().to_vec();
            let members = plan.bucket_members();
            let rows = par::map_indices(batch, batch * c * k * k * arity, |r| {
                let p = frozen.values.row(reg_rows[r]);
                let conj: Vec<Vec<Proof>> = (0..c)
                    .map(|j| {
                        let combo = &plan.combos[j * arity..(j + 1) * arity];
                        let mut acc = tags[0].cell(r, combo[0]).to_vec();
                        for (t, &ix) in tags.iter().zip(combo).skip(1) {
                            acc = dtkp::conj(&acc, t.cell(r, ix), k, p);
                        }
                        acc
                    })
                    .collect();
                members
                    .iter()
                    .map(|cs| dtkp::disj(cs.iter().map(|&j| conj[j].as_slice()), k, p))
                    .collect::<Vec<_>>()
            });
            DtkpTags::new(k, batch, m, rows.concat(), reg_rows)
        },
    )
}

#[cfg(test)]
mod tests;
