//! Batched programs against exhaustive enumeration, and batched execution
//! against one-sample-at-a-time execution.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{closure_add_mult, enumerate, reachability};
use crate::data::{gen_clusters, gen_hwf_dataset, gen_path_dataset};
use crate::distribution::{Distribution, ProgramContext};
use crate::error::Result;
use crate::learn::{digit_tuples, same_class_pairs, ForwardSettings, Mlp, Samples, TaskKind};
use crate::programs::{evaluate_tokens, hwf, path_closure_counted, product_n, sum_n, OPERATORS};
use crate::provenance::ProvenanceKind;
use crate::symbol::Symbol;
use crate::tensor::{Tape, Tensor};

pub const ORACLE_TOL: f64 = 1e-9;
pub const CLOSURE_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Comparison {
    pub name: String,
    pub cases: usize,
    pub worst_abs_error: f64,
    pub tolerance: f64,
    /// Every case produced exactly the expected symbol set.
    pub symbols_match: bool,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.symbols_match && self.worst_abs_error <= self.tolerance
    }
}

type Table = BTreeMap<Symbol, f64>;

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn random_subset(rng: &mut ChaCha8Rng, pool: &[Symbol], max: usize) -> Vec<Symbol> {
    let size = rng.gen_range(1..=max.min(pool.len()));
    let mut s: Vec<Symbol> = pool.choose_multiple(rng, size).cloned().collect();
    s.sort();
    s
}

fn row_tables(d: &Distribution) -> Result<Vec<Table>> {
    let p = d.get_probs()?.value();
    Ok((0..d.batch())
        .map(|r| d.symbols().iter().cloned().zip(p.row(r).iter().copied()).collect())
        .collect())
}

/// Worst absolute difference, or `None` when the symbol sets differ.
fn table_error(got: &Table, want: &Table) -> Option<f64> {
    if !got.keys().eq(want.keys()) {
        return None;
    }
    Some(got.iter().map(|(s, p)| (p - want[s]).abs()).fold(0.0, f64::max))
}

struct Tally {
    cases: usize,
    worst: f64,
    symbols_match: bool,
}

impl Tally {
    fn new() -> Self {
        Tally {
            cases: 0,
            worst: 0.0,
            symbols_match: true,
        }
    }

    fn add(&mut self, got: &Table, want: &Table) {
        self.cases += 1;
        match table_error(got, want) {
            Some(e) => self.worst = self.worst.max(e),
            None => self.symbols_match = false,
        }
    }

    fn finish(self, name: String, tolerance: f64) -> Comparison {
        Comparison {
            name,
            cases: self.cases,
            worst_abs_error: self.worst,
            tolerance,
            symbols_match: self.symbols_match,
        }
    }
}

const ORACLE_ROWS: usize = 4;

/// Runs `program` on random candidate sets drawn per slot, with several
/// probability rows per batch, and compares every row with enumeration.
fn slot_program<P, F>(rng: &mut ChaCha8Rng, slots: &[(Vec<Symbol>, usize)], program: P, f: F, tally: &mut Tally) -> Result<()>
where
    P: Fn(&[Distribution]) -> Result<Distribution>,
    F: Fn(&[&Symbol]) -> Option<Symbol> + Copy,
{
    let symbols: Vec<Vec<Symbol>> = slots.iter().map(|(pool, max)| random_subset(rng, pool, *max)).collect();
    let rows: Vec<Vec<Vec<f64>>> = symbols
        .iter()
        .map(|s| (0..ORACLE_ROWS).map(|_| random_row(rng, s.len())).collect())
        .collect();
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let inputs = symbols
        .iter()
        .zip(&rows)
        .map(|(s, r)| {
            let refs: Vec<&[f64]> = r.iter().map(Vec::as_slice).collect();
            ctx.distribution(&tape.leaf(Tensor::from_rows(&refs)?), s.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let got = row_tables(&program(&inputs)?)?;
    for (row, table) in got.iter().enumerate() {
        let per_slot: Vec<(Vec<Symbol>, Vec<f64>)> = symbols.iter().zip(&rows).map(|(s, r)| (s.clone(), r[row].clone())).collect();
        tally.add(table, &enumerate(&per_slot, f));
    }
    Ok(())
}

fn digits() -> Vec<Symbol> {
    (0..10).map(Symbol::Int).collect()
}

fn fold_ints(args: &[&Symbol], op: fn(i64, i64) -> Option<i64>) -> Option<Symbol> {
    let mut it = args.iter().map(|s| s.as_int());
    let first = it.next()??;
    it.try_fold(first, |acc, v| op(acc, v?)).map(Symbol::Int)
}

/// Add-mult programs against enumeration: digit sums and products with up
/// to three inputs of at most six symbols, formulas up to length three, and
/// closure on random 10-node DAGs.
pub fn oracle_suite(cases: usize, seed: u64) -> Result<Vec<Comparison>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![];
    for n in 1..=3 {
        let slots = vec![(digits(), 6); n];
        let mut sums = Tally::new();
        let mut products = Tally::new();
        for _ in 0..cases {
            slot_program(&mut rng, &slots, |d| sum_n(d), |a| fold_ints(a, i64::checked_add), &mut sums)?;
            slot_program(&mut rng, &slots, |d| product_n(d), |a| fold_ints(a, i64::checked_mul), &mut products)?;
        }
        out.push(sums.finish(format!("sum-{n}"), ORACLE_TOL));
        out.push(products.finish(format!("product-{n}"), ORACLE_TOL));
    }
    let digit_tokens: Vec<Symbol> = (0..10).map(|d| Symbol::str(&d.to_string())).collect();
    let op_tokens: Vec<Symbol> = OPERATORS.iter().map(|o| Symbol::str(o)).collect();
    for len in [1, 3] {
        let slots: Vec<(Vec<Symbol>, usize)> = (0..len)
            .map(|i| if i % 2 == 0 { (digit_tokens.clone(), 4) } else { (op_tokens.clone(), 4) })
            .collect();
        let mut tally = Tally::new();
        for _ in 0..cases {
            slot_program(
                &mut rng,
                &slots,
                |d| hwf(d),
                |a| {
                    let toks: Vec<&str> = a.iter().map(|s| s.as_str()).collect::<Option<_>>()?;
                    evaluate_tokens(&toks).map(Symbol::Rational)
                },
                &mut tally,
            )?;
        }
        out.push(tally.finish(format!("hwf-{len}"), ORACLE_TOL));
    }
    let mut closure = Tally::new();
    let mut max_rounds = 0;
    for _ in 0..cases {
        let edges = random_dag(&mut rng, 10, 0.25);
        if edges.is_empty() {
            continue;
        }
        let tape = Tape::new();
        let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
        let probs: Vec<f64> = edges.iter().map(|e| e.1).collect();
        let syms = edges.iter().map(|&((x, y), _)| Symbol::pair(x, y)).collect();
        let d = ctx.distribution(&tape.leaf(Tensor::from_rows(&[&probs])?), syms)?;
        let (c, rounds) = path_closure_counted(&d)?;
        max_rounds = max_rounds.max(rounds);
        let got = &row_tables(&c)?[0];
        let want: Table = closure_add_mult(&edges).into_iter().map(|((x, y), p)| (Symbol::pair(x, y), p)).collect();
        let pairs: Vec<(i64, i64)> = edges.iter().map(|e| e.0).collect();
        let reach: BTreeSet<Symbol> = reachability(&pairs).into_iter().map(|(x, y)| Symbol::pair(x, y)).collect();
        if !got.keys().cloned().eq(reach.into_iter()) {
            closure.symbols_match = false;
        }
        closure.add(got, &want);
    }
    out.push(closure.finish(format!("path closure, 10-node DAGs ({max_rounds} rounds max)"), CLOSURE_TOL));
    Ok(out)
}

fn random_dag(rng: &mut ChaCha8Rng, nodes: i64, density: f64) -> Vec<((i64, i64), f64)> {
    let mut edges = vec![];
    for x in 0..nodes {
        for y in x + 1..nodes {
            if rng.gen_bool(density) {
                edges.push(((x, y), rng.gen_range(0.05..0.95)));
            }
        }
    }
    edges
}

const EQUIV_DIM: usize = 8;
const EQUIV_HIDDEN: usize = 16;

/// `count` samples of `kind` with small random features.
pub fn small_samples(kind: TaskKind, count: usize, seed: u64) -> Result<Samples> {
    Ok(match kind {
        TaskKind::Sum { n } | TaskKind::Product { n } => {
            let images = gen_clusters(10, (n * count).div_ceil(10), EQUIV_DIM, 2.0, seed)?;
            let total = images.len();
            Samples::Digits {
                images: Arc::new(images),
                tuples: digit_tuples(total, n).into_iter().take(count).collect(),
            }
        }
        TaskKind::Toy => {
            let images = gen_clusters(10, count.div_ceil(10).max(2), EQUIV_DIM, 2.0, seed)?;
            let tuples = same_class_pairs(&images.labels, count, seed);
            Samples::Digits {
                images: Arc::new(images),
                tuples,
            }
        }
        TaskKind::Hwf { max_len } => Samples::Hwf(gen_hwf_dataset(max_len, count, EQUIV_DIM, 2.0, seed)?),
        TaskKind::Path { nodes } => Samples::Path(gen_path_dataset(nodes, 0.3, count, EQUIV_DIM, 0.5, seed)?),
    })
}

/// Runs `batch` samples jointly and one at a time under a random model and
/// compares the per-sample output tables.
pub fn batched_matches_sequential(
    kind: TaskKind,
    provenance: ProvenanceKind,
    batch: usize,
    seed: u64,
) -> Result<Comparison> {
    let samples = small_samples(kind, batch, seed)?;
    let model = Mlp::new(&kind.model_sizes(EQUIV_DIM, EQUIV_HIDDEN), &mut ChaCha8Rng::seed_from_u64(seed))?;
    let settings = ForwardSettings {
        provenance,
        sampling: None,
    };
    let all: Vec<usize> = (0..samples.len()).collect();
    let joint = kind.sample_tables(&model, &samples, &all, settings)?;
    let mut tally = Tally::new();
    for (i, want) in joint.iter().enumerate() {
        let alone = kind.sample_tables(&model, &samples, &[i], settings)?;
        tally.add(&alone[0], want);
    }
    Ok(tally.finish(format!("{kind} batch {batch} ({provenance})"), ORACLE_TOL))
}

/// Every task under both provenances.
pub fn batched_suite(batch: usize, seed: u64) -> Result<Vec<Comparison>> {
    let tasks = [
        TaskKind::Sum { n: 2 },
        TaskKind::Product { n: 2 },
        TaskKind::Hwf { max_len: 3 },
        TaskKind::Path { nodes: 5 },
        TaskKind::Toy,
    ];
    let mut out = vec![];
    for kind in tasks {
        for prov in [ProvenanceKind::Damp, ProvenanceKind::dtkp(3)?] {
            out.push(batched_matches_sequential(kind, prov, batch, seed)?);
        }
    }
    Ok(out)
}
