use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_bce, loss_nll};
use super::mlp::{BoundMlp, Mlp};
use crate::data::{ordered_pairs, HwfSample, LabeledImages, PathSample};
use crate::distribution::{Distribution, ProgramContext, SampleStrategy};
use crate::error::{Error, Result};
use crate::programs::{
    digit_symbols, equality, hwf_sampled, path_closure, product_n_sampled, sum_n_sampled, token_distributions,
    Sampling,
};
use crate::provenance::ProvenanceKind;
use crate::symbol::Symbol;
use crate::tensor::{index_select, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Sum { n: usize },
    Product { n: usize },
    Hwf { max_len: usize },
    Path { nodes: usize },
    /// Are two digit images of the same class?
    Toy,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Sum { n } => write!(f, "sum-{n}"),
            TaskKind::Product { n } => write!(f, "product-{n}"),
            TaskKind::Hwf { max_len } => write!(f, "hwf-{max_len}"),
            TaskKind::Path { nodes } => write!(f, "path-{nodes}"),
            TaskKind::Toy => f.write_str("toy"),
        }
    }
}

impl TaskKind {
    /// Perception output classes.
    pub fn classes(&self) -> usize {
        match self {
            TaskKind::Sum { .. } | TaskKind::Product { .. } | TaskKind::Toy => 10,
            TaskKind::Hwf { .. } => 14,
            TaskKind::Path { .. } => 2,
        }
    }
}

/// Task samples. Digit tasks index into a shared image set.
#[derive(Clone, Debug)]
pub enum Samples {
    Digits {
        images: Arc<LabeledImages>,
        tuples: Vec<Vec<usize>>,
    },
    Hwf(Vec<HwfSample>),
    Path(Vec<PathSample>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Digits { tuples, .. } => tuples.len(),
            Samples::Hwf(s) => s.len(),
            Samples::Path(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Samples::Digits { images, .. } => Some(images.dim()),
            Samples::Hwf(s) => s.first().map(|x| x.features.shape()[1]),
            Samples::Path(s) => s.first().map(|x| x.features.shape()[1]),
        }
    }
}

/// Consecutive groups of `arity` images; the image set is assumed shuffled.
pub fn digit_tuples(images: usize, arity: usize) -> Vec<Vec<usize>> {
    (0..images / arity.max(1)).map(|i| (i * arity..(i + 1) * arity).collect()).collect()
}

/// `count` image pairs, half of them drawn from the same class.
pub fn same_class_pairs(labels: &[usize], count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    (0..count)
        .map(|_| {
            let a = rng.gen_range(0..labels.len());
            let b = if rng.gen_bool(0.5) {
                *by_class[&labels[a]].choose(&mut rng).expect("class of a")
            } else {
                rng.gen_range(0..labels.len())
            };
            vec![a, b]
        })
        .collect()
}

/// Everything about a run that shapes the forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardSettings {
    pub provenance: ProvenanceKind,
    pub sampling: Sampling,
}

/// Program output for a subset of the batch sharing one context.
pub struct Group {
    /// Positions within the batch.
    pub rows: Vec<usize>,
    pub dist: Distribution,
    pub probs: Var,
}

/// What the program should produce for one sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Symbol(Symbol),
    /// Binary question answered by the probability of one symbol.
    Holds(Symbol, bool),
}

pub struct Forward {
    pub loss: Var,
    pub correct: usize,
    pub groups: Vec<Group>,
}

impl TaskKind {
    pub fn check_samples(&self, samples: &Samples) -> Result<()> {
        let ok = match (self, samples) {
            (TaskKind::Sum { n } | TaskKind::Product { n }, Samples::Digits { tuples, .. }) => {
                *n >= 1 && tuples.iter().all(|t| t.len() == *n)
            }
            (TaskKind::Toy, Samples::Digits { tuples, .. }) => tuples.iter().all(|t| t.len() == 2),
            (TaskKind::Hwf { max_len }, Samples::Hwf(s)) => {
                max_len % 2 == 1 && s.iter().all(|x| x.len() <= *max_len && x.len() % 2 == 1)
            }
            (TaskKind::Path { nodes }, Samples::Path(s)) => {
                let e = nodes * nodes.saturating_sub(1);
                s.iter().all(|x| x.features.shape()[0] == e)
            }
            _ => false,
        };
        if !ok {
            return Err(Error::Config(format!("samples do not fit task {self}")));
        }
        Ok(())
    }

    fn target(&self, samples: &Samples, i: usize) -> Target {
        match (self, samples) {
            (TaskKind::Sum { .. }, Samples::Digits { images, tuples }) => {
                Target::Symbol(Symbol::Int(tuples[i].iter().map(|&j| images.labels[j] as i64).sum()))
            }
            (TaskKind::Product { .. }, Samples::Digits { images, tuples }) => {
                Target::Symbol(Symbol::Int(tuples[i].iter().map(|&j| images.labels[j] as i64).product()))
            }
            (TaskKind::Toy, Samples::Digits { images, tuples }) => Target::Holds(
                Symbol::Bool(true),
                images.labels[tuples[i][0]] == images.labels[tuples[i][1]],
            ),
            (TaskKind::Hwf { .. }, Samples::Hwf(s)) => Target::Symbol(Symbol::Rational(s[i].value)),
            (TaskKind::Path { .. }, Samples::Path(s)) => {
                let (x, y) = s[i].query;
                Target::Holds(Symbol::pair(x, y), s[i].connected)
            }
            _ => unreachable!("checked by check_samples"),
        }
    }

    /// Runs perception and the program on `batch` (indices into `samples`)
    /// and returns one group per context.
    pub fn program(
        &self,
        tape: &Tape,
        model: &BoundMlp,
        samples: &Samples,
        batch: &[usize],
        settings: ForwardSettings,
    ) -> Result<Vec<Group>> {
        let b = batch.len();
        let all: Vec<usize> = (0..b).collect();
        match samples {
            Samples::Digits { images, tuples } => {
                let arity = tuples[batch[0]].len();
                // position-major so each position is a contiguous row block
                let rows: Vec<usize> = (0..arity).flat_map(|j| batch.iter().map(move |&i| tuples[i][j])).collect();
                let x = tape.constant(index_select(&images.images, 0, &rows)?);
                let p = model.forward(&x)?;
                let ctx = ProgramContext::new(tape, settings.provenance);
                let digits = (0..arity)
                    .map(|j| {
                        let pj = p.select_rows(&(j * b..(j + 1) * b).collect::<Vec<_>>())?;
                        ctx.distribution(&pj, digit_symbols())
                    })
                    .collect::<Result<Vec<_>>>()?;
                let dist = match self {
                    TaskKind::Sum { .. } => sum_n_sampled(&digits, settings.sampling)?,
                    TaskKind::Product { .. } => product_n_sampled(&digits, settings.sampling)?,
                    _ => equality(&digits[0], &digits[1])?,
                };
                let probs = dist.get_probs()?;
                Ok(vec![Group { rows: all, dist, probs }])
            }
            Samples::Hwf(s) => {
                let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for (pos, &i) in batch.iter().enumerate() {
                    by_len.entry(s[i].len()).or_default().push(pos);
                }
                let mut groups = Vec::with_capacity(by_len.len());
                for (len, rows) in by_len {
                    let g = rows.len();
                    let mut data = Vec::with_capacity(len * g * s[batch[rows[0]]].features.shape()[1]);
                    for t in 0..len {
                        for &pos in &rows {
                            data.extend_from_slice(s[batch[pos]].features.row(t));
                        }
                    }
                    let dim = data.len() / (len * g);
                    let p = model.forward(&tape.constant(Tensor::new(vec![len * g, dim], data)?))?;
                    let per_pos = (0..len)
                        .map(|t| p.select_rows(&(t * g..(t + 1) * g).collect::<Vec<_>>()))
                        .collect::<Result<Vec<_>>>()?;
                    let ctx = ProgramContext::new(tape, settings.provenance);
                    let tokens = token_distributions(&ctx, &per_pos, len)?;
                    let dist = hwf_sampled(&tokens, settings.sampling)?;
                    let probs = dist.get_probs()?;
                    groups.push(Group { rows, dist, probs });
                }
                Ok(groups)
            }
            Samples::Path(s) => {
                let e = s[batch[0]].features.shape()[0];
                let dim = s[batch[0]].features.shape()[1];
                let mut data = Vec::with_capacity(b * e * dim);
                for &i in batch {
                    data.extend_from_slice(s[i].features.data());
                }
                let p = model.forward(&tape.constant(Tensor::new(vec![b * e, dim], data)?))?;
                let edge = p.index_select(1, &[1])?.reshape(&[b, e])?;
                let TaskKind::Path { nodes } = *self else {
                    unreachable!("checked by check_samples")
                };
                let symbols = ordered_pairs(nodes).into_iter().map(|(x, y)| Symbol::pair(x, y)).collect();
                let ctx = ProgramContext::new(tape, settings.provenance);
                let dist = path_closure(&ctx.distribution(&edge, symbols)?)?;
                let probs = dist.get_probs()?;
                Ok(vec![Group { rows: all, dist, probs }])
            }
        }
    }

    /// Forward pass with loss and the number of exact predictions.
    pub fn forward(
        &self,
        tape: &Tape,
        model: &BoundMlp,
        samples: &Samples,
        batch: &[usize],
        settings: ForwardSettings,
    ) -> Result<Forward> {
        let groups = self.program(tape, model, samples, batch, settings)?;
        let b = batch.len() as f64;
        let mut loss: Option<Var> = None;
        let mut correct = 0;
        for g in &groups {
            let targets: Vec<Target> = g.rows.iter().map(|&pos| self.target(samples, batch[pos])).collect();
            let value = g.probs.value();
            let n = g.dist.len();
            let part = match &targets[0] {
                Target::Symbol(_) => {
                    let idx: Vec<Option<usize>> = targets
                        .iter()
                        .map(|t| match t {
                            Target::Symbol(s) => g.dist.index_of(s),
                            Target::Holds(..) => unreachable!("one target kind per task"),
                        })
                        .collect();
                    for (r, t) in idx.iter().enumerate() {
                        if t.is_some() && argmax(&value.data()[r * n..(r + 1) * n]) == *t {
                            correct += 1;
                        }
                    }
                    loss_nll(&g.probs, &idx)?
                }
                Target::Holds(..) => {
                    let rows = g.rows.len();
                    let tape = g.probs.tape();
                    let padded = tape.concat(&[&g.probs, &tape.constant(Tensor::zeros(&[rows, 1]))], 1)?;
                    let mut flat = Vec::with_capacity(rows);
                    let mut labels = Vec::with_capacity(rows);
                    for (r, t) in targets.iter().enumerate() {
                        let Target::Holds(s, y) = t else {
                            unreachable!("one target kind per task")
                        };
                        flat.push(r * (n + 1) + g.dist.index_of(s).unwrap_or(n));
                        labels.push(if *y { 1.0 } else { 0.0 });
                    }
                    let picked = padded.reshape(&[rows * (n + 1)])?.index_select(0, &flat)?;
                    for (p, y) in picked.value().data().iter().zip(&labels) {
                        if (*p >= 0.5) == (*y == 1.0) {
                            correct += 1;
                        }
                    }
                    loss_bce(&picked, &labels)?
                }
            };
            let weighted = part.scale(g.rows.len() as f64 / b);
            loss = Some(match loss {
                Some(l) => l.add(&weighted)?,
                None => weighted,
            });
        }
        let loss = loss.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        Ok(Forward { loss, correct, groups })
    }

    /// Per-sample `symbol -> probability` tables, in batch order.
    pub fn sample_tables(
        &self,
        model: &Mlp,
        samples: &Samples,
        batch: &[usize],
        settings: ForwardSettings,
    ) -> Result<Vec<BTreeMap<Symbol, f64>>> {
        let tape = Tape::new();
        let groups = self.program(&tape, &model.bind(&tape), samples, batch, settings)?;
        let mut out = vec![BTreeMap::new(); batch.len()];
        for g in groups {
            let v = g.probs.value();
            let n = g.dist.len();
            for (r, &pos) in g.rows.iter().enumerate() {
                out[pos] = g.dist.symbols().iter().cloned().zip(v.data()[r * n..(r + 1) * n].iter().copied()).collect();
            }
        }
        Ok(out)
    }

    /// Layer extents for the perception model.
    pub fn model_sizes(&self, input_dim: usize, hidden: usize) -> Vec<usize> {
        vec![input_dim, hidden, self.classes()]
    }
}

/// First index of the largest value; `None` for an empty row.
pub fn argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in row.iter().enumerate() {
        if best.map_or(true, |b| v > row[b]) {
            best = Some(i);
        }
    }
    best
}

impl Default for ForwardSettings {
    fn default() -> Self {
        ForwardSettings {
            provenance: ProvenanceKind::Damp,
            sampling: None,
        }
    }
}

pub fn sampling(m: Option<usize>, strategy: SampleStrategy) -> Sampling {
    m.map(|m| (m, strategy))
}
