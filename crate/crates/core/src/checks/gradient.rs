//! Finite-difference checks of every tensor primitive and of whole
//! perception-to-loss pipelines.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{gen_clusters, gen_hwf_dataset, gen_path_dataset};
use crate::distribution::{apply, ProgramContext};
use crate::error::{Error, Result};
use crate::gradcheck::{central_difference, central_difference_checked, max_relative_error, CheckOutcome, FD_STEP};
use crate::learn::{digit_tuples, same_class_pairs, ForwardSettings, Mlp, Samples, TaskKind};
use crate::provenance::{dtkp, ProvenanceKind};
use crate::symbol::Symbol;
use crate::tensor::{Tape, Tensor, Var};

type Op = Box<dyn Fn(&Tape, &[Var]) -> Result<Var>>;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape")
}

/// Values in `[-hi, -lo] ∪ [lo, hi]`, away from the kink at zero.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.gen_range(lo..hi);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Compares tape gradients of `sum(op(inputs) * w)` for a fixed random `w`
/// against central differences, over every input.
fn compare(inputs: &[Tensor], op: &dyn Fn(&Tape, &[Var]) -> Result<Var>, rng: &mut ChaCha8Rng) -> Result<f64> {
    let tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = op(&tape, &leaves)?;
    let w = uniform(rng, &out.shape(), -1.0, 1.0);
    let loss = out.mul(&tape.constant(w.clone()))?.sum_all();
    let grads = tape.backward(&loss)?;
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let numeric = central_difference(x, FD_STEP, |probe| {
            let t = Tape::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, v)| t.leaf(if j == i { probe.clone() } else { v.clone() }))
                .collect();
            let o = op(&t, &vars).expect("op succeeded at the base point");
            o.value().data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        });
        worst = worst.max(max_relative_error(&grads.wrt(&leaves[i]), &numeric));
    }
    Ok(worst)
}

struct Case {
    name: &'static str,
    inputs: Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor>>,
    op: Op,
}

fn case(
    name: &'static str,
    inputs: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor> + 'static,
    op: impl Fn(&Tape, &[Var]) -> Result<Var> + 'static,
) -> Case {
    Case {
        name,
        inputs: Box::new(inputs),
        op: Box::new(op),
    }
}

fn cases() -> Vec<Case> {
    let pair = |lo: f64, hi: f64| move |r: &mut ChaCha8Rng| vec![uniform(r, &[3, 4], lo, hi), uniform(r, &[3, 4], lo, hi)];
    let one = |lo: f64, hi: f64| move |r: &mut ChaCha8Rng| vec![uniform(r, &[3, 4], lo, hi)];
    vec![
        case("add", pair(-1.0, 1.0), |_, v| v[0].add(&v[1])),
        case("sub", pair(-1.0, 1.0), |_, v| v[0].sub(&v[1])),
        case("mul", pair(-1.0, 1.0), |_, v| v[0].mul(&v[1])),
        case("div", pair(0.5, 1.5), |_, v| v[0].div(&v[1])),
        case("min", pair(-1.0, 1.0), |_, v| v[0].min(&v[1])),
        case(
            "broadcast-mul",
            |r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4], -1.0, 1.0)],
            |_, v| v[0].mul(&v[1]),
        ),
        case("scale", one(-1.0, 1.0), |_, v| Ok(v[0].scale(-2.5))),
        case("shift", one(-1.0, 1.0), |_, v| Ok(v[0].add_scalar(0.3))),
        case("clamp", one(0.05, 0.95), |_, v| v[0].clamp(0.0, 1.0)),
        case("sum", one(-1.0, 1.0), |_, v| v[0].sum(1)),
        case("prod", one(0.2, 1.2), |_, v| v[0].prod(0)),
        case("max", one(-1.0, 1.0), |_, v| v[0].max(1)),
        case("sum-all", one(-1.0, 1.0), |_, v| Ok(v[0].sum_all())),
        case("mean-all", one(-1.0, 1.0), |_, v| Ok(v[0].mean_all())),
        case("reshape", one(-1.0, 1.0), |_, v| v[0].reshape(&[2, 6])),
        case("index-select", one(-1.0, 1.0), |_, v| v[0].index_select(1, &[3, 0, 3])),
        case("segment-sum", one(-1.0, 1.0), |_, v| v[0].segment_sum(1, &[1, 0, 1, 2], 3)),
        case("concat", pair(-1.0, 1.0), |t, v| t.concat(&[&v[0], &v[1]], 0)),
        case(
            "affine",
            |r| {
                vec![
                    uniform(r, &[3, 4], -1.0, 1.0),
                    uniform(r, &[4, 2], -1.0, 1.0),
                    uniform(r, &[2], -1.0, 1.0),
                ]
            },
            |_, v| v[0].affine(&v[1], &v[2]),
        ),
        case("softmax", one(-2.0, 2.0), |_, v| v[0].softmax(1)),
        case("relu", |r| vec![off_zero(r, &[3, 4], 0.05, 1.0)], |_, v| Ok(v[0].relu())),
        case("log", one(0.2, 2.0), |_, v| v[0].log()),
        case("proof-probability", one(0.05, 0.3), |_, v| {
            let tags = Arc::new(dtkp::DtkpTags::new(
                3,
                3,
                2,
                (0..3)
                    .flat_map(|_| {
                        [
                            vec![dtkp::Proof::from_columns([0, 1]), dtkp::Proof::from_columns([2, 3])],
                            vec![dtkp::Proof::from_columns([1]), dtkp::Proof::from_columns([0, 2, 3])],
                        ]
                    })
                    .collect(),
                vec![0, 1, 2],
            )?);
            dtkp::prob(&tags, &v[0])
        }),
        case("damp-apply", one(0.05, 0.3), |t, v| {
            let ctx = ProgramContext::new(t, ProvenanceKind::Damp);
            let syms: Vec<Symbol> = (0..4).map(Symbol::Int).collect();
            let a = ctx.distribution(&v[0], syms.clone())?;
            let b = ctx.distribution(&v[0].scale(0.5), syms)?;
            apply(&[&a, &b], |s| Ok(Some(Symbol::Int((s[0].as_int().unwrap() + s[1].as_int().unwrap()) % 3))))?
                .get_probs()
        }),
        case("dtkp-apply", one(0.05, 0.3), |t, v| {
            let ctx = ProgramContext::new(t, ProvenanceKind::dtkp(2)?);
            let syms: Vec<Symbol> = (0..4).map(Symbol::Int).collect();
            let a = ctx.distribution(&v[0], syms.clone())?;
            let b = ctx.distribution(&v[0].scale(0.5), syms)?;
            apply(&[&a, &b], |s| Ok(Some(Symbol::Int((s[0].as_int().unwrap() + s[1].as_int().unwrap()) % 3))))?
                .get_probs()
        }),
    ]
}

/// Every tensor primitive at `points` random points.
pub fn primitive_suite(points: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cases()
        .into_iter()
        .map(|c| {
            let mut worst: f64 = 0.0;
            for _ in 0..points {
                let inputs = (c.inputs)(&mut rng);
                worst = worst.max(compare(&inputs, &*c.op, &mut rng)?);
            }
            Ok(CheckOutcome {
                name: c.name.to_string(),
                points,
                worst_rel_error: worst,
                redrawn: 0,
            })
        })
        .collect()
}

/// Clamp passes a unit gradient at saturated and interior points alike.
pub fn clamp_saturation_exact() -> Result<bool> {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![-3.0, -1e-9, 0.0, 0.5, 1.0, 1.0 + 1e-9, 7.0]));
    let g = tape.backward(&x.clamp(0.0, 1.0)?.sum_all())?.wrt(&x);
    Ok(g.data().iter().all(|&v| v == 1.0))
}

const PIPELINE_DIM: usize = 5;
const PIPELINE_HIDDEN: usize = 6;
const PIPELINE_BATCH: usize = 4;
const MAX_DRAWS_PER_POINT: u64 = 5;
const JITTER: f64 = 0.1;

/// Small samples for `kind` with `PIPELINE_DIM` features.
fn pipeline_samples(kind: TaskKind, seed: u64) -> Result<Samples> {
    Ok(match kind {
        TaskKind::Sum { n } | TaskKind::Product { n } => {
            let images = gen_clusters(10, n * PIPELINE_BATCH, PIPELINE_DIM, 2.0, seed)?;
            let count = images.len();
            Samples::Digits {
                images: Arc::new(images),
                tuples: digit_tuples(count, n).into_iter().take(PIPELINE_BATCH).collect(),
            }
        }
        TaskKind::Toy => {
            let images = gen_clusters(10, 2, PIPELINE_DIM, 2.0, seed)?;
            let tuples = same_class_pairs(&images.labels, PIPELINE_BATCH, seed);
            Samples::Digits {
                images: Arc::new(images),
                tuples,
            }
        }
        TaskKind::Hwf { max_len } => {
            let all = gen_hwf_dataset(max_len, 64, PIPELINE_DIM, 2.0, seed)?;
            let full: Vec<_> = all.into_iter().filter(|s| s.len() == max_len).take(PIPELINE_BATCH).collect();
            Samples::Hwf(full)
        }
        TaskKind::Path { nodes } => Samples::Path(gen_path_dataset(nodes, 0.3, PIPELINE_BATCH, PIPELINE_DIM, 0.5, seed)?),
    })
}

fn pipeline_loss(kind: TaskKind, model: &Mlp, samples: &Samples, settings: ForwardSettings) -> Result<(Tape, Vec<Var>, Var)> {
    let tape = Tape::new();
    let bound = model.bind(&tape);
    let batch: Vec<usize> = (0..samples.len()).collect();
    let loss = kind.forward(&tape, &bound, samples, &batch, settings)?.loss;
    Ok((tape, bound.params().to_vec(), loss))
}

/// Full perception, program and loss gradient against central differences
/// on every perception parameter, at `points` random parameter points.
pub fn pipeline_check(kind: TaskKind, provenance: ProvenanceKind, points: usize, seed: u64) -> Result<CheckOutcome> {
    let samples = pipeline_samples(kind, seed)?;
    let settings = ForwardSettings {
        provenance,
        sampling: None,
    };
    let sizes = kind.model_sizes(PIPELINE_DIM, PIPELINE_HIDDEN);
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    let mut draw = 0u64;
    while accepted < points {
        if draw >= (points as u64) * MAX_DRAWS_PER_POINT {
            return Err(Error::InvalidArgument(format!(
                "{kind}: only {accepted} of {points} random points were away from kinks"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000) + draw);
        let mut model = Mlp::new(&sizes, &mut rng)?;
        // Zero biases make dead units tie every class exactly.
        for p in model.params_mut() {
            for v in p.data_mut() {
                *v += rng.gen_range(-JITTER..JITTER);
            }
        }
        draw += 1;
        let (tape, params, loss) = pipeline_loss(kind, &model, &samples, settings)?;
        let grads = tape.backward(&loss)?;
        let mut point_worst: f64 = 0.0;
        let mut kinked = false;
        for (j, p) in params.iter().enumerate() {
            let (numeric, k) = central_difference_checked(&model.params()[j], FD_STEP, |probe| {
                let mut m = model.clone();
                m.params_mut()[j] = probe.clone();
                let (_, _, l) = pipeline_loss(kind, &m, &samples, settings).expect("pipeline ran at the base point");
                l.value().item()
            });
            kinked |= k;
            point_worst = point_worst.max(max_relative_error(&grads.wrt(p), &numeric));
        }
        if !kinked {
            worst = worst.max(point_worst);
            accepted += 1;
        }
    }
    Ok(CheckOutcome {
        name: format!("{kind} pipeline ({provenance})"),
        points,
        worst_rel_error: worst,
        redrawn: draw as usize - points,
    })
}

