use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::provenance::ProvenanceKind;
use crate::tensor::{Tape, Tensor};

fn ints(n: i64) -> Vec<Symbol> {
    (0..n).map(Symbol::Int).collect()
}

fn dist(ctx: &ProgramContext, rows: &[Vec<f64>], symbols: Vec<Symbol>) -> Distribution {
    let probs = ctx.tape().leaf(Tensor::from_rows(rows).unwrap());
    ctx.distribution(&probs, symbols).unwrap()
}

fn sum2(a: &[&Symbol]) -> UdfResult {
    Ok(Some(Symbol::Int(a[0].as_int().unwrap() + a[1].as_int().unwrap())))
}

/// Row 0 probabilities keyed by symbol.
fn table(d: &Distribution) -> BTreeMap<Symbol, f64> {
    let p = d.get_probs().unwrap().value();
    d.symbols()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), p.row(0)[i]))
        .collect()
}

const D1: [f64; 10] = [0.00, 0.90, 0.02, 0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01];
const D2: [f64; 10] = [0.78, 0.09, 0.02, 0.02, 0.02, 0.02, 0.02, 0.01, 0.01, 0.01];

/// Sum over contributing combinations of the product of input
/// probabilities, keyed by result symbol.
fn enumerate(inputs: &[(&[Symbol], &[f64])], f: impl Fn(&[&Symbol]) -> Option<Symbol>) -> BTreeMap<Symbol, f64> {
    let mut out = BTreeMap::new();
    let mut idx = vec![0usize; inputs.len()];
    'outer: loop {
        let args: Vec<&Symbol> = idx.iter().zip(inputs).map(|(&i, (s, _))| &s[i]).collect();
        if let Some(r) = f(&args) {
            let w: f64 = idx.iter().zip(inputs).map(|(&i, (_, p))| p[i]).product();
            *out.entry(r).or_insert(0.0) += w;
        }
        for ax in (0..inputs.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < inputs[ax].0.len() {
                continue 'outer;
            }
            idx[ax] = 0;
        }
        return out;
    }
}

#[test]
fn make_distribution_cases() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let d1 = dist(&ctx, &[D1.to_vec()], ints(10));
    assert_eq!(d1.len(), 10);
    assert_eq!(table(&Distribution::clone(&d1))[&Symbol::Int(1)], 0.90);

    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let pad = ctx.certain(Symbol::str(""), 3).unwrap();
    assert_eq!(pad.get_probs().unwrap().value().data(), &[1.0, 1.0, 1.0]);

    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let empty = tape.leaf(Tensor::zeros(&[1, 0]));
    assert!(matches!(ctx.distribution(&empty, vec![]), Err(Error::EmptySymbols)));
    let two = tape.leaf(Tensor::zeros(&[1, 2]));
    assert!(matches!(
        ctx.distribution(&two, vec![Symbol::Int(1), Symbol::Int(1)]),
        Err(Error::DuplicateSymbol(_))
    ));
}

#[test]
fn registry_freezes_at_first_combining_operation() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::dtkp(2).unwrap());
    let a = dist(&ctx, &[vec![0.5, 0.5]], ints(2));
    let evens = a.filter(|s| Ok(s.as_int().unwrap() % 2 == 0)).unwrap();
    assert!(!ctx.registry().is_frozen());
    let b = dist(&ctx, &[vec![0.5, 0.5]], ints(2));
    assert_eq!(ctx.registry().len(), 4);
    apply(&[&evens, &b], sum2).unwrap();
    assert!(ctx.registry().is_frozen());
    let p = tape.leaf(Tensor::from_rows(&[[1.0]]).unwrap());
    assert!(matches!(ctx.distribution(&p, ints(1)), Err(Error::RegistryFrozen)));
}

#[test]
fn worked_apply_filter_union() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let d1 = dist(&ctx, &[D1.to_vec()], ints(10));
    let d2 = dist(&ctx, &[D2.to_vec()], ints(10));
    let sum = apply(&[&d1, &d2], sum2).unwrap();
    assert_eq!(sum.symbols(), ints(19).as_slice());
    assert_abs_diff_eq!(table(&sum)[&Symbol::Int(1)], 0.702, epsilon = 1e-9);

    let even = d1.filter(|s| Ok(s.as_int().unwrap() % 2 == 0)).unwrap();
    let t = table(&even);
    assert_eq!(even.symbols(), &[0, 2, 4, 6, 8].map(Symbol::Int));
    assert_eq!(t[&Symbol::Int(0)], 0.00);
    assert_eq!(t[&Symbol::Int(2)], 0.02);
    assert_eq!(t[&Symbol::Int(8)], 0.01);

    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let u1 = dist(&ctx, &[vec![0.01, 0.24]], vec![Symbol::Int(0), Symbol::Int(1)]);
    let u2 = dist(&ctx, &[vec![0.63, 0.37]], vec![Symbol::Int(0), Symbol::Int(4)]);
    let u = u1.union(&u2).unwrap();
    assert_eq!(u.symbols(), &[0, 1, 4].map(Symbol::Int));
    let t = table(&u);
    assert_abs_diff_eq!(t[&Symbol::Int(0)], 0.64, epsilon = 1e-12);
    assert_eq!(t[&Symbol::Int(1)], 0.24);
    assert_eq!(t[&Symbol::Int(4)], 0.37);
}

#[test]
fn uniform_three_symbol_sum_matches_enumeration() {
    let u = vec![1.0 / 3.0; 3];
    let oracle = enumerate(&[(&ints(3), &u), (&ints(3), &u)], |a| {
        Some(Symbol::Int(a[0].as_int()? + a[1].as_int()?))
    });
    let frozen = [1.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0, 2.0 / 9.0, 1.0 / 9.0];
    for (i, v) in frozen.iter().enumerate() {
        assert_abs_diff_eq!(oracle[&Symbol::Int(i as i64)], v, epsilon = 1e-15);
    }
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let a = dist(&ctx, &[u.clone()], ints(3));
    let b = dist(&ctx, &[u.clone()], ints(3));
    let s = apply(&[&a, &b], sum2).unwrap();
    assert_eq!(s.symbols(), ints(5).as_slice());
    for (sym, p) in table(&s) {
        assert_abs_diff_eq!(p, oracle[&sym], epsilon = 1e-12);
    }
}

#[test]
fn identity_apply_and_relabel_preserve_tags() {
    for prov in [ProvenanceKind::Damp, ProvenanceKind::dtkp(2).unwrap()] {
        let tape = Tape::new();
        let ctx = ProgramContext::new(&tape, prov);
        let d = dist(&ctx, &[vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]], ints(3));
        let same = apply(&[&d], |a| Ok(Some(a[0].clone()))).unwrap();
        assert_eq!(same.symbols(), d.symbols());
        assert_eq!(*same.get_probs().unwrap().value(), *d.get_probs().unwrap().value());
        let shifted = apply(&[&d], |a| Ok(Some(Symbol::Int(a[0].as_int().unwrap() + 10)))).unwrap();
        assert_eq!(*shifted.get_probs().unwrap().value(), *d.get_probs().unwrap().value());
    }
}

#[test]
fn apply_if_cases() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let edges = dist(
        &ctx,
        &[vec![0.9, 0.8]],
        vec![Symbol::pair(1, 2), Symbol::pair(2, 3)],
    );
    let compose = |a: &[&Symbol]| {
        let (x, _) = a[0].as_pair().unwrap();
        let (_, z) = a[1].as_pair().unwrap();
        Ok(Some(Symbol::pair(x, z)))
    };
    let joins = |a: &[&Symbol]| a[0].as_pair().unwrap().1 == a[1].as_pair().unwrap().0;
    let step = apply_if(&[&edges, &edges], compose, joins).unwrap();
    assert_eq!(step.symbols(), &[Symbol::pair(1, 3)]);
    assert_abs_diff_eq!(table(&step)[&Symbol::pair(1, 3)], 0.72, epsilon = 1e-12);

    let none = apply_if(&[&edges, &edges], compose, |_| false).unwrap();
    assert!(none.is_empty());
    assert_eq!(none.get_probs().unwrap().shape(), vec![1, 0]);

    let all = apply_if(&[&edges, &edges], compose, |_| true).unwrap();
    let plain = apply(&[&edges, &edges], compose).unwrap();
    assert_eq!(all.symbols(), plain.symbols());
    assert_eq!(*all.get_probs().unwrap().value(), *plain.get_probs().unwrap().value());
}

#[test]
fn undefined_results_are_dropped_and_errors_carry_symbols() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let a = dist(&ctx, &[vec![0.5, 0.5]], ints(2));
    let b = dist(&ctx, &[vec![0.5, 0.5]], ints(2));
    let div = apply(&[&a, &b], |x| {
        let (p, q) = (x[0].as_int().unwrap(), x[1].as_int().unwrap());
        Ok((q != 0).then(|| Symbol::Int(p / q)))
    })
    .unwrap();
    assert_eq!(div.symbols(), &[Symbol::Int(0), Symbol::Int(1)]);
    let err = apply(&[&a, &b], |x| {
        if x[1].as_int() == Some(1) {
            Err("boom".to_string())
        } else {
            Ok(Some(Symbol::Int(0)))
        }
    })
    .unwrap_err();
    match err {
        Error::Udf { symbols, message } => {
            assert_eq!(symbols, vec![Symbol::Int(0), Symbol::Int(1)]);
            assert_eq!(message, "boom");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn context_mismatch_is_rejected() {
    let tape = Tape::new();
    let c1 = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let c2 = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let a = dist(&c1, &[vec![1.0]], ints(1));
    let b = dist(&c2, &[vec![1.0]], ints(1));
    assert!(matches!(apply(&[&a, &b], sum2), Err(Error::ContextMismatch)));
    assert!(matches!(a.union(&b), Err(Error::ContextMismatch)));
    assert!(matches!(Distribution::stack(&[&a, &b]), Err(Error::ContextMismatch)));
}

#[test]
fn filter_trivial_predicates() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let d = dist(&ctx, &[D1.to_vec()], ints(10));
    let all = d.filter(|_| Ok(true)).unwrap();
    assert_eq!(all.symbols(), d.symbols());
    assert_eq!(*all.get_probs().unwrap().value(), *d.get_probs().unwrap().value());
    assert!(d.filter(|_| Ok(false)).unwrap().is_empty());
    assert!(matches!(d.filter(|_| Err("bad".into())), Err(Error::Udf { .. })));
}

#[test]
fn union_with_empty_and_self() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let d = dist(&ctx, &[vec![0.3, 0.7]], ints(2));
    let u = d.union(&ctx.empty(1)).unwrap();
    assert_eq!(u.symbols(), d.symbols());
    assert_eq!(*u.get_probs().unwrap().value(), *d.get_probs().unwrap().value());

    let ctx = ProgramContext::new(&tape, ProvenanceKind::dtkp(3).unwrap());
    let d = dist(&ctx, &[vec![0.3, 0.7]], ints(2));
    let dd = d.union(&d).unwrap();
    let (Tags::Dtkp(a), Tags::Dtkp(b)) = (d.tags(), dd.tags()) else { panic!() };
    assert_eq!(**a, **b);
}

#[test]
fn equality_contrast_between_provenances() {
    let p = [0.5, 0.3, 0.2];
    let eq = |a: &[&Symbol]| Ok(Some(Symbol::Bool(a[0] == a[1])));
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::dtkp(3).unwrap());
    let d = dist(&ctx, &[p.to_vec()], ints(3));
    let t = table(&apply(&[&d, &d], eq).unwrap());
    assert_abs_diff_eq!(t[&Symbol::Bool(true)], 1.0, epsilon = 1e-12);

    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let d = dist(&ctx, &[p.to_vec()], ints(3));
    let t = table(&apply(&[&d, &d], eq).unwrap());
    assert_abs_diff_eq!(t[&Symbol::Bool(true)], 0.25 + 0.09 + 0.04, epsilon = 1e-12);
}

#[test]
fn uniform_digit_sum_is_normalized() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let a = dist(&ctx, &[vec![0.1; 10]], ints(10));
    let b = dist(&ctx, &[vec![0.1; 10]], ints(10));
    let total: f64 = apply(&[&a, &b], sum2).unwrap().get_probs().unwrap().value().sum_all();
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
}

#[test]
fn sample_symbols_cases() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let d = dist(&ctx, &[D1.to_vec()], ints(10));
    assert_eq!(d.sample_symbols(10, SampleStrategy::TopMean).unwrap().symbols(), d.symbols());
    assert_eq!(d.sample_symbols(50, SampleStrategy::TopMean).unwrap().len(), 10);
    assert_eq!(
        d.sample_symbols(1, SampleStrategy::TopMean).unwrap().symbols(),
        &[Symbol::Int(1)]
    );
    // 2 and 3 tie at 0.02; the smaller encoding wins
    assert_eq!(
        d.sample_symbols(2, SampleStrategy::TopMean).unwrap().symbols(),
        &[Symbol::Int(1), Symbol::Int(2)]
    );
    let a = d.sample_symbols(4, SampleStrategy::Seeded(7)).unwrap();
    let b = d.sample_symbols(4, SampleStrategy::Seeded(7)).unwrap();
    assert_eq!(a.symbols(), b.symbols());
    assert_eq!(a.len(), 4);
    assert!(matches!(d.sample_symbols(0, SampleStrategy::TopMean), Err(Error::InvalidArgument(_))));
}

#[test]
fn stack_cases() {
    for prov in [ProvenanceKind::Damp, ProvenanceKind::dtkp(2).unwrap()] {
        let tape = Tape::new();
        let ctx = ProgramContext::new(&tape, prov);
        let a = dist(&ctx, &[vec![0.4, 0.6]], ints(2));
        let b = dist(&ctx, &[vec![0.4, 0.6]], ints(2));
        let s = Distribution::stack(&[&a, &b]).unwrap();
        assert_eq!(s.batch(), 2);
        let p = s.get_probs().unwrap().value();
        assert_eq!(p.row(0), p.row(1));

        let ctx = ProgramContext::new(&tape, prov);
        let x = dist(&ctx, &[vec![0.7]], vec![Symbol::str("a")]);
        let y = dist(&ctx, &[vec![0.9]], vec![Symbol::str("b")]);
        let s = Distribution::stack(&[&x, &y]).unwrap();
        assert_eq!(s.symbols(), &[Symbol::str("a"), Symbol::str("b")]);
        let p = s.get_probs().unwrap().value();
        assert_eq!(p.data(), &[0.7, 0.0, 0.0, 0.9]);
    }
}

#[test]
fn stacked_rows_equal_per_sample_probabilities() {
    for prov in [ProvenanceKind::Damp, ProvenanceKind::dtkp(2).unwrap()] {
        let tape = Tape::new();
        let ctx = ProgramContext::new(&tape, prov);
        let rows = [[0.1, 0.6, 0.3], [0.5, 0.25, 0.25], [0.0, 0.2, 0.8]];
        let parts: Vec<Distribution> = rows
            .iter()
            .map(|r| {
                let a = dist(&ctx, &[r.to_vec()], ints(3));
                let b = dist(&ctx, &[vec![0.3, 0.7]], ints(2));
                (a, b)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(a, b)| apply(&[&a, &b], sum2).unwrap())
            .collect();
        let refs: Vec<&Distribution> = parts.iter().collect();
        let stacked = Distribution::stack(&refs).unwrap();
        let sp = stacked.get_probs().unwrap().value();
        for (i, part) in parts.iter().enumerate() {
            let pp = part.get_probs().unwrap().value();
            for (j, s) in part.symbols().iter().enumerate() {
                let col = stacked.index_of(s).unwrap();
                assert_abs_diff_eq!(sp.row(i)[col], pp.row(0)[j], epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn empty_inputs_propagate() {
    let tape = Tape::new();
    let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
    let d = dist(&ctx, &[vec![0.5, 0.5]], ints(2));
    let e = ctx.empty(1);
    assert!(apply(&[&d, &e], sum2).unwrap().is_empty());
}

fn small_dists() -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(
        proptest::collection::vec(0.01f64..1.0, 1..=6).prop_map(|w| {
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect::<Vec<f64>>()
        }),
        1..=3,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn damp_apply_matches_enumeration(ps in small_dists(), modulus in 2i64..7) {
        let syms: Vec<Vec<Symbol>> = ps.iter().map(|p| ints(p.len() as i64)).collect();
        let f = |a: &[&Symbol]| Symbol::Int(a.iter().map(|s| s.as_int().unwrap()).sum::<i64>() % modulus);
        let inputs: Vec<(&[Symbol], &[f64])> = syms.iter().zip(&ps).map(|(s, p)| (s.as_slice(), p.as_slice())).collect();
        let oracle = enumerate(&inputs, |a| Some(f(a)));
        let tape = Tape::new();
        let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
        let ds: Vec<Distribution> = ps.iter().zip(&syms).map(|(p, s)| dist(&ctx, &[p.clone()], s.clone())).collect();
        let refs: Vec<&Distribution> = ds.iter().collect();
        let out = apply(&refs, |a| Ok(Some(f(a)))).unwrap();
        let t = table(&out);
        prop_assert_eq!(t.len(), oracle.len());
        for (s, p) in oracle {
            prop_assert!((t[&s] - p).abs() <= 1e-9);
        }
    }

    #[test]
    fn filters_compose(p in proptest::collection::vec(0.0f64..1.0, 1..12), a in 2i64..5, b in 2i64..5) {
        let tape = Tape::new();
        let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
        let d = dist(&ctx, &[p.clone()], ints(p.len() as i64));
        let twice = d.filter(|s| Ok(s.as_int().unwrap() % a == 0)).unwrap()
            .filter(|s| Ok(s.as_int().unwrap() % b == 1)).unwrap();
        let once = d.filter(|s| Ok(s.as_int().unwrap() % a == 0 && s.as_int().unwrap() % b == 1)).unwrap();
        prop_assert_eq!(twice.symbols(), once.symbols());
        prop_assert_eq!(&*twice.get_probs().unwrap().value(), &*once.get_probs().unwrap().value());
    }

    #[test]
    fn damp_union_commutes_and_associates(
        x in proptest::collection::vec(0.0f64..0.5, 4),
        y in proptest::collection::vec(0.0f64..0.5, 4),
        z in proptest::collection::vec(0.0f64..0.5, 4),
    ) {
        let tape = Tape::new();
        let ctx = ProgramContext::new(&tape, ProvenanceKind::Damp);
        let a = dist(&ctx, &[x], vec![0, 1, 2, 3].into_iter().map(Symbol::Int).collect());
        let b = dist(&ctx, &[y], vec![2, 3, 4, 5].into_iter().map(Symbol::Int).collect());
        let c = dist(&ctx, &[z], vec![5, 0, 6, 2].into_iter().map(Symbol::Int).collect());
        let close = |l: &Distribution, r: &Distribution| {
            let (tl, tr) = (table(l), table(r));
            tl.len() == tr.len() && tl.iter().all(|(s, p)| (tr[s] - p).abs() <= 1e-12)
        };
        prop_assert!(close(&a.union(&b).unwrap(), &b.union(&a).unwrap()));
        prop_assert!(close(
            &a.union(&b).unwrap().union(&c).unwrap(),
            &a.union(&b.union(&c).unwrap()).unwrap()
        ));
    }
}
