//! Benchmark programs written against the distribution primitives.

mod hwf;
mod path;

pub use hwf::{concat_symbol, eval_chain, evaluate_tokens, hwf, hwf_sampled, hwf_tokens, is_operator, token_distributions, OPERATORS};
pub use path::{path_closure, path_closure_counted};

use crate::distribution::{apply, Distribution, SampleStrategy, UdfResult};
use crate::error::{Error, Result};
use crate::symbol::Symbol;

/// The ten digit symbols `0..=9`.
pub fn digit_symbols() -> Vec<Symbol> {
    (0..10).map(Symbol::Int).collect()
}

/// Optional cap on the symbols kept after each intermediate step.
pub type Sampling = Option<(usize, SampleStrategy)>;

pub(crate) fn thin(d: Distribution, sampling: Sampling) -> Result<Distribution> {
    match sampling {
        Some((m, strategy)) => d.sample_symbols(m, strategy),
        None => Ok(d),
    }
}

fn fold_binary(digits: &[Distribution], op: fn(i64, i64) -> Option<i64>, sampling: Sampling) -> Result<Distribution> {
    let (first, rest) = digits
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("need at least one digit distribution".into()))?;
    let f = |a: &[&Symbol]| -> UdfResult {
        match (a[0].as_int(), a[1].as_int()) {
            (Some(x), Some(y)) => Ok(op(x, y).map(Symbol::Int)),
            _ => Err("expected integer symbols".into()),
        }
    };
    let mut acc = first.clone();
    for d in rest {
        acc = thin(apply(&[&acc, d], f)?, sampling)?;
    }
    Ok(acc)
}

/// Left fold of pairwise addition.
pub fn sum_n(digits: &[Distribution]) -> Result<Distribution> {
    fold_binary(digits, i64::checked_add, None)
}

pub fn sum_n_sampled(digits: &[Distribution], sampling: Sampling) -> Result<Distribution> {
    fold_binary(digits, i64::checked_add, sampling)
}

/// Left fold of pairwise multiplication.
pub fn product_n(digits: &[Distribution]) -> Result<Distribution> {
    fold_binary(digits, i64::checked_mul, None)
}

pub fn product_n_sampled(digits: &[Distribution], sampling: Sampling) -> Result<Distribution> {
    fold_binary(digits, i64::checked_mul, sampling)
}

fn eq_symbol(a: &[&Symbol]) -> UdfResult {
    Ok(Some(Symbol::Bool(a[0] == a[1])))
}

/// `a == b` over two distributions.
pub fn equality(a: &Distribution, b: &Distribution) -> Result<Distribution> {
    apply(&[a, b], eq_symbol)
}

/// `a == b` with both arguments drawn from the same distribution.
pub fn equality_toy(d: &Distribution) -> Result<Distribution> {
    apply(&[d, d], eq_symbol)
}
