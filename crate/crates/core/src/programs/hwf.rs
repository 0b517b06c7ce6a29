use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub};

use crate::distribution::{apply, Distribution, ProgramContext, UdfResult};
use crate::error::{Error, Result};
use super::{thin, Sampling};
use crate::symbol::Symbol;
use crate::tensor::Var;

pub const OPERATORS: [&str; 4] = ["+", "-", "*", "/"];

/// The fourteen token classes: digits `"0"`..`"9"` then the operators.
pub fn hwf_tokens() -> Vec<Symbol> {
    (0..10)
        .map(|d| Symbol::str(&d.to_string()))
        .chain(OPERATORS.iter().map(|o| Symbol::str(o)))
        .collect()
}

pub fn is_operator(s: &Symbol) -> bool {
    s.as_str().is_some_and(|t| OPERATORS.contains(&t))
}

fn digit_value(s: &str) -> Option<i64> {
    match s.as_bytes() {
        [c @ b'0'..=b'9'] => Some((c - b'0') as i64),
        _ => None,
    }
}

/// Builds the per-position distributions for one formula length. `probs`
/// holds one `(batch, 14)` matrix per position; positions at or past
/// `length` become certain empty-string padding. Even positions keep only
/// digits and odd positions only operators.
pub fn token_distributions(ctx: &ProgramContext, probs: &[Var], length: usize) -> Result<Vec<Distribution>> {
    let batch = probs
        .first()
        .map(|p| p.shape()[0])
        .ok_or_else(|| Error::InvalidArgument("formula needs at least one position".into()))?;
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i >= length {
                return ctx.certain(Symbol::str(""), batch);
            }
            let d = ctx.distribution(p, hwf_tokens())?;
            let want_operator = i % 2 == 1;
            d.filter(|s| Ok(is_operator(s) == want_operator))
        })
        .collect()
}

fn apply_op(a: Rational64, op: &str, b: Rational64) -> Option<Rational64> {
    match op {
        "+" => a.checked_add(&b),
        "-" => a.checked_sub(&b),
        "*" => a.checked_mul(&b),
        "/" if b != Rational64::from_integer(0) => a.checked_div(&b),
        _ => None,
    }
}

fn as_number(s: &Symbol) -> Option<Rational64> {
    match s {
        Symbol::Rational(r) => Some(*r),
        _ => None,
    }
}

/// Appends `token` to a partial formula, reducing a trailing `a*b` or
/// `a/b` to its value as soon as it is complete. The formula is a tuple of
/// rationals and operator strings; a bare first token starts one. The
/// empty-string padding token leaves the formula unchanged. Undefined
/// arithmetic yields `None`.
pub fn concat_symbol(formula: &Symbol, token: &Symbol) -> UdfResult {
    let tok = token.as_str().ok_or_else(|| format!("token {token} is not a string"))?;
    if tok.is_empty() {
        return Ok(Some(formula.clone()));
    }
    let mut items: Vec<Symbol> = match formula {
        Symbol::Tuple(t) => t.to_vec(),
        Symbol::Str(s) => match digit_value(s) {
            Some(v) => vec![Symbol::Rational(Rational64::from_integer(v))],
            None => vec![formula.clone()],
        },
        other => return Err(format!("malformed formula {other}")),
    };
    match digit_value(tok) {
        Some(v) => items.push(Symbol::Rational(Rational64::from_integer(v))),
        None => items.push(token.clone()),
    }
    let n = items.len();
    if n >= 3 && n % 2 == 1 {
        if let Some(op @ ("*" | "/")) = items[n - 2].as_str() {
            let (Some(a), Some(b)) = (as_number(&items[n - 3]), as_number(&items[n - 1])) else {
                return Ok(None);
            };
            let Some(v) = apply_op(a, op, b) else {
                return Ok(None);
            };
            items.truncate(n - 3);
            items.push(Symbol::Rational(v));
        }
    }
    Ok(Some(Symbol::tuple(items)))
}

/// Left-to-right evaluation of a reduced formula. `None` when malformed or
/// undefined.
pub fn eval_chain(formula: &Symbol) -> Option<Rational64> {
    let items: &[Symbol] = match formula {
        Symbol::Tuple(t) => t,
        Symbol::Str(s) => return digit_value(s).map(Rational64::from_integer),
        _ => return None,
    };
    if items.len() % 2 == 0 {
        return None;
    }
    let mut acc = as_number(&items[0])?;
    for pair in items[1..].chunks(2) {
        acc = apply_op(acc, pair[0].as_str()?, as_number(&pair[1])?)?;
    }
    Some(acc)
}

/// Folds the token distributions into formulas and evaluates them. Result
/// symbols are rationals.
pub fn hwf(tokens: &[Distribution]) -> Result<Distribution> {
    hwf_sampled(tokens, None)
}

/// [`hwf`] with the partial formulas thinned after every step.
pub fn hwf_sampled(tokens: &[Distribution], sampling: Sampling) -> Result<Distribution> {
    let (first, rest) = tokens
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("formula needs at least one position".into()))?;
    let mut acc = first.clone();
    for d in rest {
        acc = thin(apply(&[&acc, d], |a| concat_symbol(a[0], a[1]))?, sampling)?;
    }
    apply(&[&acc], |a| Ok(eval_chain(a[0]).map(Symbol::Rational)))
}

/// Precedence-aware evaluation of a token sequence such as
/// `["3", "+", "4", "*", "2"]`, independent of [`concat_symbol`].
pub fn evaluate_tokens(tokens: &[&str]) -> Option<Rational64> {
    let mut pos = 0;
    let value = expr(tokens, &mut pos)?;
    (pos == tokens.len()).then_some(value)
}

fn expr(t: &[&str], pos: &mut usize) -> Option<Rational64> {
    let mut acc = term(t, pos)?;
    while let Some(&op @ ("+" | "-")) = t.get(*pos) {
        *pos += 1;
        acc = apply_op(acc, op, term(t, pos)?)?;
    }
    Some(acc)
}

fn term(t: &[&str], pos: &mut usize) -> Option<Rational64> {
    let mut acc = atom(t, pos)?;
    while let Some(&op @ ("*" | "/")) = t.get(*pos) {
        *pos += 1;
        acc = apply_op(acc, op, atom(t, pos)?)?;
    }
    Some(acc)
}

fn atom(t: &[&str], pos: &mut usize) -> Option<Rational64> {
    let v = digit_value(t.get(*pos)?)?;
    *pos += 1;
    Some(Rational64::from_integer(v))
}
