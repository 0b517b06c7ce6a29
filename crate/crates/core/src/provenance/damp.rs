//! Add-mult probabilities: `⊗` is the product, `⊕` the sum clamped to [0, 1].

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

pub fn zero(tape: &Tape, shape: &[usize]) -> Var {
    tape.constant(Tensor::zeros(shape))
}

pub fn one(tape: &Tape, shape: &[usize]) -> Var {
    tape.constant(Tensor::ones(shape))
}

pub fn conj(a: &Var, b: &Var) -> Result<Var> {
    a.mul(b)
}

pub fn disj(a: &Var, b: &Var) -> Result<Var> {
    a.add(b)?.clamp(0.0, 1.0)
}
