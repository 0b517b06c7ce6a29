use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

const ROW_EPS: f64 = 1e-8;
const FLOOR: f64 = 1e-12;

/// `max(x, FLOOR)`, passing no gradient where the floor is active.
fn floor(x: &Var) -> Result<Var> {
    let c = x.tape().constant(Tensor::full(&x.shape(), -FLOOR));
    Ok(x.scale(-1.0).min(&c)?.scale(-1.0))
}

/// Mean negative log-likelihood of row-normalized probabilities. `None`
/// marks a target the program could not produce; it scores as probability
/// zero.
pub fn loss_nll(probs: &Var, targets: &[Option<usize>]) -> Result<Var> {
    let shape = probs.shape();
    if shape.len() != 2 || shape[0] != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "loss_nll",
            lhs: shape,
            rhs: vec![targets.len()],
        });
    }
    let (b, n) = (shape[0], shape[1]);
    if let Some(&t) = targets.iter().flatten().find(|&&t| t >= n) {
        return Err(Error::IndexOutOfRange {
            op: "loss_nll",
            index: t,
            extent: n,
        });
    }
    let tape = probs.tape();
    let rowsum = probs.sum(1)?.reshape(&[b, 1])?.add_scalar(ROW_EPS);
    let normalized = probs.div(&rowsum)?;
    let padded = tape.concat(&[&normalized, &tape.constant(Tensor::zeros(&[b, 1]))], 1)?;
    let flat: Vec<usize> = targets
        .iter()
        .enumerate()
        .map(|(r, t)| r * (n + 1) + t.unwrap_or(n))
        .collect();
    let picked = padded.reshape(&[b * (n + 1)])?.index_select(0, &flat)?;
    Ok(floor(&picked)?.log()?.mean_all().scale(-1.0))
}

/// Mean binary cross entropy of `probs` (any shape with `labels.len()`
/// elements) against labels in {0, 1}.
pub fn loss_bce(probs: &Var, labels: &[f64]) -> Result<Var> {
    let n: usize = probs.shape().iter().product();
    if n != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "loss_bce",
            lhs: probs.shape(),
            rhs: vec![labels.len()],
        });
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain {
            op: "loss_bce",
            detail: format!("label {y} is not 0 or 1"),
        });
    }
    let tape = probs.tape();
    let p = probs.reshape(&[n])?;
    let y = tape.constant(Tensor::vector(labels.to_vec()));
    let not_y = tape.constant(Tensor::vector(labels.iter().map(|v| 1.0 - v).collect()));
    let pos = y.mul(&floor(&p)?.log()?)?;
    let neg = not_y.mul(&floor(&p.scale(-1.0).add_scalar(1.0))?.log()?)?;
    Ok(pos.add(&neg)?.mean_all().scale(-1.0))
}
