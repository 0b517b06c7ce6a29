use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Fully connected network with rectified hidden layers and a softmax
/// output. Parameters live outside any tape and are bound to one per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<Tensor>,
}

impl Mlp {
    /// He-initialized weights and zero biases for layer extents `sizes`,
    /// e.g. `[784, 128, 10]`.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer extents {sizes:?}")));
        }
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            let std = (2.0 / w[0] as f64).sqrt();
            let data = (0..w[0] * w[1]).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
            params.push(Tensor::new(vec![w[0], w[1]], data)?);
            params.push(Tensor::zeros(&[w[1]]));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    /// Weights and biases, alternating, first layer first.
    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn bind(&self, tape: &Tape) -> BoundMlp {
        BoundMlp {
            params: self.params.iter().map(|p| tape.leaf(p.clone())).collect(),
        }
    }

    /// Class probabilities for the rows of `x`, computed off any shared tape.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let out = self.bind(&tape).forward(&tape.constant(x.clone()))?;
        Ok((*out.value()).clone())
    }
}

/// An [`Mlp`] whose parameters are leaves of one tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    params: Vec<Var>,
}

impl BoundMlp {
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    /// `(b, inputs)` to `(b, outputs)` row-stochastic probabilities.
    pub fn forward(&self, x: &Var) -> Result<Var> {
        let layers = self.params.len() / 2;
        let mut h = x.clone();
        for (i, wb) in self.params.chunks(2).enumerate() {
            h = h.affine(&wb[0], &wb[1])?;
            if i + 1 < layers {
                h = h.relu();
            }
        }
        h.softmax(1)
    }
}
