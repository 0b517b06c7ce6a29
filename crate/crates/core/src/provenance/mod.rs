//! Provenance semirings over batched tags and the input-symbol registry
//! that defines the column axis of proof tags.

pub mod damp;
pub mod dtkp;

use std::fmt;
use std::ops::Range;
use std::sync::Arc;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::symbol::Symbol;
use crate::tensor::{Tape, Tensor, Var};

pub use dtkp::{DtkpTags, Proof};

/// Which tag algebra a program runs under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProvenanceKind {
    Damp,
    DtkpAm { k: usize },
}

impl ProvenanceKind {
    pub fn dtkp(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("top-k needs k >= 1".into()));
        }
        Ok(ProvenanceKind::DtkpAm { k })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProvenanceKind::Damp => "damp",
            ProvenanceKind::DtkpAm { .. } => "dtkp-am",
        }
    }

    /// `k` for proof provenances, 0 for add-mult.
    pub fn k(&self) -> usize {
        match self {
            ProvenanceKind::Damp => 0,
            ProvenanceKind::DtkpAm { k } => *k,
        }
    }

    /// Parses a provenance name plus an optional `k`.
    pub fn parse(name: &str, k: Option<usize>) -> Result<Self> {
        match name {
            "damp" => Ok(ProvenanceKind::Damp),
            "dtkp-am" => ProvenanceKind::dtkp(k.unwrap_or(1)),
            other => Err(Error::Config(format!("unknown provenance {other:?}"))),
        }
    }
}

impl fmt::Display for ProvenanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProvenanceKind::Damp => write!(f, "damp"),
            ProvenanceKind::DtkpAm { k } => write!(f, "dtkp-am(k={k})"),
        }
    }
}

impl FromStr for ProvenanceKind {
    type Err = Error;

    /// Accepts `damp`, `dtkp-am` (k = 1) and `dtkp-am:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((name, k)) => {
                let k = k
                    .parse()
                    .map_err(|_| Error::Config(format!("bad k in {s:?}")))?;
                ProvenanceKind::parse(name, Some(k))
            }
            None => ProvenanceKind::parse(s, None),
        }
    }
}

/// Identifies one registered input column.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InputId {
    /// Serial number of the distribution that registered the column.
    pub source: usize,
    pub symbol: Symbol,
}

#[derive(Clone, Debug)]
pub struct FrozenRegistry {
    /// All registered probability columns, shape (batch, inputs).
    pub leaves: Var,
    pub values: Arc<Tensor>,
}

/// Ordered universe of input symbols. Columns are appended per registered
/// distribution until the first combining operation freezes the registry.
#[derive(Debug, Default)]
pub struct InputRegistry {
    ids: Vec<InputId>,
    blocks: Vec<Var>,
    batch: Option<usize>,
    frozen: Option<FrozenRegistry>,
}

impl InputRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[InputId] {
        &self.ids
    }

    pub fn batch(&self) -> Option<usize> {
        self.batch
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen.is_some()
    }

    /// Appends one column per symbol; `probs` has shape (batch, symbols).
    pub fn register(&mut self, source: usize, symbols: &[Symbol], probs: &Var) -> Result<Range<usize>> {
        if self.is_frozen() {
            return Err(Error::RegistryFrozen);
        }
        let shape = probs.shape();
        if shape.len() != 2 || shape[1] != symbols.len() {
            return Err(Error::ShapeMismatch {
                op: "register_inputs",
                lhs: shape,
                rhs: vec![symbols.len()],
            });
        }
        match self.batch {
            Some(b) if b != shape[0] => {
                return Err(Error::BatchMismatch {
                    expected: b,
                    found: shape[0],
                })
            }
            _ => self.batch = Some(shape[0]),
        }
        let start = self.ids.len();
        self.ids.extend(symbols.iter().map(|s| InputId {
            source,
            symbol: s.clone(),
        }));
        self.blocks.push(probs.clone());
        Ok(start..self.ids.len())
    }

    /// Freezes the column axis, concatenating every block into one leaf
    /// matrix on `tape`. Idempotent.
    pub fn freeze(&mut self, tape: &Tape) -> Result<&FrozenRegistry> {
        if self.frozen.is_none() {
            let leaves = if self.blocks.is_empty() {
                tape.constant(Tensor::zeros(&[self.batch.unwrap_or(0), 0]))
            } else {
                let refs: Vec<&Var> = self.blocks.iter().collect();
                tape.concat(&refs, 1)?
            };
            let values = leaves.value();
            self.frozen = Some(FrozenRegistry { leaves, values });
        }
        Ok(self.frozen.as_ref().expect("frozen above"))
    }

    pub fn frozen(&self) -> Option<&FrozenRegistry> {
        self.frozen.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_names_round_trip() {
        assert_eq!("damp".parse::<ProvenanceKind>().unwrap(), ProvenanceKind::Damp);
        assert_eq!(
            "dtkp-am:3".parse::<ProvenanceKind>().unwrap(),
            ProvenanceKind::DtkpAm { k: 3 }
        );
        assert!("dtkp-am:0".parse::<ProvenanceKind>().is_err());
        assert!("wmc".parse::<ProvenanceKind>().is_err());
        assert_eq!(ProvenanceKind::DtkpAm { k: 5 }.k(), 5);
    }

    #[test]
    fn registry_grows_then_freezes() {
        let tape = Tape::new();
        let mut reg = InputRegistry::new();
        let digits: Vec<Symbol> = (0..10).map(Symbol::Int).collect();
        let probs = tape.leaf(Tensor::full(&[2, 10], 0.1));
        assert_eq!(reg.register(0, &digits, &probs).unwrap(), 0..10);
        assert_eq!(reg.register(1, &digits, &probs).unwrap(), 10..20);
        assert_eq!(reg.len(), 20);
        let wrong_batch = tape.leaf(Tensor::full(&[3, 10], 0.1));
        assert!(matches!(
            reg.register(2, &digits, &wrong_batch),
            Err(Error::BatchMismatch { .. })
        ));
        let frozen = reg.freeze(&tape).unwrap();
        assert_eq!(frozen.values.shape(), &[2, 20]);
        assert!(matches!(reg.register(3, &digits, &probs), Err(Error::RegistryFrozen)));
    }
}
