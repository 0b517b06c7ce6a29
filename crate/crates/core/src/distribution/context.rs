use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use super::{Distribution, Tags};
use crate::error::{Error, Result};
use crate::provenance::{DtkpTags, FrozenRegistry, InputRegistry, Proof, ProvenanceKind};
use crate::symbol::Symbol;
use crate::tensor::{Tape, Tensor, Var};

struct ContextInner {
    tape: Tape,
    provenance: ProvenanceKind,
    registry: RefCell<InputRegistry>,
    next_source: Cell<usize>,
}

/// One program execution: a provenance, an input registry and the tape the
/// tag arithmetic is recorded on. Several contexts may share one tape.
#[derive(Clone)]
pub struct ProgramContext(Rc<ContextInner>);

impl fmt::Debug for ProgramContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProgramContext")
            .field("provenance", &self.0.provenance)
            .field("inputs", &self.0.registry.borrow().len())
            .finish()
    }
}

impl ProgramContext {
    pub fn new(tape: &Tape, provenance: ProvenanceKind) -> Self {
        ProgramContext(Rc::new(ContextInner {
            tape: tape.clone(),
            provenance,
            registry: RefCell::new(InputRegistry::new()),
            next_source: Cell::new(0),
        }))
    }

    pub fn tape(&self) -> &Tape {
        &self.0.tape
    }

    pub fn provenance(&self) -> ProvenanceKind {
        self.0.provenance
    }

    pub fn registry(&self) -> Ref<'_, InputRegistry> {
        self.0.registry.borrow()
    }

    pub fn same_as(&self, other: &ProgramContext) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Batch extent fixed by the first registered input.
    pub fn batch(&self) -> Option<usize> {
        self.0.registry.borrow().batch()
    }

    pub(crate) fn freeze(&self) -> Result<FrozenRegistry> {
        Ok(self.0.registry.borrow_mut().freeze(&self.0.tape)?.clone())
    }

    /// Registers one input column per symbol and returns their base tags:
    /// the probability columns themselves under add-mult, and a single
    /// one-symbol proof per column under top-k proofs.
    pub fn register_inputs(&self, symbols: &[Symbol], probs: &Var) -> Result<Tags> {
        let source = self.0.next_source.get();
        let columns = self.0.registry.borrow_mut().register(source, symbols, probs)?;
        self.0.next_source.set(source + 1);
        let batch = probs.shape()[0];
        Ok(match self.0.provenance {
            ProvenanceKind::Damp => Tags::Damp(probs.clone()),
            ProvenanceKind::DtkpAm { k } => {
                let row: Vec<Vec<Proof>> = columns.map(|c| vec![Proof::single(c)]).collect();
                let cells = (0..batch).flat_map(|_| row.iter().cloned()).collect();
                Tags::Dtkp(Arc::new(DtkpTags::new(
                    k,
                    batch,
                    symbols.len(),
                    cells,
                    (0..batch).collect(),
                )?))
            }
        })
    }

    /// Wraps per-symbol probabilities of shape (batch, symbols) as an input
    /// distribution. The values are used as given; apply a softmax first if
    /// they are logits.
    pub fn distribution(&self, probs: &Var, symbols: Vec<Symbol>) -> Result<Distribution> {
        if symbols.is_empty() {
            return Err(Error::EmptySymbols);
        }
        let mut seen = HashSet::with_capacity(symbols.len());
        for s in &symbols {
            if !seen.insert(s) {
                return Err(Error::DuplicateSymbol(s.clone()));
            }
        }
        if !self.tape().same_as(probs.tape()) {
            return Err(Error::Detached);
        }
        let tags = self.register_inputs(&symbols, probs)?;
        Ok(Distribution::from_parts(self.clone(), symbols, tags, probs.shape()[0]))
    }

    /// A one-symbol input distribution with probability 1 in every row.
    pub fn certain(&self, symbol: Symbol, batch: usize) -> Result<Distribution> {
        let ones = self.tape().constant(Tensor::ones(&[batch, 1]));
        self.distribution(&ones, vec![symbol])
    }

    /// A distribution with no symbols.
    pub fn empty(&self, batch: usize) -> Distribution {
        let tags = match self.0.provenance {
            ProvenanceKind::Damp => Tags::Damp(self.tape().constant(Tensor::zeros(&[batch, 0]))),
            ProvenanceKind::DtkpAm { k } => Tags::Dtkp(Arc::new(
                DtkpTags::new(k, batch, 0, vec![], (0..batch).collect()).expect("empty tags"),
            )),
        };
        Distribution::from_parts(self.clone(), vec![], tags, batch)
    }
}
