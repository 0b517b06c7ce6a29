use std::fmt;
use std::sync::Arc;

use num_rational::Rational64;

/// A discrete value carried by a distribution. Equality, hashing and
/// ordering are structural.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Bool(bool),
    Int(i64),
    Rational(Rational64),
    Str(Arc<str>),
    Tuple(Arc<[Symbol]>),
}

impl Symbol {
    pub fn str(s: &str) -> Self {
        Symbol::Str(Arc::from(s))
    }

    pub fn tuple(items: impl IntoIterator<Item = Symbol>) -> Self {
        Symbol::Tuple(items.into_iter().collect::<Vec<_>>().into())
    }

    pub fn pair(x: i64, y: i64) -> Self {
        Symbol::tuple([Symbol::Int(x), Symbol::Int(y)])
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Symbol::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Symbol::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[Symbol]> {
        match self {
            Symbol::Tuple(t) => Some(t),
            _ => None,
        }
    }

    /// `(x, y)` of a two-integer tuple.
    pub fn as_pair(&self) -> Option<(i64, i64)> {
        match self.as_tuple()? {
            [Symbol::Int(x), Symbol::Int(y)] => Some((*x, *y)),
            _ => None,
        }
    }

    /// Injective, self-delimiting byte encoding.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Symbol::Bool(b) => {
                out.push(0);
                out.push(*b as u8);
            }
            Symbol::Int(v) => {
                out.push(1);
                out.extend_from_slice(&v.to_be_bytes());
            }
            Symbol::Rational(r) => {
                out.push(2);
                out.extend_from_slice(&r.numer().to_be_bytes());
                out.extend_from_slice(&r.denom().to_be_bytes());
            }
            Symbol::Str(s) => {
                out.push(3);
                out.extend_from_slice(&(s.len() as u64).to_be_bytes());
                out.extend_from_slice(s.as_bytes());
            }
            Symbol::Tuple(items) => {
                out.push(4);
                out.extend_from_slice(&(items.len() as u64).to_be_bytes());
                for it in items.iter() {
                    it.encode_into(out);
                }
            }
        }
    }
}

impl From<i64> for Symbol {
    fn from(v: i64) -> Self {
        Symbol::Int(v)
    }
}

impl From<bool> for Symbol {
    fn from(v: bool) -> Self {
        Symbol::Bool(v)
    }
}

impl From<&str> for Symbol {
    fn from(v: &str) -> Self {
        Symbol::str(v)
    }
}

impl From<Rational64> for Symbol {
    fn from(v: Rational64) -> Self {
        Symbol::Rational(v)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Bool(b) => write!(f, "{b}"),
            Symbol::Int(v) => write!(f, "{v}"),
            Symbol::Rational(r) => write!(f, "{r}"),
            Symbol::Str(s) => write!(f, "{s:?}"),
            Symbol::Tuple(items) => {
                write!(f, "(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{it}")?;
                }
                write!(f, ")")
            }
        }
    }
}
