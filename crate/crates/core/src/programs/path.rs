use crate::distribution::{apply_if, Distribution, UdfResult};
use crate::error::{Error, Result};
use crate::symbol::Symbol;

fn compose(a: &[&Symbol]) -> UdfResult {
    match (a[0].as_pair(), a[1].as_pair()) {
        (Some((x, _)), Some((_, z))) => Ok(Some(Symbol::pair(x, z))),
        _ => Err("expected (x, y) pairs".into()),
    }
}

fn ends_match(a: &[&Symbol]) -> bool {
    matches!((a[0].as_pair(), a[1].as_pair()), (Some((_, y)), Some((x, _))) if y == x)
}

/// Transitive closure of an edge distribution over `(x, y)` pairs.
pub fn path_closure(edges: &Distribution) -> Result<Distribution> {
    path_closure_counted(edges).map(|(d, _)| d)
}

/// [`path_closure`] plus the number of compose-and-merge rounds run,
/// including the final round that changes nothing.
pub fn path_closure_counted(edges: &Distribution) -> Result<(Distribution, usize)> {
    let mut paths = edges.clone();
    let nodes: std::collections::BTreeSet<i64> = edges
        .symbols()
        .iter()
        .filter_map(Symbol::as_pair)
        .flat_map(|(x, y)| [x, y])
        .collect();
    let limit = nodes.len() * nodes.len() + 1;
    for round in 1..=limit {
        let step = apply_if(&[&paths, edges], compose, ends_match)?;
        let merged = paths.union(&step)?;
        if merged.symbols() == paths.symbols() {
            return Ok((merged, round));
        }
        paths = merged;
    }
    Err(Error::InvalidArgument("closure did not reach a fixpoint".into()))
}
