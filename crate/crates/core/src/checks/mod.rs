//! Reference oracles and the check suites shared by the CLI and the
//! acceptance tests.

pub mod equivalence;
pub mod gradient;
pub mod oracle;
