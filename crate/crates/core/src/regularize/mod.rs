//! Rank reduction, inverse-theorem oracles and the energy-increment loop.

pub mod kvn;
pub mod oracle;
pub mod pipeline;
pub mod rank_reduce;

pub use kvn::{kvn_run, KvnOutcome, KvnParams};
pub use oracle::{InverseOracle, OracleConfig};
pub use pipeline::{deduce_ap_free_bound, find_rich_subspace, ApFreeReport, RichSubspace};
pub use rank_reduce::{rank_reduce, RankReduction};
