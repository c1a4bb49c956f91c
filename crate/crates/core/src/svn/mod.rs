//! Statistically validated synchronicity networks.

pub mod fdr;
pub mod hypergeom;
pub mod network;
pub(crate) mod scan;

pub use fdr::{bh_fdr, bh_threshold, FdrConfig, FdrOutcome};
pub use hypergeom::hypergeom_sf;
pub use network::{build_svn, count_cooccurrences, read_edges, write_edges, LinkCandidate, NetworkMeta, ValidatedNetwork};
