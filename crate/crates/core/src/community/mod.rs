//! Weighted projection of a validated network and map-equation community
//! detection.

pub mod graph;
pub mod infomap;
pub mod mapeq;

pub use graph::{project_weighted, read_partition, write_partition, GroupPartition, WeightedGraph};
pub use infomap::{detect_communities, detect_communities_with, DEFAULT_RESTARTS};
pub use mapeq::map_equation_codelength;
