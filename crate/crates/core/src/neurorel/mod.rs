//! Reliability of neuromorphic hardware: transistor aging of the crossbar
//! periphery, PCM endurance under self-heating, and the mapping procedures
//! that trade them off (KL partitioning, endurance-aware synapse placement,
//! binary-PSO cluster-to-tile assignment).

pub mod aging;
pub mod crossbar;
pub mod mapping;
pub mod placement;
pub mod workload;

use thiserror::Error;

pub use aging::{isi, mttf, mttf_bti, mttf_tddb, BtiParams, Mechanism, StressProfile, TddbParams, BOLTZMANN_EV};
pub use crossbar::{build_endurance_map, cell_path_length, AccessDevice, CrossbarConfig, EnduranceMap, EnduranceModel};
pub use mapping::{
    aging_fitness, map_workload, pso_map, random_mapping, read_mapping_csv, AgingModel, MappingProblem, MappingReport,
    MappingRow, MappingSummary, NeuroMapConfig, PsoConfig, PsoResult, TileSpec,
};
pub use placement::{effective_lifetime, place_random, place_synapses, Placement};
pub use workload::{cut_cost, kl_bisect, kl_partition, random_workload, Clustering, Synapse, SnnWorkloadGraph};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuroError {
    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain { name: &'static str, value: f64, domain: &'static str },
    #[error("{0} has no quantitative model")]
    Unsupported(&'static str),
    #[error("empty spike train")]
    EmptySpikeTrain,
    #[error("spike times must be finite and ascending")]
    UnsortedSpikes,
    #[error("cell ({row}, {col}) outside the {n}×{n} crossbar")]
    CellOutOfRange { row: usize, col: usize, n: usize },
    #[error("invalid workload graph: {0}")]
    Workload(String),
    #[error("capacity {capacity} cannot hold {what}")]
    Capacity { capacity: usize, what: String },
    #[error("no mapped synapse with nonzero activation")]
    NothingMapped,
    #[error("invalid mapping: {0}")]
    Mapping(String),
    #[error("PSO needs at least one particle and one iteration")]
    EmptySwarm,
}
