//! Recommenders: item-level selection over knowledge gaps and path-level
//! sequential planning over the simulator.

pub mod agents;
pub mod beam;
pub mod env;
pub mod item;

use thiserror::Error;

use crate::core::CoreError;
use crate::metrics::MetricsError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum RecError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("k = {k} exceeds the {n} available exercises")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid selection config: need 1 <= k < pool_size <= |E| (k = {k}, pool_size = {pool_size}, |E| = {n})")]
    BadSelectionConfig { k: usize, pool_size: usize, n: usize },
    #[error("enumeration bound exceeded: pool_size <= {max_pool} and k <= {max_k} required (got pool_size = {pool_size}, k = {k})")]
    EnumerationBound { pool_size: usize, k: usize, max_pool: usize, max_k: usize },
    #[error("cannot step a terminal environment state")]
    TerminalState,
    #[error("non-finite weight update (step size too large?)")]
    NonFiniteUpdate,
    #[error("{0}")]
    BadConfig(String),
}
