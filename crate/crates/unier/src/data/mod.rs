//! Dataset ingestion, synthetic population generation, and perturbation
//! protocols.
//!
//! A dataset bundles a Q-matrix, a prerequisite graph, per-student
//! interaction logs, and the tables mapping external string ids to the
//! dense indices every formula runs on. On disk a bundle is a directory of
//! three CSV files plus `idmap.json`:
//!
//! - `logs.csv`: `student_id,exercise_id,correct[,timestamp]`
//! - `qmatrix.csv`: `exercise_id,concept_id`
//! - `prereqs.csv`: `prereq_concept,dependent_concept`

mod bundle;
mod perturb;
mod synth;

pub use bundle::{ingest, load_bundle, write_bundle};
pub use perturb::{perturb_coldstart, perturb_noise, perturb_sparsity};
pub use synth::{synth_generate, SynthConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{CoreError, History, PrerequisiteGraph, QMatrix};
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    MalformedRow { path: String, line: usize, msg: String },
    #[error("{path}:{line}: unknown exercise id '{id}' (not in the Q-matrix)")]
    UnknownExercise { path: String, line: usize, id: String },
    #[error("{path}: {msg}")]
    BadJson { path: String, msg: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("ratio {0} outside the accepted range")]
    BadRatio(f64),
    #[error("{0}")]
    BadConfig(String),
}

/// External-id <-> dense-index tables, persisted alongside every bundle.
/// Position in each list is the dense index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMaps {
    pub students: Vec<String>,
    pub exercises: Vec<String>,
    pub concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub q: QMatrix,
    pub prereqs: PrerequisiteGraph,
    /// Indexed by student id; always step-ordered.
    pub logs: Vec<History>,
    pub id_maps: IdMaps,
}

impl Dataset {
    pub fn n_students(&self) -> usize {
        self.logs.len()
    }

    /// Checks the cross-references the loaders promise.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.id_maps.students.len() != self.logs.len()
            || self.id_maps.exercises.len() != self.q.n_exercises()
            || self.id_maps.concepts.len() != self.q.n_concepts()
        {
            return Err(DataError::BadConfig("id maps out of sync with dataset shapes".into()));
        }
        if self.prereqs.n_concepts() != self.q.n_concepts() {
            return Err(DataError::BadConfig(
                "prerequisite graph and Q-matrix disagree on |C|".into(),
            ));
        }
        for h in &self.logs {
            for it in h.items() {
                self.q.validate_exercise(it.exercise)?;
            }
        }
        Ok(())
    }
}
