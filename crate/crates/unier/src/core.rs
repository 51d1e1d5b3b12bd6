//! Domain types shared by every part of the engine: dense identifiers,
//! the exercise-to-concept incidence matrix, interaction histories,
//! mastery and weight vectors, and the prerequisite graph.
//!
//! All types here are immutable after construction and safe to share
//! across threads.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by core type construction and lookups.
#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("exercise index {0} out of range (bank has {1} exercises)")]
    ExerciseOutOfRange(usize, usize),
    #[error("concept index {0} out of range ({1} concepts)")]
    ConceptOutOfRange(usize, usize),
    #[error("student index {0} out of range ({1} students)")]
    StudentOutOfRange(usize, usize),
    #[error("exercise {0} covers no concept")]
    EmptyConceptSet(usize),
    #[error("interaction steps must be strictly increasing (step {0} follows step {1})")]
    NonIncreasingStep(u64, u64),
    #[error("mastery value {0} outside [0, 1]")]
    MasteryOutOfRange(f64),
    #[error("weight vector must be all zero or sum to 1 (sum = {0})")]
    WeightSum(f64),
    #[error("weight vector entries must be non-negative (found {0})")]
    NegativeWeight(f64),
    #[error("duplicate exercise {0} in recommendation set")]
    DuplicateEntry(usize),
    #[error("non-finite score for exercise {0}")]
    NonFiniteScore(usize),
    #[error("prerequisite graph contains a cycle")]
    PrerequisiteCycle,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                $name(i as u32)
            }
        }
    };
}

id_type!(
    /// Dense index of a knowledge concept, unique within a dataset.
    ConceptId
);
id_type!(
    /// Dense index of an exercise, unique within a dataset.
    ExerciseId
);
id_type!(
    /// Dense index of a student, unique within a dataset.
    StudentId
);

/// Binary exercise-to-concept incidence matrix.
///
/// Rows are exercises, columns are concepts. Both row views (concepts per
/// exercise) and column views (exercises per concept) are precomputed and
/// kept consistent by construction. Every exercise must cover at least one
/// concept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMatrix {
    n_exercises: usize,
    n_concepts: usize,
    concepts_by_exercise: Vec<Vec<ConceptId>>,
    exercises_by_concept: Vec<Vec<ExerciseId>>,
}

impl QMatrix {
    /// Builds the matrix from (exercise, concept) incidence pairs.
    /// Duplicate pairs are deduplicated; an exercise with no concept is an error.
    pub fn build(
        pairs: &[(ExerciseId, ConceptId)],
        n_exercises: usize,
        n_concepts: usize,
    ) -> Result<Self, CoreError> {
        let mut concepts_by_exercise: Vec<BTreeSet<ConceptId>> = vec![BTreeSet::new(); n_exercises];
        for &(e, c) in pairs {
            if e.index() >= n_exercises {
                return Err(CoreError::ExerciseOutOfRange(e.index(), n_exercises));
            }
            if c.index() >= n_concepts {
                return Err(CoreError::ConceptOutOfRange(c.index(), n_concepts));
            }
            concepts_by_exercise[e.index()].insert(c);
        }
        for (e, set) in concepts_by_exercise.iter().enumerate() {
            if set.is_empty() {
                return Err(CoreError::EmptyConceptSet(e));
            }
        }
        let concepts_by_exercise: Vec<Vec<ConceptId>> = concepts_by_exercise
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();
        let mut exercises_by_concept: Vec<Vec<ExerciseId>> = vec![Vec::new(); n_concepts];
        for (e, concepts) in concepts_by_exercise.iter().enumerate() {
            for &c in concepts {
                exercises_by_concept[c.index()].push(ExerciseId::from(e));
            }
        }
        Ok(QMatrix {
            n_exercises,
            n_concepts,
            concepts_by_exercise,
            exercises_by_concept,
        })
    }

    pub fn n_exercises(&self) -> usize {
        self.n_exercises
    }

    pub fn n_concepts(&self) -> usize {
        self.n_concepts
    }

    /// Concepts covered by an exercise, sorted ascending. Never empty.
    pub fn concepts_of(&self, e: ExerciseId) -> Result<&[ConceptId], CoreError> {
        self.concepts_by_exercise
            .get(e.index())
            .map(|v| v.as_slice())
            .ok_or(CoreError::ExerciseOutOfRange(e.index(), self.n_exercises))
    }

    /// Exercises covering a concept, sorted ascending. May be empty.
    pub fn exercises_of(&self, c: ConceptId) -> Result<&[ExerciseId], CoreError> {
        self.exercises_by_concept
            .get(c.index())
            .map(|v| v.as_slice())
            .ok_or(CoreError::ConceptOutOfRange(c.index(), self.n_concepts))
    }

    pub fn has(&self, e: ExerciseId, c: ConceptId) -> bool {
        self.concepts_by_exercise
            .get(e.index())
            .map(|v| v.binary_search(&c).is_ok())
            .unwrap_or(false)
    }

    /// Dumps the incidences as sorted (exercise, concept) pairs.
    /// Rebuilding from this dump yields an identical matrix.
    pub fn pairs(&self) -> Vec<(ExerciseId, ConceptId)> {
        let mut out = Vec::new();
        for (e, concepts) in self.concepts_by_exercise.iter().enumerate() {
            for &c in concepts {
                out.push((ExerciseId::from(e), c));
            }
        }
        out
    }

    pub fn exercise_ids(&self) -> impl Iterator<Item = ExerciseId> {
        (0..self.n_exercises).map(ExerciseId::from)
    }

    pub fn concept_ids(&self) -> impl Iterator<Item = ConceptId> {
        (0..self.n_concepts).map(ConceptId::from)
    }

    fn check_exercise(&self, e: ExerciseId) -> Result<(), CoreError> {
        if e.index() >= self.n_exercises {
            return Err(CoreError::ExerciseOutOfRange(e.index(), self.n_exercises));
        }
        Ok(())
    }

    /// Range-checks an exercise id against this bank.
    pub fn validate_exercise(&self, e: ExerciseId) -> Result<(), CoreError> {
        self.check_exercise(e)
    }
}

/// One attempt: which exercise, whether it was answered correctly, and the
/// ordinal step within the student's history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub exercise: ExerciseId,
    pub correct: bool,
    pub step: u64,
}

/// A student's ordered interaction sequence. Steps are strictly increasing;
/// the sequence may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    student: StudentId,
    items: Vec<Interaction>,
}

impl History {
    pub fn new(student: StudentId) -> Self {
        History {
            student,
            items: Vec::new(),
        }
    }

    pub fn with_items(student: StudentId, items: Vec<Interaction>) -> Result<Self, CoreError> {
        let mut h = History::new(student);
        for it in items {
            h.push(it)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, interaction: Interaction) -> Result<(), CoreError> {
        if let Some(last) = self.items.last() {
            if interaction.step <= last.step {
                return Err(CoreError::NonIncreasingStep(interaction.step, last.step));
            }
        }
        self.items.push(interaction);
        Ok(())
    }

    /// Appends an attempt at the next ordinal step.
    pub fn append_next(&mut self, exercise: ExerciseId, correct: bool) {
        let step = self.items.last().map(|i| i.step + 1).unwrap_or(0);
        self.items.push(Interaction {
            exercise,
            correct,
            step,
        });
    }

    pub fn student(&self) -> StudentId {
        self.student
    }

    pub fn items(&self) -> &[Interaction] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// A copy truncated to the first `max_len` interactions.
    pub fn truncated(&self, max_len: usize) -> History {
        History {
            student: self.student,
            items: self.items.iter().take(max_len).copied().collect(),
        }
    }
}

/// Per-concept mastery estimates, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasteryVector(Vec<f64>);

impl MasteryVector {
    pub fn new(values: Vec<f64>) -> Result<Self, CoreError> {
        for &v in &values {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(CoreError::MasteryOutOfRange(v));
            }
        }
        Ok(MasteryVector(values))
    }

    pub fn uniform(n_concepts: usize, value: f64) -> Result<Self, CoreError> {
        MasteryVector::new(vec![value; n_concepts])
    }

    pub fn get(&self, c: ConceptId) -> f64 {
        self.0[c.index()]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Arithmetic mean of mastery over a concept set.
    pub fn mean_over(&self, concepts: &[ConceptId]) -> f64 {
        if concepts.is_empty() {
            return 1.0;
        }
        concepts.iter().map(|&c| self.get(c)).sum::<f64>() / concepts.len() as f64
    }

    pub(crate) fn set(&mut self, c: ConceptId, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.0[c.index()] = value;
    }
}

/// Scored, unordered recommendation output of an item-level method.
///
/// Exercise ids are unique and scores finite. Entries are stored sorted by
/// id for deterministic iteration; ranking order is derived where needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    entries: Vec<(ExerciseId, f64)>,
}

impl RecommendationSet {
    pub fn new(mut entries: Vec<(ExerciseId, f64)>) -> Result<Self, CoreError> {
        for &(e, s) in &entries {
            if !s.is_finite() {
                return Err(CoreError::NonFiniteScore(e.index()));
            }
        }
        entries.sort_by_key(|&(e, _)| e);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(CoreError::DuplicateEntry(w[0].0.index()));
            }
        }
        Ok(RecommendationSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by ascending exercise id.
    pub fn entries(&self) -> &[(ExerciseId, f64)] {
        &self.entries
    }

    /// Entries sorted by descending score, ties by ascending id.
    pub fn ranked(&self) -> Vec<(ExerciseId, f64)> {
        let mut out = self.entries.clone();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }

    pub fn contains(&self, e: ExerciseId) -> bool {
        self.entries.binary_search_by_key(&e, |&(id, _)| id).is_ok()
    }
}

/// Ordered exercise sequence produced by a path-level method (or by
/// projecting an item-level output). Duplicates are permitted: repeating
/// an exercise is re-practice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningPath(pub Vec<ExerciseId>);

impl LearningPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn steps(&self) -> &[ExerciseId] {
        &self.0
    }

    pub fn prefix(&self, k: usize) -> LearningPath {
        LearningPath(self.0.iter().take(k).copied().collect())
    }
}

/// Per-concept evaluation weights: non-negative, and either all zero or
/// summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self, CoreError> {
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(CoreError::NegativeWeight(w));
            }
            sum += w;
        }
        if sum != 0.0 && (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(CoreError::WeightSum(sum));
        }
        Ok(WeightVector(weights))
    }

    pub fn zeros(n_concepts: usize) -> Self {
        WeightVector(vec![0.0; n_concepts])
    }

    pub fn get(&self, c: ConceptId) -> f64 {
        self.0[c.index()]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&w| w == 0.0)
    }
}

/// Directed acyclic graph of prerequisite relations between concepts.
/// An edge (a, b) means concept `a` must be learned before `b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrerequisiteGraph {
    n_concepts: usize,
    /// parents[c] = prerequisites of concept c, sorted ascending.
    parents: Vec<Vec<ConceptId>>,
}

impl PrerequisiteGraph {
    /// Graph with no edges: every concept is independently learnable.
    pub fn flat(n_concepts: usize) -> Self {
        PrerequisiteGraph {
            n_concepts,
            parents: vec![Vec::new(); n_concepts],
        }
    }

    /// A single chain c0 -> c1 -> ... -> c(depth-1); remaining concepts flat.
    pub fn chain(n_concepts: usize, depth: usize) -> Self {
        let mut g = PrerequisiteGraph::flat(n_concepts);
        for c in 1..depth.min(n_concepts) {
            g.parents[c].push(ConceptId::from(c - 1));
        }
        g
    }

    pub fn from_edges(
        edges: &[(ConceptId, ConceptId)],
        n_concepts: usize,
    ) -> Result<Self, CoreError> {
        let mut parents: Vec<BTreeSet<ConceptId>> = vec![BTreeSet::new(); n_concepts];
        for &(pre, dep) in edges {
            if pre.index() >= n_concepts {
                return Err(CoreError::ConceptOutOfRange(pre.index(), n_concepts));
            }
            if dep.index() >= n_concepts {
                return Err(CoreError::ConceptOutOfRange(dep.index(), n_concepts));
            }
            parents[dep.index()].insert(pre);
        }
        let parents: Vec<Vec<ConceptId>> =
            parents.into_iter().map(|s| s.into_iter().collect()).collect();
        let g = PrerequisiteGraph { n_concepts, parents };
        if g.has_cycle() {
            return Err(CoreError::PrerequisiteCycle);
        }
        Ok(g)
    }

    // Kahn's algorithm over the reversed adjacency.
    fn has_cycle(&self) -> bool {
        let mut indegree = vec![0usize; self.n_concepts];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.n_concepts];
        for (dep, pres) in self.parents.iter().enumerate() {
            indegree[dep] = pres.len();
            for p in pres {
                children[p.index()].push(dep);
            }
        }
        let mut queue: Vec<usize> = (0..self.n_concepts).filter(|&c| indegree[c] == 0).collect();
        let mut seen = 0usize;
        while let Some(c) = queue.pop() {
            seen += 1;
            for &child in &children[c] {
                indegree[child] -= 1;
                if indegree[child] == 0 {
                    queue.push(child);
                }
            }
        }
        seen != self.n_concepts
    }

    pub fn n_concepts(&self) -> usize {
        self.n_concepts
    }

    pub fn prerequisites_of(&self, c: ConceptId) -> &[ConceptId] {
        &self.parents[c.index()]
    }

    pub fn is_flat(&self) -> bool {
        self.parents.iter().all(|p| p.is_empty())
    }

    /// All edges as (prerequisite, dependent) pairs, sorted.
    pub fn edges(&self) -> Vec<(ConceptId, ConceptId)> {
        let mut out = Vec::new();
        for (dep, pres) in self.parents.iter().enumerate() {
            for &p in pres {
                out.push((p, ConceptId::from(dep)));
            }
        }
        out.sort();
        out
    }
}

/// Builds a Q-matrix from incidence pairs; see [`QMatrix::build`].
pub fn build_qmatrix(
    pairs: &[(ExerciseId, ConceptId)],
    n_exercises: usize,
    n_concepts: usize,
) -> Result<QMatrix, CoreError> {
    QMatrix::build(pairs, n_exercises, n_concepts)
}
