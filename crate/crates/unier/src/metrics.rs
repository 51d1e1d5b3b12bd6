//! The unified evaluation metric.
//!
//! Item-level outputs are projected into ordered paths by descending score
//! ([`unify_output`]), and any path is scored by the weighted cognitive
//! gain: the weighted sum of per-concept mastery improvements between the
//! state before and after simulated execution ([`wcg`]). Two task weight
//! builders ship with the engine: uniform weights over a designated target
//! set ([`build_tga_weights`]) and uniform weights over the currently
//! unmastered concepts ([`build_gpp_weights`]).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{
    ConceptId, CoreError, History, LearningPath, MasteryVector, RecommendationSet, WeightVector,
};
use crate::sim::{Estimator, SimError, SimMode};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("recommendation set has {got} entries, budget needs {need}")]
    SetSmallerThanBudget { got: usize, need: usize },
    #[error("target concept set must be non-empty")]
    EmptyTargets,
    #[error("threshold must lie strictly inside (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("prefix length {k} exceeds path length {len}")]
    PrefixTooLong { k: usize, len: usize },
    #[error("weight vector has {got} entries, estimator tracks {expected} concepts")]
    WeightDimension { expected: usize, got: usize },
}

/// An evaluation task: which concepts matter and how much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskSpec {
    /// Targeted goal achievement: uniform weight over a fixed target set.
    Tga { targets: BTreeSet<ConceptId> },
    /// Global proficiency promotion: uniform weight over every concept whose
    /// mastery sits below the threshold at evaluation time.
    Gpp { threshold: f64 },
}

impl TaskSpec {
    pub fn tga(targets: BTreeSet<ConceptId>) -> Result<Self, MetricsError> {
        if targets.is_empty() {
            return Err(MetricsError::EmptyTargets);
        }
        Ok(TaskSpec::Tga { targets })
    }

    pub fn gpp(threshold: f64) -> Result<Self, MetricsError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(MetricsError::BadThreshold(threshold));
        }
        Ok(TaskSpec::Gpp { threshold })
    }

    /// Builds the weight vector this task induces at mastery state `m`.
    pub fn weights(&self, m: &MasteryVector) -> Result<WeightVector, MetricsError> {
        match self {
            TaskSpec::Tga { targets } => {
                let ids: Vec<ConceptId> = targets.iter().copied().collect();
                build_tga_weights(&ids, m.len())
            }
            TaskSpec::Gpp { threshold } => build_gpp_weights(m, *threshold),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TaskSpec::Tga { .. } => "tga",
            TaskSpec::Gpp { .. } => "gpp",
        }
    }
}

/// Projects a scored, unordered recommendation set into an ordered path:
/// the `budget` highest-scoring exercises, descending by score, ties broken
/// by ascending exercise id.
pub fn unify_output(
    set: &RecommendationSet,
    budget: usize,
) -> Result<LearningPath, MetricsError> {
    if set.len() < budget {
        return Err(MetricsError::SetSmallerThanBudget { got: set.len(), need: budget });
    }
    let ranked = set.ranked();
    Ok(LearningPath(ranked.into_iter().take(budget).map(|(e, _)| e).collect()))
}

/// Uniform weights 1/|targets| over the target set, zero elsewhere.
pub fn build_tga_weights(
    targets: &[ConceptId],
    n_concepts: usize,
) -> Result<WeightVector, MetricsError> {
    if targets.is_empty() {
        return Err(MetricsError::EmptyTargets);
    }
    let distinct: BTreeSet<ConceptId> = targets.iter().copied().collect();
    for &c in &distinct {
        if c.index() >= n_concepts {
            return Err(CoreError::ConceptOutOfRange(c.index(), n_concepts).into());
        }
    }
    let w = 1.0 / distinct.len() as f64;
    let mut values = vec![0.0; n_concepts];
    for c in distinct {
        values[c.index()] = w;
    }
    Ok(WeightVector::new(values)?)
}

/// Uniform weights over the concepts with mastery below `threshold`.
/// When every concept is already mastered the result is the all-zero
/// vector and any gain evaluates to 0.
pub fn build_gpp_weights(
    m: &MasteryVector,
    threshold: f64,
) -> Result<WeightVector, MetricsError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricsError::BadThreshold(threshold));
    }
    let unmastered: Vec<usize> = m
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < threshold)
        .map(|(i, _)| i)
        .collect();
    if unmastered.is_empty() {
        return Ok(WeightVector::zeros(m.len()));
    }
    let w = 1.0 / unmastered.len() as f64;
    let mut values = vec![0.0; m.len()];
    for i in unmastered {
        values[i] = w;
    }
    Ok(WeightVector::new(values)?)
}

/// Weighted cognitive gain of executing `path` from the state implied by
/// `h`: the weighted sum of per-concept mastery improvements.
pub fn wcg(
    est: &Estimator,
    h: &History,
    path: &LearningPath,
    w: &WeightVector,
    mode: &SimMode,
) -> Result<f64, MetricsError> {
    if w.len() != est.n_concepts() {
        return Err(MetricsError::WeightDimension { expected: est.n_concepts(), got: w.len() });
    }
    let before = est.estimate(h)?;
    let after = est.simulate_path(h, path, mode)?.final_mastery;
    Ok(weighted_gain(w, &before, &after))
}

/// The gain on the k-step prefix of `path`.
pub fn wcg_at_k(
    est: &Estimator,
    h: &History,
    path: &LearningPath,
    w: &WeightVector,
    k: usize,
    mode: &SimMode,
) -> Result<f64, MetricsError> {
    if k > path.len() {
        return Err(MetricsError::PrefixTooLong { k, len: path.len() });
    }
    wcg(est, h, &path.prefix(k), w, mode)
}

pub(crate) fn weighted_gain(w: &WeightVector, before: &MasteryVector, after: &MasteryVector) -> f64 {
    w.as_slice()
        .iter()
        .zip(before.as_slice().iter().zip(after.as_slice()))
        .map(|(&wc, (&b, &a))| wc * (a - b))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{build_qmatrix, ExerciseId, StudentId};
    use crate::sim::BktParams;

    fn eid(i: usize) -> ExerciseId {
        ExerciseId::from(i)
    }

    fn cid(i: usize) -> ConceptId {
        ConceptId::from(i)
    }

    #[test]
    fn unify_sorts_by_score_then_id() {
        let s = RecommendationSet::new(vec![(eid(0), 0.3), (eid(1), 0.9), (eid(2), 0.5)]).unwrap();
        let path = unify_output(&s, 3).unwrap();
        assert_eq!(path.steps(), &[eid(1), eid(2), eid(0)]);

        let tied = RecommendationSet::new(vec![(eid(1), 0.5), (eid(0), 0.5)]).unwrap();
        assert_eq!(unify_output(&tied, 2).unwrap().steps(), &[eid(0), eid(1)]);

        let small = RecommendationSet::new(vec![(eid(0), 0.1), (eid(1), 0.2)]).unwrap();
        assert!(matches!(
            unify_output(&small, 3),
            Err(MetricsError::SetSmallerThanBudget { got: 2, need: 3 })
        ));
    }

    #[test]
    fn unify_takes_top_budget_multiset() {
        let s = RecommendationSet::new(vec![
            (eid(0), 0.1),
            (eid(1), 0.7),
            (eid(2), 0.7),
            (eid(3), 0.4),
        ])
        .unwrap();
        let path = unify_output(&s, 2).unwrap();
        assert_eq!(path.steps(), &[eid(1), eid(2)]);
    }

    #[test]
    fn tga_weights_forced_by_definition() {
        let w = build_tga_weights(&[cid(1), cid(3)], 4).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.5, 0.0, 0.5]);
        let w = build_tga_weights(&[cid(0)], 2).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0]);
        assert!(matches!(build_tga_weights(&[], 2), Err(MetricsError::EmptyTargets)));
        assert!(build_tga_weights(&[cid(5)], 2).is_err());
    }

    #[test]
    fn gpp_weights_over_unmastered() {
        let m = MasteryVector::new(vec![0.9, 0.3, 0.4]).unwrap();
        let w = build_gpp_weights(&m, 0.5).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.5, 0.5]);

        let mastered = MasteryVector::new(vec![0.9, 0.9]).unwrap();
        let w = build_gpp_weights(&mastered, 0.5).unwrap();
        assert!(w.is_zero());

        let low = MasteryVector::new(vec![0.1, 0.1, 0.1, 0.1]).unwrap();
        let w = build_gpp_weights(&low, 0.5).unwrap();
        assert_eq!(w.as_slice(), &[0.25; 4]);

        assert!(build_gpp_weights(&m, 0.0).is_err());
        assert!(build_gpp_weights(&m, 1.0).is_err());
    }

    fn flat_estimator() -> Estimator {
        let q = build_qmatrix(&[(eid(0), cid(0))], 1, 1).unwrap();
        Estimator::new(BktParams::uniform(1, 0.2, 0.3, 0.2, 0.1).unwrap(), None, q).unwrap()
    }

    #[test]
    fn wcg_closed_form_single_step() {
        let est = flat_estimator();
        let h = History::new(StudentId(0));
        let w = WeightVector::new(vec![1.0]).unwrap();
        let g = wcg(&est, &h, &LearningPath(vec![eid(0)]), &w, &SimMode::Expected).unwrap();
        assert!((g - 0.24).abs() < 1e-12, "(1 - 0.2) * 0.3, got {g}");
    }

    #[test]
    fn wcg_zero_cases() {
        let est = flat_estimator();
        let h = History::new(StudentId(0));
        let zero = WeightVector::zeros(1);
        let g = wcg(&est, &h, &LearningPath(vec![eid(0), eid(0)]), &zero, &SimMode::Expected)
            .unwrap();
        assert_eq!(g, 0.0);
        let w = WeightVector::new(vec![1.0]).unwrap();
        let g = wcg(&est, &h, &LearningPath(vec![]), &w, &SimMode::Expected).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn wcg_at_k_prefixes() {
        let est = flat_estimator();
        let h = History::new(StudentId(0));
        let w = WeightVector::new(vec![1.0]).unwrap();
        let path = LearningPath(vec![eid(0); 3]);
        let full = wcg(&est, &h, &path, &w, &SimMode::Expected).unwrap();
        let at3 = wcg_at_k(&est, &h, &path, &w, 3, &SimMode::Expected).unwrap();
        assert!((full - at3).abs() < 1e-15);
        let at0 = wcg_at_k(&est, &h, &path, &w, 0, &SimMode::Expected).unwrap();
        assert_eq!(at0, 0.0);
        let at2 = wcg_at_k(&est, &h, &path, &w, 2, &SimMode::Expected).unwrap();
        assert!((at2 - 0.8 * (1.0 - 0.7f64.powi(2))).abs() < 1e-12, "got {at2}");
        assert!(wcg_at_k(&est, &h, &path, &w, 4, &SimMode::Expected).is_err());
    }

    #[test]
    fn wcg_monotone_in_k_flat_graph() {
        let est = flat_estimator();
        let h = History::new(StudentId(0));
        let w = WeightVector::new(vec![1.0]).unwrap();
        let path = LearningPath(vec![eid(0); 5]);
        let mut last = 0.0;
        for k in 0..=5 {
            let g = wcg_at_k(&est, &h, &path, &w, k, &SimMode::Expected).unwrap();
            assert!(g >= last - 1e-15);
            last = g;
        }
    }

    #[test]
    fn wcg_permutation_invariant_on_flat_graph() {
        let q = build_qmatrix(&[(eid(0), cid(0)), (eid(1), cid(1))], 2, 2).unwrap();
        let est =
            Estimator::new(BktParams::uniform(2, 0.2, 0.3, 0.2, 0.1).unwrap(), None, q).unwrap();
        let h = History::new(StudentId(0));
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let a = wcg(&est, &h, &LearningPath(vec![eid(0), eid(1), eid(0)]), &w, &SimMode::Expected)
            .unwrap();
        let b = wcg(&est, &h, &LearningPath(vec![eid(0), eid(0), eid(1)]), &w, &SimMode::Expected)
            .unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn wcg_order_sensitive_on_chain() {
        // Practicing the prerequisite first strictly beats the reverse order.
        let q = build_qmatrix(&[(eid(0), cid(0)), (eid(1), cid(1))], 2, 2).unwrap();
        let chain = crate::core::PrerequisiteGraph::chain(2, 2);
        let est = Estimator::new(
            BktParams::uniform(2, 0.2, 0.3, 0.2, 0.1).unwrap(),
            Some(chain),
            q,
        )
        .unwrap();
        let h = History::new(StudentId(0));
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let forward =
            wcg(&est, &h, &LearningPath(vec![eid(0), eid(1)]), &w, &SimMode::Expected).unwrap();
        let reverse =
            wcg(&est, &h, &LearningPath(vec![eid(1), eid(0)]), &w, &SimMode::Expected).unwrap();
        assert!(forward > reverse);
    }

    #[test]
    fn wcg_rejects_mismatched_weights_and_stays_bounded() {
        let est = flat_estimator();
        let h = History::new(StudentId(0));
        let too_long = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            wcg(&est, &h, &LearningPath(vec![eid(0)]), &too_long, &SimMode::Expected),
            Err(MetricsError::WeightDimension { expected: 1, got: 2 })
        ));
        let w = WeightVector::new(vec![1.0]).unwrap();
        for len in 0..12 {
            let g = wcg(&est, &h, &LearningPath(vec![eid(0); len]), &w, &SimMode::Expected)
                .unwrap();
            assert!((-1.0..=1.0).contains(&g));
        }
    }

    #[test]
    fn task_spec_validation_and_weights() {
        assert!(TaskSpec::tga(BTreeSet::new()).is_err());
        assert!(TaskSpec::gpp(0.0).is_err());
        assert!(TaskSpec::gpp(1.0).is_err());
        let m = MasteryVector::new(vec![0.2, 0.9]).unwrap();
        let tga = TaskSpec::tga([cid(0), cid(1)].into_iter().collect()).unwrap();
        assert_eq!(tga.weights(&m).unwrap().as_slice(), &[0.5, 0.5]);
        let gpp = TaskSpec::gpp(0.5).unwrap();
        assert_eq!(gpp.weights(&m).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(tga.label(), "tga");
        assert_eq!(gpp.label(), "gpp");
    }
}
