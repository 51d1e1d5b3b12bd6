//! Model-based full-path planning by beam search.
//!
//! The planner scores action sequences by their cumulative weighted gain
//! under Expected-mode simulation. The whole path is committed up front,
//! with no intra-path feedback adaptation. Widths are explored iteratively
//! from 1 up to the requested width and the best completed path wins, which
//! makes the achieved score monotone in the width on every instance; ties
//! go to the lexicographically smaller id sequence. Width 1 reduces to the
//! myopic one-step-greedy path, and a width of |E|^budget is exhaustive.

use crate::core::{ExerciseId, LearningPath};
use crate::metrics::TaskSpec;
use crate::core::History;
use crate::sim::{Estimator, SimMode};

use super::env::{env_reset, env_step, EnvState};
use super::RecError;

struct Node {
    state: EnvState,
    score: f64,
    path: Vec<ExerciseId>,
}

pub fn beam_plan(
    est: &Estimator,
    h: &History,
    task: &TaskSpec,
    budget: usize,
    beam_width: usize,
) -> Result<LearningPath, RecError> {
    beam_plan_scored(est, h, task, budget, beam_width).map(|(path, _)| path)
}

/// Like [`beam_plan`] but also returns the achieved cumulative gain.
pub fn beam_plan_scored(
    est: &Estimator,
    h: &History,
    task: &TaskSpec,
    budget: usize,
    beam_width: usize,
) -> Result<(LearningPath, f64), RecError> {
    let start = env_reset(est, h, task, budget)?;
    beam_plan_from(est, &start, beam_width)
}

/// Plans from an already-prepared environment state.
pub fn beam_plan_from(
    est: &Estimator,
    start: &EnvState,
    beam_width: usize,
) -> Result<(LearningPath, f64), RecError> {
    if beam_width == 0 {
        return Err(RecError::BadConfig("beam width must be at least 1".into()));
    }
    let budget = start.budget.saturating_sub(start.step_index);
    let mut best: Option<(f64, Vec<ExerciseId>)> = None;
    for width in 1..=beam_width {
        let (score, path) = beam_once(est, start, budget, width)?;
        let replace = match &best {
            None => true,
            Some((bs, bp)) => score > *bs || (score == *bs && path < *bp),
        };
        if replace {
            best = Some((score, path));
        }
    }
    let (score, path) = best.expect("width >= 1 produces a candidate");
    Ok((LearningPath(path), score))
}

fn beam_once(
    est: &Estimator,
    start: &EnvState,
    budget: usize,
    width: usize,
) -> Result<(f64, Vec<ExerciseId>), RecError> {
    let n_actions = est.qmatrix().n_exercises();
    let mut frontier = vec![Node { state: start.clone(), score: 0.0, path: Vec::new() }];
    for _ in 0..budget {
        let mut expansions = Vec::with_capacity(frontier.len() * n_actions);
        for node in &frontier {
            for a in 0..n_actions {
                let action = ExerciseId::from(a);
                let (next, reward, _) = env_step(&node.state, action, est, &SimMode::Expected)?;
                let mut path = node.path.clone();
                path.push(action);
                expansions.push(Node { state: next, score: node.score + reward, path });
            }
        }
        expansions.sort_by(|a, b| {
            b.score.partial_cmp(&a.score).unwrap().then_with(|| a.path.cmp(&b.path))
        });
        expansions.truncate(width);
        frontier = expansions;
    }
    let best = frontier.into_iter().next().expect("frontier is never empty");
    Ok((best.score, best.path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{build_qmatrix, ConceptId, PrerequisiteGraph, StudentId};
    use crate::metrics::wcg;
    use crate::sim::BktParams;

    fn eid(i: usize) -> ExerciseId {
        ExerciseId::from(i)
    }

    fn cid(i: usize) -> ConceptId {
        ConceptId::from(i)
    }

    fn tiny_chain() -> (Estimator, TaskSpec) {
        let q = build_qmatrix(
            &[(eid(0), cid(0)), (eid(1), cid(1)), (eid(2), cid(2))],
            3,
            3,
        )
        .unwrap();
        let est = Estimator::new(
            BktParams::uniform(3, 0.2, 0.3, 0.2, 0.1).unwrap(),
            Some(PrerequisiteGraph::chain(3, 3)),
            q,
        )
        .unwrap();
        (est, TaskSpec::gpp(0.5).unwrap())
    }

    fn exhaustive_best(
        est: &Estimator,
        task: &TaskSpec,
        budget: usize,
    ) -> (f64, Vec<ExerciseId>) {
        let h = History::new(StudentId(0));
        let start = env_reset(est, &h, task, budget).unwrap();
        let n = est.qmatrix().n_exercises();
        let mut best: Option<(f64, Vec<ExerciseId>)> = None;
        let total = n.pow(budget as u32);
        for code in 0..total {
            let mut c = code;
            let mut path = Vec::with_capacity(budget);
            for _ in 0..budget {
                path.push(eid(c % n));
                c /= n;
            }
            let mut state = start.clone();
            let mut score = 0.0;
            for &a in &path {
                let (next, r, _) = env_step(&state, a, est, &SimMode::Expected).unwrap();
                score += r;
                state = next;
            }
            let replace = match &best {
                None => true,
                Some((bs, bp)) => score > *bs || (score == *bs && path < *bp),
            };
            if replace {
                best = Some((score, path));
            }
        }
        best.unwrap()
    }

    #[test]
    fn width_one_is_the_myopic_path() {
        let (est, task) = tiny_chain();
        let h = History::new(StudentId(0));
        let (path, _) = beam_plan_scored(&est, &h, &task, 3, 1).unwrap();
        // myopic rollout: at each step take the argmax immediate reward
        let mut state = env_reset(&est, &h, &task, 3).unwrap();
        let mut expected = Vec::new();
        for _ in 0..3 {
            let mut best = (f64::NEG_INFINITY, eid(0));
            for a in 0..3 {
                let (_, r, _) = env_step(&state, eid(a), &est, &SimMode::Expected).unwrap();
                if r > best.0 {
                    best = (r, eid(a));
                }
            }
            let (next, _, _) = env_step(&state, best.1, &est, &SimMode::Expected).unwrap();
            expected.push(best.1);
            state = next;
        }
        assert_eq!(path.steps(), expected.as_slice());
    }

    #[test]
    fn wide_beam_matches_exhaustive_enumeration() {
        let (est, task) = tiny_chain();
        let h = History::new(StudentId(0));
        let (opt_score, opt_path) = exhaustive_best(&est, &task, 3);
        let (path, score) = beam_plan_scored(&est, &h, &task, 3, 27).unwrap();
        assert!((score - opt_score).abs() < 1e-12);
        assert_eq!(path.steps(), opt_path.as_slice());
    }

    #[test]
    fn beam_score_monotone_in_width() {
        let (est, task) = tiny_chain();
        let h = History::new(StudentId(0));
        let mut last = f64::NEG_INFINITY;
        for width in [1, 2, 4, 8, 16, 27] {
            let (_, score) = beam_plan_scored(&est, &h, &task, 3, width).unwrap();
            assert!(score >= last - 1e-15, "width {width} regressed: {score} < {last}");
            last = score;
        }
    }

    #[test]
    fn beam_score_equals_wcg_of_returned_path() {
        let (est, task) = tiny_chain();
        let h = History::new(StudentId(0));
        let start = env_reset(&est, &h, &task, 3).unwrap();
        let (path, score) = beam_plan_scored(&est, &h, &task, 3, 4).unwrap();
        let g = wcg(&est, &h, &path, &start.weights, &SimMode::Expected).unwrap();
        assert!((score - g).abs() < 1e-12);
    }

    #[test]
    fn single_concept_bank_ties_pick_lowest_id() {
        let q = build_qmatrix(&[(eid(0), cid(0)), (eid(1), cid(0))], 2, 1).unwrap();
        let est =
            Estimator::new(BktParams::uniform(1, 0.2, 0.3, 0.2, 0.1).unwrap(), None, q).unwrap();
        let task = TaskSpec::gpp(0.5).unwrap();
        let (path, _) =
            beam_plan_scored(&est, &History::new(StudentId(0)), &task, 3, 2).unwrap();
        assert_eq!(path.steps(), &[eid(0); 3]);
    }

    #[test]
    fn zero_width_is_rejected() {
        let (est, task) = tiny_chain();
        assert!(beam_plan(&est, &History::new(StudentId(0)), &task, 3, 0).is_err());
    }
}
