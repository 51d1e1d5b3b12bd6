//! The sequential decision environment over the simulator.
//!
//! A state is the current mastery estimate plus the frozen task weights and
//! the step budget. Stepping an action simulates one exercise attempt and
//! pays the weighted mastery gain as reward, so the per-episode reward sum
//! telescopes to the weighted cognitive gain of the executed path.

use crate::core::{ExerciseId, LearningPath, MasteryVector, WeightVector};
use crate::metrics::TaskSpec;
use crate::seed;
use crate::core::History;
use crate::sim::{gate_value, Estimator, SimMode};

use super::RecError;

/// Dimension of the hand-crafted feature map shared by all agents.
pub const FEATURE_DIM: usize = 5;

pub type Features = [f64; FEATURE_DIM];

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub mastery: MasteryVector,
    pub weights: WeightVector,
    pub step_index: usize,
    pub budget: usize,
}

impl EnvState {
    pub fn is_terminal(&self) -> bool {
        self.step_index >= self.budget
    }
}

/// Initial state for a student: mastery from the history, weights from the
/// task (frozen for the whole episode), step counter at zero.
pub fn env_reset(
    est: &Estimator,
    h: &History,
    task: &TaskSpec,
    budget: usize,
) -> Result<EnvState, RecError> {
    let mastery = est.estimate(h)?;
    let weights = task.weights(&mastery)?;
    Ok(EnvState { mastery, weights, step_index: 0, budget })
}

/// Applies one recommended exercise. The mastery transition is the one-step
/// simulation under `mode`; the reward is the weighted mastery gain.
pub fn env_step(
    state: &EnvState,
    action: ExerciseId,
    est: &Estimator,
    mode: &SimMode,
) -> Result<(EnvState, f64, bool), RecError> {
    if state.is_terminal() {
        return Err(RecError::TerminalState);
    }
    est.qmatrix().validate_exercise(action)?;
    let next_mastery = match *mode {
        SimMode::Expected => est.expected_step(&state.mastery, action)?.0,
        SimMode::Sampled { rollouts, seed: base } => {
            // Vary the stream by step index so consecutive steps draw
            // independently while the function stays pure in its inputs.
            let mode = SimMode::Sampled {
                rollouts,
                seed: seed::derive(base, state.step_index as u64),
            };
            est.simulate_from(&state.mastery, &LearningPath(vec![action]), &mode)?
                .final_mastery
        }
    };
    let reward = crate::metrics::weighted_gain(&state.weights, &state.mastery, &next_mastery);
    let next = EnvState {
        mastery: next_mastery,
        weights: state.weights.clone(),
        step_index: state.step_index + 1,
        budget: state.budget,
    };
    let done = next.step_index >= next.budget;
    Ok((next, reward, done))
}

/// The five-dimensional feature map used by both the value-based and the
/// policy-gradient agent:
///
/// 1. summed weighted gap of the action's concepts,
/// 2. fraction of the action's concepts below the mastery threshold,
/// 3. mean prerequisite gate over the action's concepts,
/// 4. normalized step index,
/// 5. constant bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMap {
    pub mastery_threshold: f64,
}

impl Default for FeatureMap {
    fn default() -> Self {
        FeatureMap { mastery_threshold: 0.5 }
    }
}

impl FeatureMap {
    pub fn action_features(
        &self,
        state: &EnvState,
        action: ExerciseId,
        est: &Estimator,
    ) -> Result<Features, RecError> {
        let concepts = est.qmatrix().concepts_of(action)?;
        let n = concepts.len() as f64;
        let mut weighted_gap = 0.0;
        let mut below = 0.0;
        let mut gate_sum = 0.0;
        for &c in concepts {
            let m = state.mastery.get(c);
            weighted_gap += state.weights.get(c) * (1.0 - m);
            if m < self.mastery_threshold {
                below += 1.0;
            }
            gate_sum += gate_value(&state.mastery, est.prereqs(), c);
        }
        Ok([
            weighted_gap,
            below / n,
            gate_sum / n,
            normalized_step(state),
            1.0,
        ])
    }

    /// State-level analogue aggregated over all concepts; the critic's view.
    pub fn state_features(&self, state: &EnvState, est: &Estimator) -> Features {
        let n = state.mastery.len() as f64;
        let mut weighted_gap = 0.0;
        let mut below = 0.0;
        let mut gate_sum = 0.0;
        for c in est.qmatrix().concept_ids() {
            let m = state.mastery.get(c);
            weighted_gap += state.weights.get(c) * (1.0 - m);
            if m < self.mastery_threshold {
                below += 1.0;
            }
            gate_sum += gate_value(&state.mastery, est.prereqs(), c);
        }
        [weighted_gap, below / n, gate_sum / n, normalized_step(state), 1.0]
    }

    /// Feature vectors for every exercise in the bank, indexed by id.
    pub fn all_action_features(
        &self,
        state: &EnvState,
        est: &Estimator,
    ) -> Result<Vec<Features>, RecError> {
        est.qmatrix()
            .exercise_ids()
            .map(|e| self.action_features(state, e, est))
            .collect()
    }
}

fn normalized_step(state: &EnvState) -> f64 {
    if state.budget == 0 {
        0.0
    } else {
        state.step_index as f64 / state.budget as f64
    }
}
