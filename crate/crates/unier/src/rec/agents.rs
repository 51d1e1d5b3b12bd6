//! Linear function-approximation agents for path generation.
//!
//! Both agents score actions through the shared five-dimensional feature
//! map. The value agent learns with one-step temporal differences under an
//! epsilon-greedy behavior policy; the policy-gradient agent is a one-step
//! actor-critic with a softmax policy over per-action feature scores.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::core::{ExerciseId, LearningPath};
use crate::sim::{Estimator, SimMode};

use super::env::{env_step, EnvState, FeatureMap, Features, FEATURE_DIM};
use super::RecError;

fn dot(w: &[f64], phi: &Features) -> f64 {
    w.iter().zip(phi).map(|(a, b)| a * b).sum()
}

fn all_finite(w: &[f64]) -> bool {
    w.iter().all(|v| v.is_finite())
}

/// Index of the maximal score, ties broken by the lower index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Supplies episode starts for training. The estimator, simulation mode and
/// feature map are fixed per source; `start` may sample a different student
/// (or task instantiation) every episode.
pub trait EpisodeSource {
    fn estimator(&self) -> &Estimator;
    fn mode(&self) -> &SimMode;
    fn feature_map(&self) -> &FeatureMap;
    fn start(&mut self, episode: usize, rng: &mut StdRng) -> Result<EnvState, RecError>;
}

/// An episode source drawing uniformly from a fixed pool of start states.
pub struct EpisodePool<'a> {
    pub estimator: &'a Estimator,
    pub mode: SimMode,
    pub feature_map: FeatureMap,
    pub starts: Vec<EnvState>,
}

impl EpisodeSource for EpisodePool<'_> {
    fn estimator(&self) -> &Estimator {
        self.estimator
    }

    fn mode(&self) -> &SimMode {
        &self.mode
    }

    fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    fn start(&mut self, _episode: usize, rng: &mut StdRng) -> Result<EnvState, RecError> {
        if self.starts.is_empty() {
            return Err(RecError::BadConfig("episode pool is empty".into()));
        }
        let i = rng.gen_range(0..self.starts.len());
        Ok(self.starts[i].clone())
    }
}

/// Value-based agent: linear Q over the feature map, epsilon-greedy
/// exploration decaying linearly over the first half of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQ {
    pub feature_dim: usize,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
}

impl LinearQ {
    pub fn new(alpha: f64, gamma: f64, eps_start: f64, eps_end: f64) -> Result<Self, RecError> {
        if !(alpha > 0.0) {
            return Err(RecError::BadConfig(format!("step size must be positive, got {alpha}")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(RecError::BadConfig(format!("discount must lie in [0, 1), got {gamma}")));
        }
        for e in [eps_start, eps_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(RecError::BadConfig(format!("epsilon must lie in [0, 1], got {e}")));
            }
        }
        Ok(LinearQ {
            feature_dim: FEATURE_DIM,
            weights: vec![0.0; FEATURE_DIM],
            alpha,
            gamma,
            eps_start,
            eps_end,
        })
    }

    pub fn q_value(&self, phi: &Features) -> f64 {
        dot(&self.weights, phi)
    }

    fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        let half = (episodes / 2).max(1);
        if episode >= half {
            self.eps_end
        } else {
            self.eps_start + (self.eps_end - self.eps_start) * episode as f64 / half as f64
        }
    }
}

/// One-step TD training of the value agent. Deterministic given the seed.
pub fn dqn_train<S: EpisodeSource>(
    source: &mut S,
    agent: LinearQ,
    episodes: usize,
    seed: u64,
) -> Result<LinearQ, RecError> {
    if episodes == 0 {
        return Err(RecError::BadConfig("training needs at least one episode".into()));
    }
    let mut agent = agent;
    let mut rng = StdRng::seed_from_u64(seed);
    for episode in 0..episodes {
        let eps = agent.epsilon(episode, episodes);
        let mut state = source.start(episode, &mut rng)?;
        while !state.is_terminal() {
            let est = source.estimator();
            let fmap = *source.feature_map();
            let mode = *source.mode();
            let phis = fmap.all_action_features(&state, est)?;
            let q_values: Vec<f64> = phis.iter().map(|p| agent.q_value(p)).collect();
            let action_idx = if rng.gen::<f64>() < eps {
                rng.gen_range(0..phis.len())
            } else {
                argmax(&q_values)
            };
            let action = ExerciseId::from(action_idx);
            let (next, reward, done) = env_step(&state, action, est, &mode)?;
            let bootstrap = if done {
                0.0
            } else {
                let next_phis = fmap.all_action_features(&next, est)?;
                next_phis
                    .iter()
                    .map(|p| agent.q_value(p))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let delta = reward + agent.gamma * bootstrap - q_values[action_idx];
            for (w, p) in agent.weights.iter_mut().zip(&phis[action_idx]) {
                *w += agent.alpha * delta * p;
            }
            if !all_finite(&agent.weights) {
                return Err(RecError::NonFiniteUpdate);
            }
            state = next;
        }
    }
    Ok(agent)
}

/// Policy-gradient agent: softmax policy over per-action feature scores
/// with a linear state-value critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    pub feature_dim: usize,
    pub prefs: Vec<f64>,
    pub critic: Vec<f64>,
    pub alpha_actor: f64,
    pub alpha_critic: f64,
    pub gamma: f64,
}

impl SoftmaxPolicy {
    pub fn new(alpha_actor: f64, alpha_critic: f64, gamma: f64) -> Result<Self, RecError> {
        if !(alpha_actor > 0.0 && alpha_critic > 0.0) {
            return Err(RecError::BadConfig("step sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(RecError::BadConfig(format!("discount must lie in [0, 1), got {gamma}")));
        }
        Ok(SoftmaxPolicy {
            feature_dim: FEATURE_DIM,
            prefs: vec![0.0; FEATURE_DIM],
            critic: vec![0.0; FEATURE_DIM],
            alpha_actor,
            alpha_critic,
            gamma,
        })
    }

    pub fn scores(&self, phis: &[Features]) -> Vec<f64> {
        phis.iter().map(|p| dot(&self.prefs, p)).collect()
    }

    /// Action distribution: softmax of the preference scores.
    pub fn action_probs(&self, phis: &[Features]) -> Vec<f64> {
        softmax(&self.scores(phis))
    }

    /// log pi(a | s); finite because softmax never hits exact zero.
    pub fn action_log_prob(&self, phis: &[Features], action: usize) -> f64 {
        let scores = self.scores(phis);
        let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_z = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
        scores[action] - log_z
    }

    /// Analytic gradient of log pi(a | s) with respect to the preference
    /// weights: phi(s, a) minus the policy-expected feature vector.
    pub fn log_prob_gradient(&self, phis: &[Features], action: usize) -> Features {
        let probs = self.action_probs(phis);
        let mut grad = phis[action];
        for (p, phi) in probs.iter().zip(phis) {
            for (g, x) in grad.iter_mut().zip(phi) {
                *g -= p * x;
            }
        }
        grad
    }

    pub fn value(&self, psi: &Features) -> f64 {
        dot(&self.critic, psi)
    }

    fn sample_action(&self, phis: &[Features], rng: &mut StdRng) -> usize {
        let probs = self.action_probs(phis);
        let mut u = rng.gen::<f64>();
        for (i, &p) in probs.iter().enumerate() {
            if u < p {
                return i;
            }
            u -= p;
        }
        probs.len() - 1
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// One-step actor-critic training. Deterministic given the seed.
pub fn ac_train<S: EpisodeSource>(
    source: &mut S,
    agent: SoftmaxPolicy,
    episodes: usize,
    seed: u64,
) -> Result<SoftmaxPolicy, RecError> {
    if episodes == 0 {
        return Err(RecError::BadConfig("training needs at least one episode".into()));
    }
    let mut agent = agent;
    let mut rng = StdRng::seed_from_u64(seed);
    for episode in 0..episodes {
        let mut state = source.start(episode, &mut rng)?;
        while !state.is_terminal() {
            let est = source.estimator();
            let fmap = *source.feature_map();
            let mode = *source.mode();
            let phis = fmap.all_action_features(&state, est)?;
            let action_idx = agent.sample_action(&phis, &mut rng);
            let action = ExerciseId::from(action_idx);
            let (next, reward, done) = env_step(&state, action, est, &mode)?;
            let psi = fmap.state_features(&state, est);
            let v_next = if done { 0.0 } else { agent.value(&fmap.state_features(&next, est)) };
            let delta = reward + agent.gamma * v_next - agent.value(&psi);
            for (w, x) in agent.critic.iter_mut().zip(&psi) {
                *w += agent.alpha_critic * delta * x;
            }
            let grad = agent.log_prob_gradient(&phis, action_idx);
            for (w, g) in agent.prefs.iter_mut().zip(&grad) {
                *w += agent.alpha_actor * delta * g;
            }
            if !all_finite(&agent.prefs) || !all_finite(&agent.critic) {
                return Err(RecError::NonFiniteUpdate);
            }
            state = next;
        }
    }
    Ok(agent)
}

/// Anything that can pick the next exercise from per-action features.
pub trait PathPolicy {
    /// Greedy action selection; ties go to the lower exercise id.
    fn select_greedy(&self, phis: &[Features]) -> usize;
}

impl PathPolicy for LinearQ {
    fn select_greedy(&self, phis: &[Features]) -> usize {
        argmax(&phis.iter().map(|p| self.q_value(p)).collect::<Vec<_>>())
    }
}

impl PathPolicy for SoftmaxPolicy {
    fn select_greedy(&self, phis: &[Features]) -> usize {
        // argmax probability == argmax preference score
        argmax(&self.scores(phis))
    }
}

/// Rolls the environment forward for the full budget, taking the agent's
/// greedy action at every step. Deterministic in Expected mode.
pub fn agent_recommend<P: PathPolicy>(
    agent: &P,
    est: &Estimator,
    fmap: &FeatureMap,
    start: EnvState,
    mode: &SimMode,
) -> Result<LearningPath, RecError> {
    let mut state = start;
    let mut steps = Vec::with_capacity(state.budget);
    while !state.is_terminal() {
        let phis = fmap.all_action_features(&state, est)?;
        let action = ExerciseId::from(agent.select_greedy(&phis));
        steps.push(action);
        let (next, _, _) = env_step(&state, action, est, mode)?;
        state = next;
    }
    Ok(LearningPath(steps))
}

/// A trained agent of either family, as serialized by the train command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedAgent {
    Dqn(LinearQ),
    Ac(SoftmaxPolicy),
}

impl PathPolicy for TrainedAgent {
    fn select_greedy(&self, phis: &[Features]) -> usize {
        match self {
            TrainedAgent::Dqn(a) => a.select_greedy(phis),
            TrainedAgent::Ac(a) => a.select_greedy(phis),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{build_qmatrix, ConceptId, PrerequisiteGraph, StudentId};
    use crate::metrics::TaskSpec;
    use crate::rec::env::env_reset;
    use crate::core::History;
    use crate::sim::BktParams;

    fn eid(i: usize) -> ExerciseId {
        ExerciseId::from(i)
    }

    fn cid(i: usize) -> ConceptId {
        ConceptId::from(i)
    }

    fn two_concept_chain() -> (Estimator, TaskSpec) {
        let q = build_qmatrix(
            &[(eid(0), cid(0)), (eid(1), cid(1)), (eid(2), cid(0)), (eid(3), cid(1))],
            4,
            2,
        )
        .unwrap();
        let est = Estimator::new(
            BktParams::uniform(2, 0.1, 0.35, 0.2, 0.1).unwrap(),
            Some(PrerequisiteGraph::chain(2, 2)),
            q,
        )
        .unwrap();
        (est, TaskSpec::gpp(0.5).unwrap())
    }

    #[test]
    fn td_update_single_step_by_hand() {
        // w starts at zero; phi = [1,0,0,0,0]; r = 1; terminal next state.
        // delta = 1 - 0; w_0 <- 0 + 0.1 * 1 * 1 = 0.1
        let agent = LinearQ::new(0.1, 0.9, 0.0, 0.0).unwrap();
        let mut w = agent.weights.clone();
        let phi: Features = [1.0, 0.0, 0.0, 0.0, 0.0];
        let delta = 1.0 + 0.0 - dot(&w, &phi);
        for (wi, p) in w.iter_mut().zip(&phi) {
            *wi += agent.alpha * delta * p;
        }
        assert_eq!(w, vec![0.1, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn greedy_selection_is_argmax_with_low_id_ties() {
        let mut agent = LinearQ::new(0.1, 0.9, 0.0, 0.0).unwrap();
        agent.weights = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        let phis: Vec<Features> = vec![
            [0.1, 0.0, 0.0, 0.0, 1.0],
            [0.9, 0.0, 0.0, 0.0, 1.0],
            [0.9, 0.0, 0.0, 0.0, 1.0],
        ];
        assert_eq!(agent.select_greedy(&phis), 1);
    }

    #[test]
    fn zero_reward_environment_is_a_fixed_point() {
        let q = build_qmatrix(&[(eid(0), cid(0))], 1, 1).unwrap();
        let est =
            Estimator::new(BktParams::uniform(1, 0.9, 0.3, 0.2, 0.1).unwrap(), None, q).unwrap();
        // all concepts mastered -> zero weights -> zero rewards everywhere
        let task = TaskSpec::gpp(0.5).unwrap();
        let start = env_reset(&est, &History::new(StudentId(0)), &task, 3).unwrap();
        assert!(start.weights.is_zero());
        let mut pool = EpisodePool {
            estimator: &est,
            mode: SimMode::Expected,
            feature_map: FeatureMap::default(),
            starts: vec![start],
        };
        let agent = LinearQ::new(0.1, 0.9, 1.0, 0.05).unwrap();
        let trained = dqn_train(&mut pool, agent, 50, 0).unwrap();
        assert_eq!(trained.weights, vec![0.0; FEATURE_DIM]);
    }

    #[test]
    fn dqn_training_is_deterministic_and_learns_the_chain() {
        let (est, task) = two_concept_chain();
        let start = env_reset(&est, &History::new(StudentId(0)), &task, 4).unwrap();
        let make_pool = || EpisodePool {
            estimator: &est,
            mode: SimMode::Expected,
            feature_map: FeatureMap::default(),
            starts: vec![start.clone()],
        };
        let agent = LinearQ::new(0.05, 0.9, 1.0, 0.05).unwrap();
        let a = dqn_train(&mut make_pool(), agent.clone(), 600, 7).unwrap();
        let b = dqn_train(&mut make_pool(), agent, 600, 7).unwrap();
        assert_eq!(a, b);
        let path =
            agent_recommend(&a, &est, &FeatureMap::default(), start.clone(), &SimMode::Expected)
                .unwrap();
        assert_eq!(path.len(), 4);
        // the prerequisite concept must be practiced before the dependent one
        let first_c0 = path.steps().iter().position(|&e| e == eid(0) || e == eid(2));
        let first_c1 = path.steps().iter().position(|&e| e == eid(1) || e == eid(3));
        if let (Some(i0), Some(i1)) = (first_c0, first_c1) {
            assert!(i0 < i1, "prerequisite practiced after dependent: {:?}", path.steps());
        } else {
            assert!(first_c0.is_some(), "agent never practices the prerequisite");
        }
    }

    #[test]
    fn softmax_uniform_at_zero_prefs_and_shift_invariant() {
        let agent = SoftmaxPolicy::new(0.1, 0.1, 0.9).unwrap();
        let phis: Vec<Features> = vec![
            [0.3, 0.0, 1.0, 0.0, 1.0],
            [0.9, 1.0, 0.2, 0.0, 1.0],
            [0.1, 0.5, 0.5, 0.0, 1.0],
        ];
        let probs = agent.action_probs(&phis);
        for &p in &probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        // adding a constant to all scores leaves the distribution unchanged:
        // the bias feature is identical across actions, so shifting the bias
        // weight shifts every score equally.
        let mut shifted = agent.clone();
        shifted.prefs = vec![0.4, -0.2, 0.1, 0.0, 0.0];
        let base = shifted.action_probs(&phis);
        shifted.prefs[4] += 5.0;
        let after = shifted.action_probs(&phis);
        for (a, b) in base.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..50 {
            let n_actions = rng.gen_range(2..6);
            let phis: Vec<Features> = (0..n_actions)
                .map(|_| {
                    let mut p = [0.0; FEATURE_DIM];
                    for x in p.iter_mut() {
                        *x = rng.gen_range(-1.0..1.0);
                    }
                    p
                })
                .collect();
            let mut agent = SoftmaxPolicy::new(0.1, 0.1, 0.9).unwrap();
            for w in agent.prefs.iter_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
            let action = rng.gen_range(0..n_actions);
            let analytic = agent.log_prob_gradient(&phis, action);
            let h = 1e-5;
            for i in 0..FEATURE_DIM {
                let mut plus = agent.clone();
                plus.prefs[i] += h;
                let mut minus = agent.clone();
                minus.prefs[i] -= h;
                let fd = (plus.action_log_prob(&phis, action)
                    - minus.action_log_prob(&phis, action))
                    / (2.0 * h);
                let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (analytic[i] - fd).abs() / denom < 1e-5,
                    "component {i}: analytic {} vs fd {fd}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn ac_training_runs_and_is_deterministic() {
        let (est, task) = two_concept_chain();
        let start = env_reset(&est, &History::new(StudentId(0)), &task, 4).unwrap();
        let make_pool = || EpisodePool {
            estimator: &est,
            mode: SimMode::Expected,
            feature_map: FeatureMap::default(),
            starts: vec![start.clone()],
        };
        let agent = SoftmaxPolicy::new(0.2, 0.1, 0.9).unwrap();
        let a = ac_train(&mut make_pool(), agent.clone(), 400, 13).unwrap();
        let b = ac_train(&mut make_pool(), agent, 400, 13).unwrap();
        assert_eq!(a, b);
        let path =
            agent_recommend(&a, &est, &FeatureMap::default(), start, &SimMode::Expected).unwrap();
        assert_eq!(path.len(), 4);
    }

    #[test]
    fn agent_json_round_trip() {
        let mut q = LinearQ::new(0.1, 0.9, 1.0, 0.05).unwrap();
        q.weights = vec![0.5, -0.25, 0.0, 1.5, 2.0];
        let agent = TrainedAgent::Dqn(q);
        let json = serde_json::to_string(&agent).unwrap();
        let back: TrainedAgent = serde_json::from_str(&json).unwrap();
        assert_eq!(agent, back);
        assert!(json.contains("\"kind\":\"dqn\""));
        assert!(json.contains("\"feature_dim\":5"));
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(LinearQ::new(0.0, 0.9, 1.0, 0.05).is_err());
        assert!(LinearQ::new(0.1, 1.0, 1.0, 0.05).is_err());
        assert!(LinearQ::new(0.1, 0.9, 1.5, 0.05).is_err());
        assert!(SoftmaxPolicy::new(0.1, 0.0, 0.9).is_err());
        assert!(SoftmaxPolicy::new(0.1, 0.1, 1.0).is_err());
    }
}
