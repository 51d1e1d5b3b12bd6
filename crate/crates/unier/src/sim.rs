//! The knowledge state simulator.
//!
//! A Bayesian knowledge-tracing model with per-concept prior, learning,
//! guess and slip probabilities plays two roles at once: it is the
//! estimator that turns an interaction history into a mastery vector, and
//! it is the response generator used to simulate a student working through
//! a recommended path.
//!
//! The response model for an exercise averages mastery, guess and slip
//! over the covered concepts:
//!
//! ```text
//! P(correct) = mean(m) * (1 - mean(slip)) + (1 - mean(m)) * mean(guess)
//! ```
//!
//! After an observation, each covered concept receives a Bayesian posterior
//! under its own single-concept response model, followed by a learning
//! transit `m' = post + (1 - post) * p_learn * gate(c)`, where `gate(c)` is
//! the mean mastery of the concept's prerequisites (1 if it has none).
//! Because the posterior is a martingale and the transit is affine, the
//! expected one-step update on a flat graph collapses to the closed form
//! `m' = m + (1 - m) * p_learn`, independent of guess and slip. That closed
//! form is the backbone of the test suite.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{
    ConceptId, CoreError, ExerciseId, History, MasteryVector, LearningPath, PrerequisiteGraph,
    QMatrix,
};
use crate::seed;

/// Probabilities are clamped into this interval before use so Bayes
/// denominators never vanish.
pub const PROB_CLAMP: (f64, f64) = (0.001, 0.999);

/// Fallback per-concept parameters for concepts with no observations.
pub const DEFAULT_PARAMS: (f64, f64, f64, f64) = (0.3, 0.2, 0.2, 0.1);

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("parameter vectors must all have length {expected}, got {got}")]
    ParamLength { expected: usize, got: usize },
    #[error("p_guess + p_slip must be < 1 for concept {0} (got {1})")]
    GuessSlipSum(usize, f64),
    #[error("sampled mode requires at least one rollout")]
    ZeroRollouts,
    #[error("cannot fit parameters from an empty log set")]
    EmptyLogs,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP.0, PROB_CLAMP.1)
}

/// Per-concept knowledge-tracing parameters.
///
/// Serializes as a JSON document of four arrays indexed by concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBktParams")]
pub struct BktParams {
    p_init: Vec<f64>,
    p_learn: Vec<f64>,
    p_guess: Vec<f64>,
    p_slip: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBktParams {
    p_init: Vec<f64>,
    p_learn: Vec<f64>,
    p_guess: Vec<f64>,
    p_slip: Vec<f64>,
}

impl TryFrom<RawBktParams> for BktParams {
    type Error = SimError;

    fn try_from(raw: RawBktParams) -> Result<Self, SimError> {
        BktParams::new(raw.p_init, raw.p_learn, raw.p_guess, raw.p_slip)
    }
}

impl BktParams {
    /// Validates and clamps the four parameter vectors. All probabilities
    /// are clamped to [0.001, 0.999]; guess + slip must stay below 1.
    pub fn new(
        p_init: Vec<f64>,
        p_learn: Vec<f64>,
        p_guess: Vec<f64>,
        p_slip: Vec<f64>,
    ) -> Result<Self, SimError> {
        let n = p_init.len();
        for (len, _) in [(p_learn.len(), "p_learn"), (p_guess.len(), "p_guess"), (p_slip.len(), "p_slip")] {
            if len != n {
                return Err(SimError::ParamLength { expected: n, got: len });
            }
        }
        let clamp_all = |v: Vec<f64>| v.into_iter().map(clamp_prob).collect::<Vec<_>>();
        let (p_init, p_learn, p_guess, p_slip) =
            (clamp_all(p_init), clamp_all(p_learn), clamp_all(p_guess), clamp_all(p_slip));
        for c in 0..n {
            let sum = p_guess[c] + p_slip[c];
            if sum >= 1.0 {
                return Err(SimError::GuessSlipSum(c, sum));
            }
        }
        Ok(BktParams { p_init, p_learn, p_guess, p_slip })
    }

    /// Same parameters for every concept.
    pub fn uniform(
        n_concepts: usize,
        p_init: f64,
        p_learn: f64,
        p_guess: f64,
        p_slip: f64,
    ) -> Result<Self, SimError> {
        BktParams::new(
            vec![p_init; n_concepts],
            vec![p_learn; n_concepts],
            vec![p_guess; n_concepts],
            vec![p_slip; n_concepts],
        )
    }

    pub fn n_concepts(&self) -> usize {
        self.p_init.len()
    }

    pub fn p_init(&self, c: ConceptId) -> f64 {
        self.p_init[c.index()]
    }

    pub fn p_learn(&self, c: ConceptId) -> f64 {
        self.p_learn[c.index()]
    }

    pub fn p_guess(&self, c: ConceptId) -> f64 {
        self.p_guess[c.index()]
    }

    pub fn p_slip(&self, c: ConceptId) -> f64 {
        self.p_slip[c.index()]
    }

    /// The prior mastery vector.
    pub fn initial_mastery(&self) -> MasteryVector {
        MasteryVector::new(self.p_init.clone()).expect("clamped priors are in range")
    }
}

/// How simulated responses are generated when executing a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SimMode {
    /// Deterministic: each step mixes the correct/incorrect update branches
    /// by their predicted probabilities.
    Expected,
    /// Monte Carlo: correctness is drawn per rollout from a seeded stream
    /// and the returned mastery is the rollout mean.
    Sampled { rollouts: u32, seed: u64 },
}

impl SimMode {
    pub fn validate(&self) -> Result<(), SimError> {
        if let SimMode::Sampled { rollouts: 0, .. } = self {
            return Err(SimError::ZeroRollouts);
        }
        Ok(())
    }
}

/// Probability that a student with mastery `m` answers exercise `e`
/// correctly. Mastery, guess and slip are averaged over the covered
/// concepts; the result lies strictly inside (0, 1).
pub fn predict_correct(
    m: &MasteryVector,
    e: ExerciseId,
    params: &BktParams,
    q: &QMatrix,
) -> Result<f64, SimError> {
    let concepts = q.concepts_of(e)?;
    let n = concepts.len() as f64;
    let (mut m_bar, mut guess_bar, mut slip_bar) = (0.0, 0.0, 0.0);
    for &c in concepts {
        m_bar += m.get(c);
        guess_bar += params.p_guess(c);
        slip_bar += params.p_slip(c);
    }
    m_bar /= n;
    guess_bar /= n;
    slip_bar /= n;
    Ok(m_bar * (1.0 - slip_bar) + (1.0 - m_bar) * guess_bar)
}

/// One observed interaction: Bayesian posterior plus gated learning transit
/// on every concept the exercise covers. Concepts not covered are unchanged.
///
/// Prerequisite gates are evaluated on the pre-update mastery snapshot, so
/// updates to disjoint concepts commute.
pub fn bkt_update(
    m: &MasteryVector,
    e: ExerciseId,
    observed: bool,
    params: &BktParams,
    q: &QMatrix,
    prereqs: &PrerequisiteGraph,
) -> Result<MasteryVector, SimError> {
    let concepts = q.concepts_of(e)?;
    let mut out = m.clone();
    for &c in concepts {
        let prior = m.get(c);
        let guess = params.p_guess(c);
        let slip = params.p_slip(c);
        let posterior = if observed {
            let evidence = prior * (1.0 - slip) + (1.0 - prior) * guess;
            prior * (1.0 - slip) / evidence
        } else {
            let evidence = prior * slip + (1.0 - prior) * (1.0 - guess);
            prior * slip / evidence
        };
        let gate = gate_value(m, prereqs, c);
        let learn_eff = params.p_learn(c) * gate;
        let next = posterior + (1.0 - posterior) * learn_eff;
        out.set(c, next.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Mean mastery of a concept's prerequisites; 1 when it has none.
pub fn gate_value(m: &MasteryVector, prereqs: &PrerequisiteGraph, c: ConceptId) -> f64 {
    m.mean_over(prereqs.prerequisites_of(c))
}

/// Per-step record of a simulated path execution. In Expected mode
/// `correctness` is the predicted probability of a correct answer; in
/// Sampled mode it is the fraction of rollouts that answered correctly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub exercise: ExerciseId,
    pub correctness: f64,
}

/// Result of executing a path against the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub final_mastery: MasteryVector,
    pub steps: Vec<StepRecord>,
}

/// The shared knowledge-state estimator. Stateless with respect to
/// students: mastery is always derived from a supplied history.
#[derive(Debug, Clone)]
pub struct Estimator {
    params: BktParams,
    prereqs: PrerequisiteGraph,
    q: QMatrix,
}

impl Estimator {
    pub fn new(
        params: BktParams,
        prereqs: Option<PrerequisiteGraph>,
        q: QMatrix,
    ) -> Result<Self, SimError> {
        if params.n_concepts() != q.n_concepts() {
            return Err(SimError::ParamLength {
                expected: q.n_concepts(),
                got: params.n_concepts(),
            });
        }
        let prereqs = prereqs.unwrap_or_else(|| PrerequisiteGraph::flat(q.n_concepts()));
        if prereqs.n_concepts() != q.n_concepts() {
            return Err(SimError::ParamLength {
                expected: q.n_concepts(),
                got: prereqs.n_concepts(),
            });
        }
        Ok(Estimator { params, prereqs, q })
    }

    pub fn params(&self) -> &BktParams {
        &self.params
    }

    pub fn prereqs(&self) -> &PrerequisiteGraph {
        &self.prereqs
    }

    pub fn qmatrix(&self) -> &QMatrix {
        &self.q
    }

    pub fn n_concepts(&self) -> usize {
        self.q.n_concepts()
    }

    /// Folds the history through the update rule, starting from the prior.
    pub fn estimate(&self, h: &History) -> Result<MasteryVector, SimError> {
        let mut m = self.params.initial_mastery();
        for it in h.items() {
            m = bkt_update(&m, it.exercise, it.correct, &self.params, &self.q, &self.prereqs)?;
        }
        Ok(m)
    }

    /// Deterministic expected-mode one-step update: the probability-weighted
    /// mixture of the correct and incorrect branches. Returns the new
    /// mastery and the predicted correctness probability.
    pub fn expected_step(
        &self,
        m: &MasteryVector,
        e: ExerciseId,
    ) -> Result<(MasteryVector, f64), SimError> {
        let p = predict_correct(m, e, &self.params, &self.q)?;
        let up = bkt_update(m, e, true, &self.params, &self.q, &self.prereqs)?;
        let down = bkt_update(m, e, false, &self.params, &self.q, &self.prereqs)?;
        let mixed: Vec<f64> = up
            .as_slice()
            .iter()
            .zip(down.as_slice())
            .map(|(&a, &b)| (p * a + (1.0 - p) * b).clamp(0.0, 1.0))
            .collect();
        Ok((MasteryVector::new(mixed)?, p))
    }

    /// Executes a path starting from the mastery implied by `h`.
    pub fn simulate_path(
        &self,
        h: &History,
        path: &LearningPath,
        mode: &SimMode,
    ) -> Result<SimOutcome, SimError> {
        mode.validate()?;
        let start = self.estimate(h)?;
        self.simulate_from(&start, path, mode)
    }

    /// Executes a path from an explicit starting mastery.
    pub fn simulate_from(
        &self,
        start: &MasteryVector,
        path: &LearningPath,
        mode: &SimMode,
    ) -> Result<SimOutcome, SimError> {
        mode.validate()?;
        for &e in path.steps() {
            self.q.validate_exercise(e)?;
        }
        match *mode {
            SimMode::Expected => {
                let mut m = start.clone();
                let mut steps = Vec::with_capacity(path.len());
                for &e in path.steps() {
                    let (next, p) = self.expected_step(&m, e)?;
                    steps.push(StepRecord { exercise: e, correctness: p });
                    m = next;
                }
                Ok(SimOutcome { final_mastery: m, steps })
            }
            SimMode::Sampled { rollouts, seed: base_seed } => {
                let n = self.q.n_concepts();
                let mut mastery_sum = vec![0.0f64; n];
                let mut correct_sum = vec![0.0f64; path.len()];
                for r in 0..rollouts {
                    let mut rng = StdRng::seed_from_u64(seed::derive(base_seed, r as u64));
                    let mut m = start.clone();
                    for (i, &e) in path.steps().iter().enumerate() {
                        let p = predict_correct(&m, e, &self.params, &self.q)?;
                        let correct = rng.gen::<f64>() < p;
                        if correct {
                            correct_sum[i] += 1.0;
                        }
                        m = bkt_update(&m, e, correct, &self.params, &self.q, &self.prereqs)?;
                    }
                    for (acc, &v) in mastery_sum.iter_mut().zip(m.as_slice()) {
                        *acc += v;
                    }
                }
                let scale = 1.0 / rollouts as f64;
                let final_mastery = MasteryVector::new(
                    mastery_sum.iter().map(|&v| (v * scale).clamp(0.0, 1.0)).collect(),
                )?;
                let steps = path
                    .steps()
                    .iter()
                    .zip(&correct_sum)
                    .map(|(&e, &c)| StepRecord { exercise: e, correctness: c * scale })
                    .collect();
                Ok(SimOutcome { final_mastery, steps })
            }
        }
    }

    /// A stable 64-bit digest of the estimator's parameters, prerequisite
    /// graph and Q-matrix. Report rows carry it so fairness (one shared
    /// estimator per run) is checkable after the fact.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for v in [&self.params.p_init, &self.params.p_learn, &self.params.p_guess, &self.params.p_slip]
        {
            for &x in v.iter() {
                h.write_u64(x.to_bits());
            }
        }
        for (a, b) in self.prereqs.edges() {
            h.write_u64(a.0 as u64);
            h.write_u64(b.0 as u64);
        }
        h.write_u64(self.q.n_exercises() as u64);
        h.write_u64(self.q.n_concepts() as u64);
        for (e, c) in self.q.pairs() {
            h.write_u64(e.0 as u64);
            h.write_u64(c.0 as u64);
        }
        h.finish()
    }
}

// FNV-1a; fixed keys so fingerprints are stable across runs and platforms.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// A synthetic student with a hidden mastery state. Used to generate
/// interaction logs; recommenders never see the hidden state.
#[derive(Debug, Clone)]
pub struct GroundTruthStudent {
    mastery: MasteryVector,
    params: BktParams,
    prereqs: PrerequisiteGraph,
    rng: StdRng,
}

impl GroundTruthStudent {
    pub fn new(
        initial: MasteryVector,
        params: BktParams,
        prereqs: PrerequisiteGraph,
        seed: u64,
    ) -> Result<Self, SimError> {
        if initial.len() != params.n_concepts() {
            return Err(SimError::ParamLength {
                expected: params.n_concepts(),
                got: initial.len(),
            });
        }
        Ok(GroundTruthStudent {
            mastery: initial,
            params,
            prereqs,
            rng: StdRng::seed_from_u64(seed),
        })
    }

    /// Draws a response from the hidden state and folds the observation
    /// back into it. Deterministic given the construction seed.
    pub fn respond(&mut self, e: ExerciseId, q: &QMatrix) -> Result<bool, SimError> {
        let p = predict_correct(&self.mastery, e, &self.params, q)?;
        let correct = self.rng.gen::<f64>() < p;
        self.mastery = bkt_update(&self.mastery, e, correct, &self.params, q, &self.prereqs)?;
        Ok(correct)
    }

    /// Read access for meta-evaluation; never fed to recommenders.
    pub fn hidden_mastery(&self) -> &MasteryVector {
        &self.mastery
    }

    pub fn params(&self) -> &BktParams {
        &self.params
    }
}

const INIT_LEARN_GRID_STEPS: u32 = 19; // 0.05 .. 0.95
const GUESS_SLIP_GRID_STEPS: u32 = 8; // 0.05 .. 0.40

fn grid(steps: u32) -> impl Iterator<Item = f64> {
    // i/20 rather than i*0.05: both hit the intended 0.05 lattice, but this
    // form lands on the doubles that print cleanly (0.3, not 0.30000000000000004)
    (1..=steps).map(|i| i as f64 / 20.0)
}

/// Fits per-concept parameters by exhaustive grid search, maximizing the
/// log-likelihood of the observed correctness under the forward filter.
///
/// Grids: {0.05, 0.10, ..., 0.95} for init/learn, {0.05, ..., 0.40} for
/// guess/slip. Ties break toward smaller guess+slip, then lexicographically
/// smaller (init, learn, guess, slip). Concepts with no observations keep
/// [`DEFAULT_PARAMS`].
pub fn fit_bkt(logs: &[History], q: &QMatrix) -> Result<BktParams, SimError> {
    if logs.is_empty() {
        return Err(SimError::EmptyLogs);
    }
    let n = q.n_concepts();
    // Per concept, per student: the correctness subsequence of interactions
    // covering that concept. The fit is a flat single-concept filter.
    let mut obs: Vec<Vec<Vec<bool>>> = vec![Vec::new(); n];
    for h in logs {
        let mut per_concept: Vec<Vec<bool>> = vec![Vec::new(); n];
        for it in h.items() {
            for &c in q.concepts_of(it.exercise)? {
                per_concept[c.index()].push(it.correct);
            }
        }
        for (c, seq) in per_concept.into_iter().enumerate() {
            if !seq.is_empty() {
                obs[c].push(seq);
            }
        }
    }
    let (mut init, mut learn, mut guess, mut slip) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for c in 0..n {
        let fitted = if obs[c].is_empty() {
            DEFAULT_PARAMS
        } else {
            fit_single_concept(&obs[c])
        };
        init[c] = fitted.0;
        learn[c] = fitted.1;
        guess[c] = fitted.2;
        slip[c] = fitted.3;
    }
    BktParams::new(init, learn, guess, slip)
}

fn fit_single_concept(seqs: &[Vec<bool>]) -> (f64, f64, f64, f64) {
    let mut best = DEFAULT_PARAMS;
    let mut best_ll = f64::NEG_INFINITY;
    for p_init in grid(INIT_LEARN_GRID_STEPS) {
        for p_learn in grid(INIT_LEARN_GRID_STEPS) {
            for p_guess in grid(GUESS_SLIP_GRID_STEPS) {
                for p_slip in grid(GUESS_SLIP_GRID_STEPS) {
                    if p_guess + p_slip >= 1.0 {
                        continue;
                    }
                    let ll = forward_ll(seqs, p_init, p_learn, p_guess, p_slip);
                    let cand = (p_init, p_learn, p_guess, p_slip);
                    if ll > best_ll
                        || (ll == best_ll && tie_break(cand) < tie_break(best))
                    {
                        best_ll = ll;
                        best = cand;
                    }
                }
            }
        }
    }
    best
}

fn tie_break(p: (f64, f64, f64, f64)) -> (f64, f64, f64, f64, f64) {
    (p.2 + p.3, p.0, p.1, p.2, p.3)
}

/// Total log-likelihood of the correctness sequences under the forward
/// single-concept filter. Exposed for oracle checks in tests.
pub fn forward_ll(seqs: &[Vec<bool>], p_init: f64, p_learn: f64, p_guess: f64, p_slip: f64) -> f64 {
    let mut ll = 0.0;
    for seq in seqs {
        let mut m = p_init;
        // Probabilities are accumulated as a running product and flushed to
        // log space periodically to avoid underflow on long sequences.
        let mut prod = 1.0f64;
        let mut pending = 0u32;
        for &correct in seq {
            let p = m * (1.0 - p_slip) + (1.0 - m) * p_guess;
            prod *= if correct { p } else { 1.0 - p };
            pending += 1;
            if pending == 32 {
                ll += prod.ln();
                prod = 1.0;
                pending = 0;
            }
            let posterior = if correct {
                m * (1.0 - p_slip) / p
            } else {
                m * p_slip / (1.0 - p)
            };
            m = posterior + (1.0 - posterior) * p_learn;
        }
        if pending > 0 {
            ll += prod.ln();
        }
    }
    ll
}
