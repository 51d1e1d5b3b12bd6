//! Named desk-scale fixtures, runnable end to end from the command line.
//! Each returns one pass/fail line per check; the acceptance suite asserts
//! on the same results.

use crate::core::{build_qmatrix, ConceptId, ExerciseId, PrerequisiteGraph, StudentId};
use crate::core::History;
use crate::data::SynthConfig;
use crate::metrics::{wcg, TaskSpec};
use crate::rec::agents::{agent_recommend, dqn_train, EpisodePool, LinearQ};
use crate::rec::beam::beam_plan_from;
use crate::rec::env::{env_reset, env_step, EnvState, FeatureMap};
use crate::sim::{BktParams, Estimator, SimMode};

use super::config::{
    DatasetConfig, DatasetSourceKind, ExperimentConfig, MethodConfig, MethodKind, PerturbConfig,
    PerturbKind, PerturbScope, TasksConfig,
};
use super::runner::{run_experiment, ReportRow, RowStatus};
use super::HarnessError;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), pass, detail: detail.into() }
    }
}

pub const FIXTURE_NAMES: [&str; 3] = ["chain5", "pler-vs-iler", "noise-robustness"];

pub fn run_fixture(name: &str) -> Result<Vec<CheckResult>, HarnessError> {
    match name {
        "chain5" => chain5(),
        "pler-vs-iler" => pler_vs_iler(),
        "noise-robustness" => noise_robustness(),
        other => Err(HarnessError::Config(format!(
            "unknown fixture '{other}' (available: {})",
            FIXTURE_NAMES.join(", ")
        ))),
    }
}

/// The canonical 5-concept chain: 10 exercises covering the chain round
/// robin, empty history, budget 5, global-promotion weights.
pub fn chain5_estimator() -> Result<(Estimator, TaskSpec), HarnessError> {
    let pairs: Vec<(ExerciseId, ConceptId)> = (0..10)
        .map(|e| (ExerciseId::from(e), ConceptId::from(e % 5)))
        .collect();
    let q = build_qmatrix(&pairs, 10, 5)?;
    let est = Estimator::new(
        BktParams::uniform(5, 0.2, 0.3, 0.2, 0.1)?,
        Some(PrerequisiteGraph::chain(5, 5)),
        q,
    )?;
    Ok((est, TaskSpec::gpp(0.5)?))
}

/// Best achievable cumulative gain over all |E|^budget paths, by depth-first
/// enumeration with shared prefixes.
pub fn exhaustive_optimum(est: &Estimator, start: &EnvState) -> Result<f64, HarnessError> {
    fn dfs(
        est: &Estimator,
        state: &EnvState,
        score: f64,
        best: &mut f64,
    ) -> Result<(), HarnessError> {
        if state.is_terminal() {
            if score > *best {
                *best = score;
            }
            return Ok(());
        }
        for e in est.qmatrix().exercise_ids() {
            let (next, reward, _) = env_step(state, e, est, &SimMode::Expected)?;
            dfs(est, &next, score + reward, best)?;
        }
        Ok(())
    }
    let mut best = f64::NEG_INFINITY;
    dfs(est, start, 0.0, &mut best)?;
    Ok(best)
}

/// Value agent and beam planner both reach 90% of the exhaustive optimum on
/// the chain fixture, per seed.
pub fn chain5() -> Result<Vec<CheckResult>, HarnessError> {
    let (est, task) = chain5_estimator()?;
    let h = History::new(StudentId(0));
    let budget = 5;
    let start = env_reset(&est, &h, &task, budget)?;
    let opt = exhaustive_optimum(&est, &start)?;
    let fmap = FeatureMap::default();
    let mut results = Vec::new();

    let (_, beam_score) = beam_plan_from(&est, &start, 8)?;
    results.push(CheckResult::new(
        "beam(width=8) >= 0.90 * OPT",
        beam_score >= 0.9 * opt,
        format!("beam {beam_score:.5} vs OPT {opt:.5}"),
    ));

    for seed in 0..5u64 {
        let mut pool = EpisodePool {
            estimator: &est,
            mode: SimMode::Expected,
            feature_map: fmap,
            starts: vec![start.clone()],
        };
        let agent = dqn_train(&mut pool, LinearQ::new(0.1, 0.9, 1.0, 0.05)?, 2000, seed)?;
        let path = agent_recommend(&agent, &est, &fmap, start.clone(), &SimMode::Expected)?;
        let score = wcg(&est, &h, &path, &start.weights, &SimMode::Expected)?;
        results.push(CheckResult::new(
            format!("dqn(2000 episodes, seed {seed}) >= 0.90 * OPT"),
            score >= 0.9 * opt,
            format!("agent {score:.5} vs OPT {opt:.5}, path {:?}", path.steps()),
        ));
    }
    Ok(results)
}

/// The 200-student chain population used by the directional fixtures.
/// Logs are short relative to the chain depth, so students sit early in
/// the chain at evaluation time: the biggest knowledge gaps are deep-tail
/// concepts whose learning is gated to near zero.
pub fn chain_population_config() -> SynthConfig {
    SynthConfig {
        n_students: 200,
        n_concepts: 8,
        n_exercises: 16,
        chain_depth: 8,
        log_length: 25,
        seed: 1234,
        p_init: (0.05, 0.2),
        p_learn: (0.25, 0.45),
        p_guess: (0.1, 0.3),
        p_slip: (0.05, 0.2),
        init_mastery: (0.0, 0.2),
    }
}

fn directional_config(perturb: Vec<PerturbConfig>) -> ExperimentConfig {
    ExperimentConfig {
        seeds: vec![0, 1, 2, 3, 4],
        path_len: 10,
        eval_k: 10,
        sim: SimMode::Expected,
        profile: false,
        jobs: 1,
        dataset: DatasetConfig {
            source: DatasetSourceKind::Synthetic,
            path: None,
            synthetic: Some(chain_population_config()),
        },
        estimator: Default::default(),
        tasks: TasksConfig { list: vec!["gpp".to_string()], ..Default::default() },
        perturb,
        methods: vec![
            MethodConfig::of_kind(MethodKind::GreedyIler),
            MethodConfig { episodes: Some(2000), ..MethodConfig::of_kind(MethodKind::Dqn) },
        ],
        search: Default::default(),
    }
}

fn row<'a>(rows: &'a [ReportRow], method: &str, variant: &str) -> Result<&'a ReportRow, HarnessError> {
    rows.iter()
        .find(|r| r.method == method && r.variant == variant && r.task == "gpp")
        .ok_or_else(|| HarnessError::Config(format!("missing row {method}/{variant}")))
}

fn ensure_ok(r: &ReportRow) -> Result<(), HarnessError> {
    match &r.status {
        RowStatus::Ok => Ok(()),
        RowStatus::Failed(msg) => Err(HarnessError::Config(format!(
            "row {}/{} failed: {msg}",
            r.method, r.variant
        ))),
    }
}

/// Trained value agent strictly beats gap-greedy top-k on mean GPP@10 for
/// every seed, on the chain population.
pub fn pler_vs_iler() -> Result<Vec<CheckResult>, HarnessError> {
    let cfg = directional_config(vec![]);
    let rows = run_experiment(&cfg)?;
    let greedy = row(&rows, "greedy_iler", "base")?;
    let dqn = row(&rows, "dqn", "base")?;
    ensure_ok(greedy)?;
    ensure_ok(dqn)?;
    let mut results = Vec::new();
    for (g, d) in greedy.per_seed.iter().zip(&dqn.per_seed) {
        results.push(CheckResult::new(
            format!("seed {}: dqn GPP@10 > greedy GPP@10", g.seed),
            d.value > g.value,
            format!("dqn {:.5} vs greedy {:.5}", d.value, g.value),
        ));
    }
    results.push(CheckResult::new(
        "mean: dqn GPP@10 > greedy GPP@10",
        dqn.mean > greedy.mean,
        format!("dqn {:.5} vs greedy {:.5}", dqn.mean, greedy.mean),
    ));
    Ok(results)
}

/// With 20% label noise injected into the full log before fitting, the
/// value agent's relative GPP@10 degradation is compared against
/// gap-greedy's, per seed, through the standard pipeline (noise, refit,
/// retrain, re-evaluate).
///
/// Caveat, documented here because the check currently fails in this
/// engine: the expected-mode simulator never decreases mastery, so no
/// method can reach the negative-and-worsening regime the directional
/// claim comes from, and refitting the estimator on noisy logs moves the
/// measuring stick itself: inflated guess/slip estimates blur mastery
/// toward the priors, which compresses the achievable gain for near-ceiling
/// methods (the value agent) while leaving far-from-ceiling gap-greedy
/// mildly affected or even inflated. Alternative measurements (noise
/// restricted to training data; scoring both pipelines under the clean
/// estimator) reverse or shrink the gap but do not robustly produce the
/// expected direction either.
pub fn noise_robustness() -> Result<Vec<CheckResult>, HarnessError> {
    let cfg = directional_config(vec![PerturbConfig {
        kind: PerturbKind::Noise,
        level: 0.2,
        seed: 77,
        scope: PerturbScope::Full,
    }]);
    let rows = run_experiment(&cfg)?;
    let greedy_clean = row(&rows, "greedy_iler", "base")?;
    let dqn_clean = row(&rows, "dqn", "base")?;
    let greedy_noisy = row(&rows, "greedy_iler", "noise_0.2")?;
    let dqn_noisy = row(&rows, "dqn", "noise_0.2")?;
    for r in [greedy_clean, dqn_clean, greedy_noisy, dqn_noisy] {
        ensure_ok(r)?;
    }
    let rel_deg = |clean: f64, noisy: f64| (clean - noisy) / clean.abs().max(1e-6);
    let mut wins = 0;
    let mut results = Vec::new();
    for i in 0..greedy_clean.per_seed.len() {
        let g = rel_deg(greedy_clean.per_seed[i].value, greedy_noisy.per_seed[i].value);
        let d = rel_deg(dqn_clean.per_seed[i].value, dqn_noisy.per_seed[i].value);
        let win = d < g;
        if win {
            wins += 1;
        }
        results.push(CheckResult::new(
            format!("seed {}: dqn degrades less than greedy", greedy_clean.per_seed[i].seed),
            win,
            format!(
                "dqn rel. degradation {d:.4} ({:.4} -> {:.4}) vs greedy {g:.4} ({:.4} -> {:.4})",
                dqn_clean.per_seed[i].value,
                dqn_noisy.per_seed[i].value,
                greedy_clean.per_seed[i].value,
                greedy_noisy.per_seed[i].value,
            ),
        ));
    }
    results.push(CheckResult::new(
        "dqn wins in >= 4 of 5 seeds",
        wins >= 4,
        format!("{wins} of {} seeds", greedy_clean.per_seed.len()),
    ));
    Ok(results)
}
