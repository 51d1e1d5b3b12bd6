//! The experiment runner.
//!
//! For every dataset variant and seed the runner splits students 80/10/10,
//! fixes one shared estimator (fitted on the training split or set from
//! known parameters), trains each method that needs training, produces a
//! path per test student and task, and scores it with the weighted gain at
//! the evaluation cutoff. Every row carries the estimator fingerprint so
//! the fairness contract is checkable. A failing method marks only its own
//! rows as failed; other methods keep running.
//!
//! Determinism: all randomness is derived from the run seed, students are
//! aggregated in index order, and (with profiling off) report bytes are a
//! pure function of config and seeds.

use std::collections::BTreeSet;
use std::fs;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::core::{ConceptId, ExerciseId, History, LearningPath, MasteryVector, WeightVector};
use crate::data::{
    load_bundle, perturb_coldstart, perturb_noise, perturb_sparsity, synth_generate, Dataset,
};
use crate::metrics::{unify_output, wcg_at_k, TaskSpec};
use crate::rec::agents::{
    ac_train, agent_recommend, dqn_train, EpisodePool, LinearQ, SoftmaxPolicy, TrainedAgent,
};
use crate::rec::beam::beam_plan_from;
use crate::rec::env::{EnvState, FeatureMap};
use crate::rec::item::{greedy_topk_among, rerank_diverse_among, ItemRecConfig};
use crate::seed::derive;
use crate::sim::{fit_bkt, BktParams, Estimator, SimMode};

use super::config::{
    DatasetSourceKind, EstimatorMode, ExperimentConfig, MethodConfig, MethodKind, PerturbConfig,
    PerturbKind, PerturbScope, TasksConfig,
};
use super::profile::{profile, CostSample};
use super::search::{random_search, Assignment, SearchOutcome, SearchSpace};
use super::HarnessError;

const SALT_SPLIT: u64 = 0x11;
const SALT_TGA: u64 = 0x22;
const SALT_TRAIN: u64 = 0x33;
const SALT_SEARCH: u64 = 0x44;

/// Per-student train/validation/test split by seeded shuffle, 80/10/10.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_students(n_students: usize, seed: u64) -> StudentSplit {
    let mut idx: Vec<usize> = (0..n_students).collect();
    let mut rng = StdRng::seed_from_u64(derive(seed, SALT_SPLIT));
    idx.shuffle(&mut rng);
    let n_train = n_students * 8 / 10;
    let n_val = n_students / 10;
    StudentSplit {
        train: idx[..n_train].to_vec(),
        validation: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Mean gain over the evaluated students.
    pub value: f64,
    pub n_evaluated: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub variant: String,
    pub task: String,
    /// Mean of the per-seed means; 0 for failed rows.
    pub mean: f64,
    /// Population standard deviation of the per-seed means.
    pub std: f64,
    /// Test-split size per seed.
    pub n_students: usize,
    pub per_seed: Vec<SeedOutcome>,
    pub train_time_s: f64,
    pub infer_time_s: f64,
    pub peak_memory_bytes: Option<u64>,
    pub fingerprint: String,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TaskKind {
    Tga,
    Gpp,
}

impl TaskKind {
    fn parse(name: &str) -> Result<TaskKind, HarnessError> {
        match name {
            "tga" => Ok(TaskKind::Tga),
            "gpp" => Ok(TaskKind::Gpp),
            other => Err(HarnessError::Config(format!("unknown task '{other}'"))),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            TaskKind::Tga => "tga",
            TaskKind::Gpp => "gpp",
        }
    }
}

/// A method with every hyperparameter pinned.
#[derive(Debug, Clone)]
enum ResolvedMethod {
    GreedyItem { k: usize, exclude_attempted: bool },
    DiverseItem { k: usize, pool_size: usize, exclude_attempted: bool },
    Dqn { template: LinearQ, episodes: usize },
    Ac { template: SoftmaxPolicy, episodes: usize },
    Beam { width: usize },
}

fn resolve_method(
    mc: &MethodConfig,
    cfg: &ExperimentConfig,
    n_exercises: usize,
    overrides: Option<&Assignment>,
) -> Result<ResolvedMethod, HarnessError> {
    let get_f = |key: &str, field: Option<f64>, default: f64| -> f64 {
        overrides
            .and_then(|a| a.get(key))
            .copied()
            .or(field)
            .unwrap_or(default)
    };
    let get_u = |key: &str, field: Option<usize>, default: usize| -> usize {
        overrides
            .and_then(|a| a.get(key))
            .map(|&v| v.round().max(0.0) as usize)
            .or(field)
            .unwrap_or(default)
    };
    let default_k = cfg.path_len.max(cfg.eval_k);
    Ok(match mc.kind {
        MethodKind::GreedyIler => ResolvedMethod::GreedyItem {
            k: get_u("k", mc.k, default_k),
            exclude_attempted: mc.exclude_attempted,
        },
        MethodKind::DiverseIler => {
            let k = get_u("k", mc.k, default_k);
            ResolvedMethod::DiverseItem {
                k,
                pool_size: get_u("pool_size", mc.pool_size, (3 * k).min(n_exercises)),
                exclude_attempted: mc.exclude_attempted,
            }
        }
        MethodKind::Dqn => ResolvedMethod::Dqn {
            template: LinearQ::new(
                get_f("alpha", mc.alpha, 0.1),
                get_f("gamma", mc.gamma, 0.9),
                get_f("eps_start", mc.eps_start, 1.0),
                get_f("eps_end", mc.eps_end, 0.05),
            )?,
            episodes: get_u("episodes", mc.episodes, 2000),
        },
        MethodKind::Ac => ResolvedMethod::Ac {
            template: SoftmaxPolicy::new(
                get_f("alpha", mc.alpha, 0.2),
                get_f("alpha_critic", mc.alpha_critic, 0.1),
                get_f("gamma", mc.gamma, 0.9),
            )?,
            episodes: get_u("episodes", mc.episodes, 2000),
        },
        MethodKind::Beam => ResolvedMethod::Beam { width: get_u("beam_width", mc.beam_width, 8) },
    })
}

/// What actually produces paths after any training has happened.
enum MethodArtifact {
    GreedyItem { k: usize, exclude_attempted: bool },
    DiverseItem { cfg: ItemRecConfig, exclude_attempted: bool },
    Agent(TrainedAgent),
    Beam { width: usize },
}

pub fn build_base_dataset(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    match cfg.dataset.source {
        DatasetSourceKind::Synthetic => {
            let sc = cfg
                .dataset
                .synthetic
                .as_ref()
                .ok_or_else(|| HarnessError::Config("missing [dataset.synthetic]".into()))?;
            Ok(synth_generate(sc)?.0)
        }
        DatasetSourceKind::Bundle => {
            let path = cfg
                .dataset
                .path
                .as_ref()
                .ok_or_else(|| HarnessError::Config("missing dataset.path".into()))?;
            Ok(load_bundle(path)?)
        }
    }
}

/// The base dataset plus one variant per perturbation directive. Variants
/// with train-only scope depend on the split, so they are materialized per
/// seed by [`materialize_variant`].
fn variant_specs(cfg: &ExperimentConfig) -> Vec<(String, Option<PerturbConfig>)> {
    let mut out = vec![("base".to_string(), None)];
    for p in &cfg.perturb {
        out.push((p.label(), Some(p.clone())));
    }
    out
}

fn materialize_variant(
    base: &Dataset,
    spec: Option<&PerturbConfig>,
    train_idx: &[usize],
) -> Result<Dataset, HarnessError> {
    let Some(p) = spec else {
        return Ok(base.clone());
    };
    let perturbed = match p.kind {
        PerturbKind::Sparsity => perturb_sparsity(base, p.level, p.seed)?,
        PerturbKind::Coldstart => perturb_coldstart(base, p.level as usize)?,
        PerturbKind::Noise => perturb_noise(base, p.level, p.seed)?,
    };
    match p.scope {
        PerturbScope::Full => Ok(perturbed),
        // per-student seed derivation makes the kept logs identical to a
        // standalone per-student perturbation
        PerturbScope::TrainOnly => {
            let mut out = base.clone();
            for &s in train_idx {
                out.logs[s] = perturbed.logs[s].clone();
            }
            Ok(out)
        }
    }
}

fn build_estimator(
    cfg: &ExperimentConfig,
    data: &Dataset,
    train_idx: &[usize],
) -> Result<Estimator, HarnessError> {
    let params = match cfg.estimator.mode {
        EstimatorMode::Fitted => {
            let train_logs: Vec<History> =
                train_idx.iter().map(|&i| data.logs[i].clone()).collect();
            fit_bkt(&train_logs, &data.q)?
        }
        EstimatorMode::Oracle => {
            if let Some(path) = &cfg.estimator.params_file {
                let contents = fs::read_to_string(path).map_err(|source| HarnessError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                serde_json::from_str::<BktParams>(&contents).map_err(|e| {
                    HarnessError::BadFile { path: path.display().to_string(), msg: e.to_string() }
                })?
            } else if let Some(sc) = &cfg.dataset.synthetic {
                let mid = |(lo, hi): (f64, f64)| (lo + hi) / 2.0;
                BktParams::uniform(
                    data.q.n_concepts(),
                    mid(sc.p_init),
                    mid(sc.p_learn),
                    mid(sc.p_guess),
                    mid(sc.p_slip),
                )?
            } else {
                return Err(HarnessError::Config(
                    "oracle estimator needs estimator.params_file for bundle datasets".into(),
                ));
            }
        }
    };
    Ok(Estimator::new(params, Some(data.prereqs.clone()), data.q.clone())?)
}

/// Per-student task instantiation. `None` means the student is skipped for
/// this task (no unmastered concepts to target).
fn instantiate_task(
    kind: TaskKind,
    tasks: &TasksConfig,
    m: &MasteryVector,
    run_seed: u64,
    student: usize,
) -> Result<Option<(TaskSpec, WeightVector)>, HarnessError> {
    match kind {
        TaskKind::Gpp => {
            let task = TaskSpec::gpp(tasks.mastery_threshold)?;
            let w = task.weights(m)?;
            Ok(Some((task, w)))
        }
        TaskKind::Tga => {
            let mut unmastered: Vec<ConceptId> = m
                .as_slice()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v < tasks.mastery_threshold)
                .map(|(i, _)| ConceptId::from(i))
                .collect();
            if unmastered.is_empty() {
                return Ok(None);
            }
            let n_targets = tasks.tga_max_targets.min(unmastered.len());
            let mut rng =
                StdRng::seed_from_u64(derive(derive(run_seed, SALT_TGA), student as u64));
            for i in 0..n_targets {
                let j = rng.gen_range(i..unmastered.len());
                unmastered.swap(i, j);
            }
            let targets: BTreeSet<ConceptId> = unmastered[..n_targets].iter().copied().collect();
            let task = TaskSpec::tga(targets)?;
            let w = task.weights(m)?;
            Ok(Some((task, w)))
        }
    }
}

fn candidate_exercises(data: &Dataset, h: &History, exclude_attempted: bool) -> Vec<ExerciseId> {
    if !exclude_attempted {
        return data.q.exercise_ids().collect();
    }
    let attempted: BTreeSet<ExerciseId> = h.items().iter().map(|i| i.exercise).collect();
    data.q.exercise_ids().filter(|e| !attempted.contains(e)).collect()
}

fn produce_path(
    artifact: &MethodArtifact,
    data: &Dataset,
    est: &Estimator,
    fmap: &FeatureMap,
    h: &History,
    m: &MasteryVector,
    w: &WeightVector,
    path_len: usize,
    mode: &SimMode,
) -> Result<LearningPath, HarnessError> {
    let start = || EnvState {
        mastery: m.clone(),
        weights: w.clone(),
        step_index: 0,
        budget: path_len,
    };
    match artifact {
        MethodArtifact::GreedyItem { k, exclude_attempted } => {
            let candidates = candidate_exercises(data, h, *exclude_attempted);
            let rec = greedy_topk_among(&data.q, m, *k, &candidates)?;
            Ok(unify_output(&rec, path_len)?)
        }
        MethodArtifact::DiverseItem { cfg, exclude_attempted } => {
            let candidates = candidate_exercises(data, h, *exclude_attempted);
            let rec = rerank_diverse_among(&data.q, m, cfg, &candidates)?;
            Ok(unify_output(&rec, path_len)?)
        }
        MethodArtifact::Agent(agent) => Ok(agent_recommend(agent, est, fmap, start(), mode)?),
        MethodArtifact::Beam { width } => Ok(beam_plan_from(est, &start(), *width)?.0),
    }
}

/// Result of one (variant, seed, method, task) cell.
#[derive(Clone)]
struct SeedCell {
    seed: u64,
    value: f64,
    n_evaluated: usize,
    n_test: usize,
    fingerprint: String,
    train: CostSample,
    infer: CostSample,
}

struct CellCtx<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Dataset,
    est: &'a Estimator,
    fmap: &'a FeatureMap,
    train_students: &'a [usize],
    eval_students: &'a [usize],
    run_seed: u64,
}

fn training_starts(
    ctx: &CellCtx,
    kind: TaskKind,
) -> Result<Vec<EnvState>, HarnessError> {
    let mut starts = Vec::new();
    for &s in ctx.train_students {
        let m = ctx.est.estimate(&ctx.data.logs[s])?;
        if let Some((_, w)) = instantiate_task(kind, &ctx.cfg.tasks, &m, ctx.run_seed, s)? {
            if !w.is_zero() {
                starts.push(EnvState {
                    mastery: m,
                    weights: w,
                    step_index: 0,
                    budget: ctx.cfg.path_len,
                });
            }
        }
    }
    Ok(starts)
}

fn train_artifact(
    ctx: &CellCtx,
    resolved: &ResolvedMethod,
    kind: TaskKind,
    train_seed: u64,
) -> Result<MethodArtifact, HarnessError> {
    Ok(match resolved {
        ResolvedMethod::GreedyItem { k, exclude_attempted } => MethodArtifact::GreedyItem {
            k: *k,
            exclude_attempted: *exclude_attempted,
        },
        ResolvedMethod::DiverseItem { k, pool_size, exclude_attempted } => {
            MethodArtifact::DiverseItem {
                cfg: ItemRecConfig { k: *k, pool_size: *pool_size },
                exclude_attempted: *exclude_attempted,
            }
        }
        ResolvedMethod::Beam { width } => MethodArtifact::Beam { width: *width },
        ResolvedMethod::Dqn { template, episodes } => {
            let starts = training_starts(ctx, kind)?;
            if starts.is_empty() {
                return Err(HarnessError::Config(
                    "no trainable students for this task (all mastered)".into(),
                ));
            }
            let mut pool = EpisodePool {
                estimator: ctx.est,
                mode: ctx.cfg.sim,
                feature_map: *ctx.fmap,
                starts,
            };
            MethodArtifact::Agent(TrainedAgent::Dqn(dqn_train(
                &mut pool,
                template.clone(),
                *episodes,
                train_seed,
            )?))
        }
        ResolvedMethod::Ac { template, episodes } => {
            let starts = training_starts(ctx, kind)?;
            if starts.is_empty() {
                return Err(HarnessError::Config(
                    "no trainable students for this task (all mastered)".into(),
                ));
            }
            let mut pool = EpisodePool {
                estimator: ctx.est,
                mode: ctx.cfg.sim,
                feature_map: *ctx.fmap,
                starts,
            };
            MethodArtifact::Agent(TrainedAgent::Ac(ac_train(
                &mut pool,
                template.clone(),
                *episodes,
                train_seed,
            )?))
        }
    })
}

/// Deterministic parallel map: worker t handles indices t, t+jobs, ...;
/// results come back in index order regardless of scheduling.
fn parallel_map<R, F>(jobs: usize, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let jobs = jobs.min(n);
    let mut indexed: Vec<(usize, R)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|t| {
                let f = &f;
                scope.spawn(move || {
                    let mut local = Vec::new();
                    let mut i = t;
                    while i < n {
                        local.push((i, f(i)));
                        i += jobs;
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    indexed.sort_by_key(|(i, _)| *i);
    indexed.into_iter().map(|(_, r)| r).collect()
}

fn evaluate_artifact(
    ctx: &CellCtx,
    artifact: &MethodArtifact,
    kind: TaskKind,
) -> Result<(f64, usize), HarnessError> {
    let per_student = parallel_map(ctx.cfg.jobs, ctx.eval_students.len(), |i| -> Result<Option<f64>, HarnessError> {
        let s = ctx.eval_students[i];
        let h = &ctx.data.logs[s];
        let m = ctx.est.estimate(h).map_err(HarnessError::Sim)?;
        let Some((_, w)) = instantiate_task(kind, &ctx.cfg.tasks, &m, ctx.run_seed, s)? else {
            return Ok(None);
        };
        let path = produce_path(
            artifact,
            ctx.data,
            ctx.est,
            ctx.fmap,
            h,
            &m,
            &w,
            ctx.cfg.path_len,
            &ctx.cfg.sim,
        )?;
        let value = wcg_at_k(ctx.est, h, &path, &w, ctx.cfg.eval_k, &ctx.cfg.sim)?;
        Ok(Some(value))
    });
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in per_student {
        match r? {
            Some(v) => {
                sum += v;
                count += 1;
            }
            None => {}
        }
    }
    if count == 0 {
        return Err(HarnessError::Config("no evaluable students for this task".into()));
    }
    Ok((sum / count as f64, count))
}

fn run_cell(
    ctx: &CellCtx,
    resolved: &ResolvedMethod,
    kind: TaskKind,
    train_seed: u64,
) -> Result<SeedCell, HarnessError> {
    let (artifact, train_cost) = if ctx.cfg.profile {
        let (r, cost) = profile(|| train_artifact(ctx, resolved, kind, train_seed));
        (r?, cost)
    } else {
        (train_artifact(ctx, resolved, kind, train_seed)?, CostSample::default())
    };
    let (result, infer_cost) = if ctx.cfg.profile {
        let (r, cost) = profile(|| evaluate_artifact(ctx, &artifact, kind));
        (r?, cost)
    } else {
        (evaluate_artifact(ctx, &artifact, kind)?, CostSample::default())
    };
    let (value, n_evaluated) = result;
    Ok(SeedCell {
        seed: ctx.run_seed,
        value,
        n_evaluated,
        n_test: ctx.eval_students.len(),
        fingerprint: format!("{:016x}", ctx.est.fingerprint()),
        train: train_cost,
        infer: infer_cost,
    })
}

fn population_std(values: &[f64]) -> f64 {
    if values.len() <= 1 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// Runs the full benchmark described by the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    cfg.validate()?;
    let base = build_base_dataset(cfg)?;
    let variants = variant_specs(cfg);
    let task_kinds: Vec<TaskKind> = cfg
        .tasks
        .list
        .iter()
        .map(|t| TaskKind::parse(t))
        .collect::<Result<_, _>>()?;
    let fmap = FeatureMap { mastery_threshold: cfg.tasks.mastery_threshold };
    let n_methods = cfg.methods.len();
    let n_tasks = task_kinds.len();

    // cells[variant][method][task] -> per-seed outcomes
    let mut cells: Vec<Vec<Vec<Vec<Result<SeedCell, String>>>>> =
        vec![vec![vec![Vec::new(); n_tasks]; n_methods]; variants.len()];

    for (vi, (_, spec)) in variants.iter().enumerate() {
        for &run_seed in &cfg.seeds {
            let split = split_students(base.n_students(), run_seed);
            let fail_seed = |cells: &mut Vec<Vec<Vec<Vec<Result<SeedCell, String>>>>>, msg: String| {
                for mi in 0..n_methods {
                    for ti in 0..n_tasks {
                        cells[vi][mi][ti].push(Err(msg.clone()));
                    }
                }
            };
            let data = match materialize_variant(&base, spec.as_ref(), &split.train) {
                Ok(d) => d,
                Err(e) => {
                    fail_seed(&mut cells, format!("perturbation: {e}"));
                    continue;
                }
            };
            let data = &data;
            let est = match build_estimator(cfg, data, &split.train) {
                Ok(est) => est,
                Err(e) => {
                    fail_seed(&mut cells, format!("estimator: {e}"));
                    continue;
                }
            };
            let ctx = CellCtx {
                cfg,
                data,
                est: &est,
                fmap: &fmap,
                train_students: &split.train,
                eval_students: &split.test,
                run_seed,
            };
            for (mi, mc) in cfg.methods.iter().enumerate() {
                let resolved = resolve_method(mc, cfg, data.q.n_exercises(), None);
                for (ti, &kind) in task_kinds.iter().enumerate() {
                    let outcome = resolved.as_ref().map_err(|e| e.to_string()).and_then(
                        |resolved| {
                            let train_seed = derive(
                                derive(run_seed, SALT_TRAIN),
                                (mi * 64 + ti) as u64,
                            );
                            run_cell(&ctx, resolved, kind, train_seed)
                                .map_err(|e| e.to_string())
                        },
                    );
                    cells[vi][mi][ti].push(outcome);
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(variants.len() * n_methods * n_tasks);
    for (vi, (label, _)) in variants.iter().enumerate() {
        for (mi, mc) in cfg.methods.iter().enumerate() {
            for (ti, kind) in task_kinds.iter().enumerate() {
                rows.push(assemble_row(
                    mc.label(),
                    label.clone(),
                    kind.label().to_string(),
                    &cells[vi][mi][ti],
                ));
            }
        }
    }
    Ok(rows)
}

fn assemble_row(
    method: String,
    variant: String,
    task: String,
    outcomes: &[Result<SeedCell, String>],
) -> ReportRow {
    let first_error = outcomes.iter().find_map(|o| o.as_ref().err());
    let ok_cells: Vec<&SeedCell> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let per_seed: Vec<SeedOutcome> = ok_cells
        .iter()
        .map(|c| SeedOutcome {
            seed: c.seed,
            value: c.value,
            n_evaluated: c.n_evaluated,
            fingerprint: c.fingerprint.clone(),
        })
        .collect();
    let status = match first_error {
        Some(msg) => RowStatus::Failed(msg.clone()),
        None => RowStatus::Ok,
    };
    let values: Vec<f64> = per_seed.iter().map(|s| s.value).collect();
    let (mean, std) = if matches!(status, RowStatus::Ok) && !values.is_empty() {
        (values.iter().sum::<f64>() / values.len() as f64, population_std(&values))
    } else {
        (0.0, 0.0)
    };
    let n_students = ok_cells.first().map(|c| c.n_test).unwrap_or(0);
    let mean_time = |pick: fn(&SeedCell) -> f64| {
        if ok_cells.is_empty() {
            0.0
        } else {
            ok_cells.iter().map(|c| pick(c)).sum::<f64>() / ok_cells.len() as f64
        }
    };
    let peak_memory_bytes = ok_cells
        .iter()
        .filter_map(|c| {
            match (c.train.peak_memory_bytes, c.infer.peak_memory_bytes) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (Some(a), None) => Some(a),
                (None, b) => b,
            }
        })
        .max();
    let fingerprint = {
        let mut fps: Vec<&str> = per_seed.iter().map(|s| s.fingerprint.as_str()).collect();
        fps.dedup();
        fps.join("+")
    };
    ReportRow {
        method,
        variant,
        task,
        mean,
        std,
        n_students,
        per_seed,
        train_time_s: mean_time(|c| c.train.wall_seconds),
        infer_time_s: mean_time(|c| c.infer.wall_seconds),
        peak_memory_bytes,
        fingerprint,
        status,
    }
}

/// Random hyperparameter search for one configured method. The objective is
/// the validation-split mean gain at the evaluation cutoff, averaged over
/// the configured tasks, on the first run seed.
pub fn search_method(
    cfg: &ExperimentConfig,
    method_name: &str,
    trials_override: Option<usize>,
) -> Result<SearchOutcome, HarnessError> {
    cfg.validate()?;
    let mc = cfg.method(method_name)?;
    if mc.space.is_empty() {
        return Err(HarnessError::Config(format!(
            "method '{method_name}' declares no search space"
        )));
    }
    let space = SearchSpace {
        params: mc.space.clone(),
        trial_budget: trials_override.unwrap_or(cfg.search.trials),
        wall_clock_s: cfg.search.wall_clock_s,
    };
    let base = build_base_dataset(cfg)?;
    let run_seed = cfg.seeds[0];
    let split = split_students(base.n_students(), run_seed);
    if split.validation.is_empty() {
        return Err(HarnessError::Config(
            "validation split is empty; need at least 10 students".into(),
        ));
    }
    let est = build_estimator(cfg, &base, &split.train)?;
    let fmap = FeatureMap { mastery_threshold: cfg.tasks.mastery_threshold };
    let task_kinds: Vec<TaskKind> = cfg
        .tasks
        .list
        .iter()
        .map(|t| TaskKind::parse(t))
        .collect::<Result<_, _>>()?;
    let ctx = CellCtx {
        cfg,
        data: &base,
        est: &est,
        fmap: &fmap,
        train_students: &split.train,
        eval_students: &split.validation,
        run_seed,
    };
    let mi = cfg.methods.iter().position(|m| m.label() == method_name).unwrap_or(0);
    random_search(&space, derive(run_seed, SALT_SEARCH), |assignment| {
        let resolved = resolve_method(mc, cfg, base.q.n_exercises(), Some(assignment))?;
        let mut total = 0.0;
        for (ti, &kind) in task_kinds.iter().enumerate() {
            let train_seed = derive(derive(run_seed, SALT_TRAIN), (mi * 64 + ti) as u64);
            let cell = run_cell(&ctx, &resolved, kind, train_seed)?;
            total += cell.value;
        }
        Ok(total / task_kinds.len() as f64)
    })
}

/// Trains one method (must be a trainable kind) on the base dataset with
/// the first run seed and returns the serializable agent.
pub fn train_method(
    cfg: &ExperimentConfig,
    method_name: &str,
) -> Result<TrainedAgent, HarnessError> {
    cfg.validate()?;
    let mc = cfg.method(method_name)?;
    if !mc.kind.is_trainable() {
        return Err(HarnessError::Config(format!(
            "method '{method_name}' ({}) has no trainable parameters",
            mc.kind.as_str()
        )));
    }
    let base = build_base_dataset(cfg)?;
    let run_seed = cfg.seeds[0];
    let split = split_students(base.n_students(), run_seed);
    let est = build_estimator(cfg, &base, &split.train)?;
    let fmap = FeatureMap { mastery_threshold: cfg.tasks.mastery_threshold };
    let kind = TaskKind::parse(&cfg.tasks.list[0])?;
    let ctx = CellCtx {
        cfg,
        data: &base,
        est: &est,
        fmap: &fmap,
        train_students: &split.train,
        eval_students: &split.test,
        run_seed,
    };
    let resolved = resolve_method(mc, cfg, base.q.n_exercises(), None)?;
    let mi = cfg.methods.iter().position(|m| m.label() == method_name).unwrap_or(0);
    let train_seed = derive(derive(run_seed, SALT_TRAIN), (mi * 64) as u64);
    match train_artifact(&ctx, &resolved, kind, train_seed)? {
        MethodArtifact::Agent(agent) => Ok(agent),
        _ => unreachable!("trainable kinds produce agents"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthConfig;
    use crate::harness::config::DatasetConfig;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            seeds: vec![0, 1],
            path_len: 4,
            eval_k: 4,
            sim: SimMode::Expected,
            profile: false,
            jobs: 1,
            dataset: DatasetConfig {
                source: DatasetSourceKind::Synthetic,
                path: None,
                synthetic: Some(SynthConfig {
                    n_students: 30,
                    n_concepts: 3,
                    n_exercises: 6,
                    chain_depth: 3,
                    log_length: 12,
                    seed: 5,
                    p_init: (0.1, 0.3),
                    p_learn: (0.2, 0.4),
                    p_guess: (0.1, 0.3),
                    p_slip: (0.05, 0.2),
                    init_mastery: (0.0, 0.3),
                }),
            },
            estimator: Default::default(),
            tasks: Default::default(),
            perturb: vec![],
            methods: vec![
                MethodConfig::of_kind(MethodKind::GreedyIler),
                MethodConfig {
                    episodes: Some(60),
                    ..MethodConfig::of_kind(MethodKind::Dqn)
                },
            ],
            search: Default::default(),
        }
    }

    #[test]
    fn split_shapes_and_determinism() {
        let s = split_students(200, 7);
        assert_eq!(s.train.len(), 160);
        assert_eq!(s.validation.len(), 20);
        assert_eq!(s.test.len(), 20);
        assert_eq!(s, split_students(200, 7));
        assert_ne!(s.train, split_students(200, 8).train);
        // partition: every student exactly once
        let mut all: Vec<usize> =
            s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn run_experiment_is_deterministic_and_fair() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        // one row per method x task on the base variant
        assert_eq!(a.len(), 2 * 2);
        // fairness: every row of a given seed shares the estimator fingerprint
        let fp = &a[0].fingerprint;
        for row in &a {
            assert_eq!(&row.fingerprint, fp);
            assert!(matches!(row.status, RowStatus::Ok), "row failed: {:?}", row.status);
            assert_eq!(row.per_seed.len(), 2);
            assert!(row.mean >= -1.0 && row.mean <= 1.0);
        }
    }

    #[test]
    fn zero_methods_is_rejected() {
        let mut cfg = tiny_config();
        cfg.methods.clear();
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))));
    }

    #[test]
    fn failing_method_is_isolated() {
        let mut cfg = tiny_config();
        // k larger than the bank: greedy top-k must fail, dqn must survive
        cfg.methods[0].k = Some(500);
        let rows = run_experiment(&cfg).unwrap();
        let greedy_rows: Vec<_> =
            rows.iter().filter(|r| r.method == "greedy_iler").collect();
        let dqn_rows: Vec<_> = rows.iter().filter(|r| r.method == "dqn").collect();
        assert!(greedy_rows.iter().all(|r| matches!(r.status, RowStatus::Failed(_))));
        assert!(dqn_rows.iter().all(|r| matches!(r.status, RowStatus::Ok)));
    }

    #[test]
    fn perturb_variants_produce_rows() {
        let mut cfg = tiny_config();
        cfg.seeds = vec![0];
        cfg.perturb = vec![
            super::super::config::PerturbConfig {
                kind: PerturbKind::Coldstart,
                level: 5.0,
                seed: 0,
                scope: Default::default(),
            },
        ];
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert!(rows.iter().any(|r| r.variant == "coldstart_5"));
    }

    #[test]
    fn sampled_mode_runs_end_to_end() {
        let mut cfg = tiny_config();
        cfg.seeds = vec![0];
        cfg.sim = SimMode::Sampled { rollouts: 20, seed: 9 };
        let rows = run_experiment(&cfg).unwrap();
        assert!(rows.iter().all(|r| matches!(r.status, RowStatus::Ok)));
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn jobs_do_not_change_results() {
        let mut cfg = tiny_config();
        cfg.seeds = vec![0];
        let serial = run_experiment(&cfg).unwrap();
        cfg.jobs = 4;
        let parallel = run_experiment(&cfg).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn search_respects_budget_and_space() {
        let mut cfg = tiny_config();
        cfg.seeds = vec![0];
        cfg.methods[1].space.insert(
            "alpha".to_string(),
            super::super::search::SpaceSpec::Discrete(vec![0.05, 0.1, 0.2]),
        );
        cfg.methods[1].episodes = Some(20);
        let out = search_method(&cfg, "dqn", Some(20)).unwrap();
        assert_eq!(out.trials_run, 3); // discrete space exhausted
        assert!(out.best.assignment.contains_key("alpha"));
        assert!(search_method(&cfg, "greedy_iler", None).is_err()); // no space
    }

    #[test]
    fn train_method_rejects_untrainable_kinds() {
        let cfg = tiny_config();
        assert!(train_method(&cfg, "greedy_iler").is_err());
        let agent = train_method(&cfg, "dqn").unwrap();
        assert!(matches!(agent, TrainedAgent::Dqn(_)));
    }
}
