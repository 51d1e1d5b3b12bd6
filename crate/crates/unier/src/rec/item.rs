//! Item-level recommenders.
//!
//! The end-to-end family is represented by gap-greedy top-k selection:
//! score every exercise by the summed knowledge gap of its concepts and
//! keep the k best. The two-stage family is represented by diverse
//! re-ranking: retrieve a candidate pool by gap score, then greedily pick
//! the subset that covers the most distinct concepts. An exhaustive
//! re-ranker doubles as the optimality oracle for small pools.

use std::collections::BTreeSet;

use crate::core::{ConceptId, ExerciseId, MasteryVector, QMatrix, RecommendationSet};

use super::RecError;

/// Output size and candidate pool size for two-stage selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemRecConfig {
    pub k: usize,
    pub pool_size: usize,
}

impl ItemRecConfig {
    pub fn validate(&self, q: &QMatrix) -> Result<(), RecError> {
        if self.k >= 1 && self.k < self.pool_size && self.pool_size <= q.n_exercises() {
            Ok(())
        } else {
            Err(RecError::BadSelectionConfig {
                k: self.k,
                pool_size: self.pool_size,
                n: q.n_exercises(),
            })
        }
    }
}

/// Gap score per exercise: the summed (1 - mastery) over its concepts.
pub fn gap_scores(q: &QMatrix, m: &MasteryVector) -> Result<Vec<f64>, RecError> {
    if m.len() != q.n_concepts() {
        return Err(crate::core::CoreError::DimensionMismatch {
            expected: q.n_concepts(),
            got: m.len(),
        }
        .into());
    }
    let mut scores = vec![0.0; q.n_exercises()];
    for e in q.exercise_ids() {
        scores[e.index()] = q
            .concepts_of(e)?
            .iter()
            .map(|&c| 1.0 - m.get(c))
            .sum();
    }
    Ok(scores)
}

/// Indices of the k highest scores among `candidates`, ties broken by
/// ascending id.
fn top_k_among(scores: &[f64], candidates: &[ExerciseId], k: usize) -> Vec<ExerciseId> {
    let mut order: Vec<ExerciseId> = candidates.to_vec();
    order.sort_by(|a, b| {
        scores[b.index()]
            .partial_cmp(&scores[a.index()])
            .unwrap()
            .then(a.cmp(b))
    });
    order.truncate(k);
    order
}

/// Top-k exercises by gap score over the whole bank.
pub fn greedy_topk(q: &QMatrix, m: &MasteryVector, k: usize) -> Result<RecommendationSet, RecError> {
    let all: Vec<ExerciseId> = q.exercise_ids().collect();
    greedy_topk_among(q, m, k, &all)
}

/// Top-k by gap score restricted to a candidate list (used when attempted
/// exercises are excluded from recommendation).
pub fn greedy_topk_among(
    q: &QMatrix,
    m: &MasteryVector,
    k: usize,
    candidates: &[ExerciseId],
) -> Result<RecommendationSet, RecError> {
    if k > candidates.len() {
        return Err(RecError::KTooLarge { k, n: candidates.len() });
    }
    let scores = gap_scores(q, m)?;
    let picked = top_k_among(&scores, candidates, k);
    Ok(RecommendationSet::new(
        picked.into_iter().map(|e| (e, scores[e.index()])).collect(),
    )?)
}

/// Lexicographic value of a subset: distinct-concept coverage first, summed
/// gap score as the tiebreak.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DiversityValue {
    pub coverage: usize,
    pub gap_sum: f64,
}

pub fn diversity_value(
    subset: &[ExerciseId],
    q: &QMatrix,
    m: &MasteryVector,
) -> Result<DiversityValue, RecError> {
    let scores = gap_scores(q, m)?;
    let mut covered: BTreeSet<ConceptId> = BTreeSet::new();
    let mut gap_sum = 0.0;
    for &e in subset {
        covered.extend(q.concepts_of(e)?.iter().copied());
        gap_sum += scores[e.index()];
    }
    Ok(DiversityValue { coverage: covered.len(), gap_sum })
}

fn retrieve_pool(
    q: &QMatrix,
    scores: &[f64],
    cfg: &ItemRecConfig,
) -> Vec<ExerciseId> {
    let all: Vec<ExerciseId> = q.exercise_ids().collect();
    top_k_among(scores, &all, cfg.pool_size)
}

/// Two-stage selection: retrieve the top pool by gap score, then greedily
/// pick k exercises maximizing marginal concept-coverage gain. Coverage
/// ties break toward higher gap score, then lower id. Attached scores are
/// gap scores.
pub fn rerank_diverse(
    q: &QMatrix,
    m: &MasteryVector,
    cfg: &ItemRecConfig,
) -> Result<RecommendationSet, RecError> {
    let all: Vec<ExerciseId> = q.exercise_ids().collect();
    rerank_diverse_among(q, m, cfg, &all)
}

/// Two-stage selection restricted to a candidate list.
pub fn rerank_diverse_among(
    q: &QMatrix,
    m: &MasteryVector,
    cfg: &ItemRecConfig,
    candidates: &[ExerciseId],
) -> Result<RecommendationSet, RecError> {
    if !(cfg.k >= 1 && cfg.k < cfg.pool_size && cfg.pool_size <= candidates.len()) {
        return Err(RecError::BadSelectionConfig {
            k: cfg.k,
            pool_size: cfg.pool_size,
            n: candidates.len(),
        });
    }
    let scores = gap_scores(q, m)?;
    let pool = top_k_among(&scores, candidates, cfg.pool_size);
    let mut covered: BTreeSet<ConceptId> = BTreeSet::new();
    let mut selected: Vec<ExerciseId> = Vec::with_capacity(cfg.k);
    let mut remaining: Vec<ExerciseId> = pool;
    for _ in 0..cfg.k {
        let mut best: Option<(usize, f64, ExerciseId, usize)> = None;
        for (slot, &e) in remaining.iter().enumerate() {
            let marginal = q
                .concepts_of(e)?
                .iter()
                .filter(|c| !covered.contains(c))
                .count();
            let gap = scores[e.index()];
            let better = match best {
                None => true,
                Some((bm, bg, be, _)) => {
                    marginal > bm
                        || (marginal == bm && (gap > bg || (gap == bg && e < be)))
                }
            };
            if better {
                best = Some((marginal, gap, e, slot));
            }
        }
        let (_, _, e, slot) = best.expect("k < pool_size leaves candidates");
        remaining.swap_remove(slot);
        covered.extend(q.concepts_of(e)?.iter().copied());
        selected.push(e);
    }
    Ok(RecommendationSet::new(
        selected.into_iter().map(|e| (e, scores[e.index()])).collect(),
    )?)
}

const EXACT_MAX_POOL: usize = 20;
const EXACT_MAX_K: usize = 6;

/// Exhaustive re-ranking oracle: the diversity-optimal k-subset of the
/// candidate pool, found by enumerating all combinations. Bounded to
/// pool_size <= 20 and k <= 6. Among value ties the subset that comes first
/// in ascending-id combination order wins.
pub fn exact_rerank(
    q: &QMatrix,
    m: &MasteryVector,
    cfg: &ItemRecConfig,
) -> Result<RecommendationSet, RecError> {
    cfg.validate(q)?;
    if cfg.pool_size > EXACT_MAX_POOL || cfg.k > EXACT_MAX_K {
        return Err(RecError::EnumerationBound {
            pool_size: cfg.pool_size,
            k: cfg.k,
            max_pool: EXACT_MAX_POOL,
            max_k: EXACT_MAX_K,
        });
    }
    let scores = gap_scores(q, m)?;
    let mut pool = retrieve_pool(q, &scores, cfg);
    pool.sort();
    let mut best_subset: Option<Vec<ExerciseId>> = None;
    let mut best_value = DiversityValue { coverage: 0, gap_sum: f64::NEG_INFINITY };
    let mut combo: Vec<usize> = (0..cfg.k).collect();
    loop {
        let subset: Vec<ExerciseId> = combo.iter().map(|&i| pool[i]).collect();
        let value = diversity_value(&subset, q, m)?;
        if best_subset.is_none()
            || value.coverage > best_value.coverage
            || (value.coverage == best_value.coverage && value.gap_sum > best_value.gap_sum)
        {
            best_value = value;
            best_subset = Some(subset);
        }
        if !advance_combination(&mut combo, pool.len()) {
            break;
        }
    }
    let subset = best_subset.expect("pool has at least k candidates");
    Ok(RecommendationSet::new(
        subset.into_iter().map(|e| (e, scores[e.index()])).collect(),
    )?)
}

// Next k-combination of 0..n in lexicographic order; false when exhausted.
fn advance_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - (k - i) {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
