//! Bounded random hyperparameter search.
//!
//! Samples configurations uniformly from the declared space, stopping after
//! the trial budget or once the wall-clock budget has elapsed (the current
//! trial is never interrupted). Fully discrete spaces of manageable size
//! are sampled without replacement, so a space smaller than the budget is
//! simply exhausted. The best trial wins; ties go to the earlier trial.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One hyperparameter's sampling domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    /// Finite choice list.
    Discrete(Vec<f64>),
    /// Uniform continuous range.
    Continuous { lo: f64, hi: f64 },
}

impl SpaceSpec {
    fn validate(&self, name: &str) -> Result<(), HarnessError> {
        match self {
            SpaceSpec::Discrete(choices) if choices.is_empty() => Err(HarnessError::Config(
                format!("search space for '{name}' has no choices"),
            )),
            SpaceSpec::Continuous { lo, hi } if !(lo <= hi) => Err(HarnessError::Config(
                format!("search space for '{name}' has lo > hi"),
            )),
            _ => Ok(()),
        }
    }
}

pub type Assignment = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub params: BTreeMap<String, SpaceSpec>,
    pub trial_budget: usize,
    pub wall_clock_s: Option<f64>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.params.is_empty() {
            return Err(HarnessError::Config("search space is empty".into()));
        }
        if self.trial_budget == 0 {
            return Err(HarnessError::Config("trial budget must be positive".into()));
        }
        if let Some(s) = self.wall_clock_s {
            if !(s > 0.0) {
                return Err(HarnessError::Config("wall-clock budget must be positive".into()));
            }
        }
        for (name, spec) in &self.params {
            spec.validate(name)?;
        }
        Ok(())
    }

    /// Size of the full discrete product; `None` when any dimension is
    /// continuous or the product overflows the enumeration cap.
    fn discrete_product(&self) -> Option<usize> {
        const CAP: usize = 10_000;
        let mut total = 1usize;
        for spec in self.params.values() {
            match spec {
                SpaceSpec::Discrete(choices) => {
                    total = total.checked_mul(choices.len())?;
                    if total > CAP {
                        return None;
                    }
                }
                SpaceSpec::Continuous { .. } => return None,
            }
        }
        Some(total)
    }

    fn enumerate(&self) -> Vec<Assignment> {
        let mut out: Vec<Assignment> = vec![BTreeMap::new()];
        for (name, spec) in &self.params {
            let choices = match spec {
                SpaceSpec::Discrete(c) => c,
                SpaceSpec::Continuous { .. } => unreachable!("enumerate is discrete-only"),
            };
            let mut next = Vec::with_capacity(out.len() * choices.len());
            for partial in &out {
                for &v in choices {
                    let mut a = partial.clone();
                    a.insert(name.clone(), v);
                    next.push(a);
                }
            }
            out = next;
        }
        out
    }

    fn sample(&self, rng: &mut StdRng) -> Assignment {
        self.params
            .iter()
            .map(|(name, spec)| {
                let v = match spec {
                    SpaceSpec::Discrete(choices) => choices[rng.gen_range(0..choices.len())],
                    SpaceSpec::Continuous { lo, hi } => {
                        if lo == hi {
                            *lo
                        } else {
                            rng.gen_range(*lo..=*hi)
                        }
                    }
                };
                (name.clone(), v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub assignment: Assignment,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: TrialResult,
    pub trials_run: usize,
}

/// Runs the search, maximizing `objective`. Deterministic given the seed
/// and a deterministic objective.
pub fn random_search<F>(
    space: &SearchSpace,
    seed: u64,
    mut objective: F,
) -> Result<SearchOutcome, HarnessError>
where
    F: FnMut(&Assignment) -> Result<f64, HarnessError>,
{
    space.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let assignments: Vec<Assignment> = match space.discrete_product() {
        Some(total) => {
            let mut all = space.enumerate();
            debug_assert_eq!(all.len(), total);
            all.shuffle(&mut rng);
            all.truncate(space.trial_budget);
            all
        }
        None => (0..space.trial_budget).map(|_| space.sample(&mut rng)).collect(),
    };
    let started = Instant::now();
    let mut best: Option<TrialResult> = None;
    let mut trials_run = 0;
    for (index, assignment) in assignments.into_iter().enumerate() {
        if let Some(budget) = space.wall_clock_s {
            if trials_run > 0 && started.elapsed().as_secs_f64() >= budget {
                break;
            }
        }
        let value = objective(&assignment)?;
        trials_run += 1;
        let better = match &best {
            None => true,
            Some(b) => value > b.objective,
        };
        if better {
            best = Some(TrialResult { index, assignment, objective: value });
        }
    }
    match best {
        Some(best) => Ok(SearchOutcome { best, trials_run }),
        None => Err(HarnessError::NoTrials),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discrete(choices: &[f64]) -> SpaceSpec {
        SpaceSpec::Discrete(choices.to_vec())
    }

    fn space(params: Vec<(&str, SpaceSpec)>, budget: usize) -> SearchSpace {
        SearchSpace {
            params: params.into_iter().map(|(n, s)| (n.to_string(), s)).collect(),
            trial_budget: budget,
            wall_clock_s: None,
        }
    }

    #[test]
    fn never_exceeds_trial_budget() {
        let s = space(vec![("a", SpaceSpec::Continuous { lo: 0.0, hi: 1.0 })], 20);
        let mut calls = 0;
        let out = random_search(&s, 1, |_| {
            calls += 1;
            Ok(0.5)
        })
        .unwrap();
        assert_eq!(calls, 20);
        assert_eq!(out.trials_run, 20);
    }

    #[test]
    fn small_discrete_space_is_exhausted_without_replacement() {
        let s = space(vec![("a", discrete(&[1.0, 2.0, 3.0]))], 20);
        let mut seen = Vec::new();
        let out = random_search(&s, 7, |a| {
            seen.push(a["a"]);
            Ok(0.0)
        })
        .unwrap();
        assert_eq!(out.trials_run, 3);
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn constant_objective_returns_trial_zero() {
        let s = space(
            vec![("a", discrete(&[1.0, 2.0])), ("b", discrete(&[0.1, 0.2, 0.3]))],
            20,
        );
        let out = random_search(&s, 3, |_| Ok(1.0)).unwrap();
        assert_eq!(out.best.index, 0);
    }

    #[test]
    fn maximizes_the_objective() {
        let s = space(vec![("a", discrete(&[1.0, 5.0, 3.0]))], 10);
        let out = random_search(&s, 11, |a| Ok(a["a"])).unwrap();
        assert_eq!(out.best.assignment["a"], 5.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = space(
            vec![
                ("a", SpaceSpec::Continuous { lo: 0.0, hi: 1.0 }),
                ("b", discrete(&[1.0, 2.0, 4.0])),
            ],
            8,
        );
        let run = || {
            let mut log = Vec::new();
            random_search(&s, 99, |a| {
                log.push((a["a"], a["b"]));
                Ok(a["a"] * a["b"])
            })
            .unwrap();
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn validation_errors() {
        assert!(space(vec![], 5).validate().is_err());
        assert!(space(vec![("a", discrete(&[]))], 5).validate().is_err());
        assert!(space(vec![("a", discrete(&[1.0]))], 0).validate().is_err());
        let bad = SearchSpace {
            params: [("a".to_string(), SpaceSpec::Continuous { lo: 2.0, hi: 1.0 })]
                .into_iter()
                .collect(),
            trial_budget: 5,
            wall_clock_s: None,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn wall_clock_budget_stops_new_trials() {
        let mut s = space(vec![("a", discrete(&[1.0, 2.0, 3.0, 4.0]))], 4);
        s.wall_clock_s = Some(0.01);
        let mut calls = 0;
        let out = random_search(&s, 5, |_| {
            calls += 1;
            std::thread::sleep(std::time::Duration::from_millis(30));
            Ok(0.0)
        })
        .unwrap();
        // the first trial always runs; the budget is exceeded before the second
        assert_eq!(calls, 1);
        assert_eq!(out.trials_run, 1);
    }

    #[test]
    fn objective_errors_propagate() {
        let s = space(vec![("a", discrete(&[1.0, 2.0]))], 5);
        let err = random_search(&s, 1, |_| {
            Err(HarnessError::Config("objective exploded".into()))
        });
        assert!(err.is_err());
    }
}
