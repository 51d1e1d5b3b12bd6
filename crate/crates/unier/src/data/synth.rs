//! Synthetic population generation.
//!
//! Builds a chain prerequisite graph, a round-robin single-concept exercise
//! bank, and a population of hidden ground-truth students whose simulated
//! responses form the interaction logs. Everything is a pure function of
//! the config, including its seed.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::core::{
    build_qmatrix, ConceptId, ExerciseId, History, MasteryVector, PrerequisiteGraph, StudentId,
};
use crate::seed;
use crate::sim::{BktParams, GroundTruthStudent};

use super::{DataError, Dataset, IdMaps};

fn default_range_init() -> (f64, f64) {
    (0.1, 0.3)
}
fn default_range_learn() -> (f64, f64) {
    (0.2, 0.4)
}
fn default_range_guess() -> (f64, f64) {
    (0.1, 0.3)
}
fn default_range_slip() -> (f64, f64) {
    (0.05, 0.2)
}
fn default_range_mastery() -> (f64, f64) {
    (0.0, 0.3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_students: usize,
    pub n_concepts: usize,
    pub n_exercises: usize,
    /// Length of the prerequisite chain c0 -> c1 -> ...; remaining concepts
    /// are flat. 0 or 1 means no prerequisites at all.
    pub chain_depth: usize,
    pub log_length: usize,
    pub seed: u64,
    #[serde(default = "default_range_init")]
    pub p_init: (f64, f64),
    #[serde(default = "default_range_learn")]
    pub p_learn: (f64, f64),
    #[serde(default = "default_range_guess")]
    pub p_guess: (f64, f64),
    #[serde(default = "default_range_slip")]
    pub p_slip: (f64, f64),
    #[serde(default = "default_range_mastery")]
    pub init_mastery: (f64, f64),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_students == 0 || self.n_concepts == 0 {
            return Err(DataError::BadConfig("need at least one student and one concept".into()));
        }
        if self.chain_depth > self.n_concepts {
            return Err(DataError::BadConfig(format!(
                "chain_depth {} exceeds n_concepts {}",
                self.chain_depth, self.n_concepts
            )));
        }
        if self.n_exercises < self.n_concepts {
            return Err(DataError::BadConfig(format!(
                "n_exercises {} must be >= n_concepts {} so every concept is covered",
                self.n_exercises, self.n_concepts
            )));
        }
        for (name, (lo, hi)) in [
            ("p_init", self.p_init),
            ("p_learn", self.p_learn),
            ("p_guess", self.p_guess),
            ("p_slip", self.p_slip),
        ] {
            if !(lo <= hi && lo > 0.0 && hi < 1.0) {
                return Err(DataError::BadConfig(format!("{name} range ({lo}, {hi}) invalid")));
            }
        }
        if self.p_guess.1 + self.p_slip.1 >= 1.0 {
            return Err(DataError::BadConfig("p_guess + p_slip ranges may reach 1".into()));
        }
        let (lo, hi) = self.init_mastery;
        if !(lo <= hi && (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi)) {
            return Err(DataError::BadConfig("init_mastery range invalid".into()));
        }
        Ok(())
    }
}

fn sample_range(rng: &mut StdRng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Generates a dataset plus the hidden ground-truth population that
/// produced its logs (returned in post-log state).
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Dataset, Vec<GroundTruthStudent>), DataError> {
    cfg.validate()?;
    let pairs: Vec<(ExerciseId, ConceptId)> = (0..cfg.n_exercises)
        .map(|e| (ExerciseId::from(e), ConceptId::from(e % cfg.n_concepts)))
        .collect();
    let q = build_qmatrix(&pairs, cfg.n_exercises, cfg.n_concepts)?;
    let prereqs = PrerequisiteGraph::chain(cfg.n_concepts, cfg.chain_depth);

    let mut logs = Vec::with_capacity(cfg.n_students);
    let mut population = Vec::with_capacity(cfg.n_students);
    for s in 0..cfg.n_students {
        let student_seed = seed::derive(cfg.seed, s as u64);
        let mut param_rng = StdRng::seed_from_u64(seed::derive(student_seed, 0));
        let mut draw = |range| {
            (0..cfg.n_concepts)
                .map(|_| sample_range(&mut param_rng, range))
                .collect::<Vec<f64>>()
        };
        let p_init = draw(cfg.p_init);
        let p_learn = draw(cfg.p_learn);
        let p_guess = draw(cfg.p_guess);
        let p_slip = draw(cfg.p_slip);
        let initial = MasteryVector::new(draw(cfg.init_mastery))?;
        let params = BktParams::new(p_init, p_learn, p_guess, p_slip)?;
        let mut student =
            GroundTruthStudent::new(initial, params, prereqs.clone(), seed::derive(student_seed, 1))?;
        let mut exercise_rng = StdRng::seed_from_u64(seed::derive(student_seed, 2));
        let mut h = History::new(StudentId(s as u32));
        for _ in 0..cfg.log_length {
            let e = ExerciseId::from(exercise_rng.gen_range(0..cfg.n_exercises));
            let correct = student.respond(e, &q)?;
            h.append_next(e, correct);
        }
        logs.push(h);
        population.push(student);
    }

    let id_maps = IdMaps {
        students: (0..cfg.n_students).map(|s| format!("s{s}")).collect(),
        exercises: (0..cfg.n_exercises).map(|e| format!("e{e}")).collect(),
        concepts: (0..cfg.n_concepts).map(|c| format!("c{c}")).collect(),
    };
    let dataset = Dataset { q, prereqs, logs, id_maps };
    dataset.validate()?;
    Ok((dataset, population))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            n_students: 8,
            n_concepts: 3,
            n_exercises: 6,
            chain_depth: 3,
            log_length: 20,
            seed: 42,
            p_init: default_range_init(),
            p_learn: default_range_learn(),
            p_guess: default_range_guess(),
            p_slip: default_range_slip(),
            init_mastery: default_range_mastery(),
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, _) = synth_generate(&small_cfg()).unwrap();
        let (b, _) = synth_generate(&small_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shapes_and_counts() {
        let cfg = SynthConfig { n_students: 200, log_length: 50, ..small_cfg() };
        let (d, pop) = synth_generate(&cfg).unwrap();
        assert_eq!(d.logs.len(), 200);
        assert_eq!(pop.len(), 200);
        let total: usize = d.logs.iter().map(|h| h.len()).sum();
        assert_eq!(total, 10_000);
        // round-robin coverage: exercise i covers concept i mod |C|
        for e in d.q.exercise_ids() {
            assert_eq!(
                d.q.concepts_of(e).unwrap(),
                &[ConceptId::from(e.index() % cfg.n_concepts)]
            );
        }
    }

    #[test]
    fn chain_depth_one_is_flat() {
        let cfg = SynthConfig { chain_depth: 1, ..small_cfg() };
        let (d, _) = synth_generate(&cfg).unwrap();
        assert!(d.prereqs.is_flat());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { chain_depth: 9, ..small_cfg() }.validate().is_err());
        assert!(SynthConfig { n_exercises: 2, ..small_cfg() }.validate().is_err());
        assert!(SynthConfig { p_guess: (0.5, 0.6), p_slip: (0.4, 0.5), ..small_cfg() }
            .validate()
            .is_err());
        assert!(SynthConfig { p_init: (0.5, 0.2), ..small_cfg() }.validate().is_err());
    }
}
