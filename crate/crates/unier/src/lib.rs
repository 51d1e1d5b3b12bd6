//! A benchmark engine for exercise recommendation.
//!
//! The engine evaluates item-level recommenders (scored exercise sets) and
//! path-level recommenders (ordered exercise sequences) on the same footing:
//! every method's output is projected to an ordered learning path, a shared
//! simulated student executes it, and the weighted per-concept mastery
//! improvement is the score. Task weightings cover targeted goal training
//! and global proficiency promotion; perturbation protocols (sparsity,
//! cold-start, label noise) and an experiment runner with profiling and
//! reporting complete the pipeline.
//!
//! See the `book/` guide for a narrative walkthrough; its code samples are
//! compiled as doc-tests.

pub mod core;
pub mod data;
pub mod harness;
pub mod metrics;
pub mod rec;
pub mod seed;
pub mod sim;

mod book;
