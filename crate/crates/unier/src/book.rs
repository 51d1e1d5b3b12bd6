//! Compiles the guide's code samples as doc-tests, so `cargo test` keeps
//! every snippet in `book/` in sync with the library.

macro_rules! chapter {
    ($name:ident, $path:literal) => {
        #[doc = include_str!($path)]
        mod $name {}
    };
}

chapter!(introduction, "../../../book/src/introduction.md");
chapter!(students_and_concepts, "../../../book/src/students-and-concepts.md");
chapter!(simulator, "../../../book/src/simulator.md");
chapter!(gain_metric, "../../../book/src/gain-metric.md");
chapter!(item_recommenders, "../../../book/src/item-recommenders.md");
chapter!(path_recommenders, "../../../book/src/path-recommenders.md");
chapter!(datasets, "../../../book/src/datasets.md");
chapter!(experiments, "../../../book/src/experiments.md");
chapter!(cli, "../../../book/src/cli.md");
