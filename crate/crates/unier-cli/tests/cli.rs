//! End-to-end command-line checks driven through the built binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn unier() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unier"))
}

fn run(args: &[&str]) -> Output {
    unier().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const TINY_CONFIG: &str = r#"
seeds = [0]
path_len = 4
eval_k = 4

[dataset]
source = "synthetic"

[dataset.synthetic]
n_students = 20
n_concepts = 3
n_exercises = 6
chain_depth = 3
log_length = 10
seed = 7

[tasks]
list = ["gpp"]

[[methods]]
kind = "greedy_iler"

[[methods]]
kind = "dqn"
episodes = 40

[methods.space]
alpha = [0.05, 0.1]
"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, TINY_CONFIG).unwrap();
    path.display().to_string()
}

#[test]
fn help_exits_zero_everywhere() {
    assert_eq!(code(&run(&["--help"])), 0);
    for sub in [
        "synth", "ingest", "perturb", "fit", "train", "evaluate", "search", "profile", "report",
        "repro",
    ] {
        let out = run(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub} --help should exit 0");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--"), "{sub} help should document flags");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["evaluate", "--nonsense"]);
    assert_eq!(code(&out), 1);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn missing_config_is_a_data_error_with_path() {
    let out = run(&["evaluate", "--config", "/nowhere/missing.toml", "--out", "/tmp/x"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.toml"), "message should carry the path: {err}");
}

#[test]
fn synth_perturb_fit_pipeline() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path());
    let bundle = tmp.path().join("bundle");
    let out = run(&["synth", "--config", &config, "--out", &bundle.display().to_string()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["logs.csv", "qmatrix.csv", "prereqs.csv", "idmap.json"] {
        assert!(bundle.join(f).exists(), "missing {f}");
    }

    // synth is idempotent: rerunning overwrites with identical bytes
    let first = fs::read(bundle.join("logs.csv")).unwrap();
    let out = run(&["synth", "--config", &config, "--out", &bundle.display().to_string()]);
    assert_eq!(code(&out), 0);
    assert_eq!(first, fs::read(bundle.join("logs.csv")).unwrap());

    // cold-start truncation caps every history at 5
    let cold = tmp.path().join("cold");
    let out = run(&[
        "perturb",
        "--in",
        &bundle.display().to_string(),
        "--kind",
        "coldstart",
        "--level",
        "5",
        "--out",
        &cold.display().to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let logs = fs::read_to_string(cold.join("logs.csv")).unwrap();
    let mut per_student = std::collections::HashMap::new();
    for line in logs.lines().skip(1) {
        let student = line.split(',').next().unwrap().to_string();
        *per_student.entry(student).or_insert(0usize) += 1;
    }
    assert!(!per_student.is_empty());
    assert!(per_student.values().all(|&n| n <= 5));

    let params = tmp.path().join("params.json");
    let out = run(&[
        "fit",
        "--in",
        &bundle.display().to_string(),
        "--out",
        &params.display().to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&params).unwrap()).unwrap();
    assert_eq!(parsed["p_init"].as_array().unwrap().len(), 3);

    let bad_kind = run(&[
        "perturb",
        "--in",
        &bundle.display().to_string(),
        "--kind",
        "scramble",
        "--level",
        "0.5",
        "--out",
        &cold.display().to_string(),
    ]);
    assert_eq!(code(&bad_kind), 2);
}

#[test]
fn evaluate_train_search_report_pipeline() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path());
    let results = tmp.path().join("results");
    let out = run(&["evaluate", "--config", &config, "--out", &results.display().to_string()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(results.join("results.csv").exists());
    assert!(results.join("results.json").exists());
    assert!(results.join("report.md").exists());

    // report re-renders from the json dump
    let rerender = tmp.path().join("rerender");
    let out = run(&[
        "report",
        "--in",
        &results.join("results.json").display().to_string(),
        "--out",
        &rerender.display().to_string(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read(results.join("results.csv")).unwrap(),
        fs::read(rerender.join("results.csv")).unwrap()
    );

    let agent = tmp.path().join("agent.json");
    let out = run(&["train", "--config", &config, "--method", "dqn", "--out", &agent.display().to_string()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&agent).unwrap()).unwrap();
    assert_eq!(parsed["kind"], "dqn");
    assert_eq!(parsed["feature_dim"], 5);

    // training an item-level method is a config error
    let out = run(&["train", "--config", &config, "--method", "greedy_iler", "--out", &agent.display().to_string()]);
    assert_eq!(code(&out), 2);

    let best = tmp.path().join("best.json");
    let out = run(&[
        "search", "--config", &config, "--method", "dqn", "--trials", "2", "--out",
        &best.display().to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&best).unwrap()).unwrap();
    assert!(parsed["best"]["assignment"]["alpha"].is_number());
}

#[test]
fn seed_env_var_overrides_config_seeds() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path());
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let run_with_seed = |seed: &str, out: &Path| {
        let o = unier()
            .args(["evaluate", "--config", &config, "--out", &out.display().to_string()])
            .env("UNIER_SEED", seed)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run_with_seed("3", &out_a);
    run_with_seed("4", &out_b);
    assert_ne!(
        fs::read(out_a.join("results.csv")).unwrap(),
        fs::read(out_b.join("results.csv")).unwrap()
    );
    let csv = fs::read_to_string(out_a.join("results.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn unknown_fixture_is_a_data_error() {
    let out = run(&["repro", "--fixture", "not-a-fixture"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn profile_prints_cost_rows() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path());
    let out = run(&["profile", "--config", &config, "--method", "dqn"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("train_time_s"));
    assert!(text.lines().any(|l| l.starts_with("dqn,")), "{text}");
    // an unknown method is a config error
    assert_eq!(code(&run(&["profile", "--config", &config, "--method", "nope"])), 2);
}

#[test]
fn divergent_training_is_a_runtime_error() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("diverge.toml");
    fs::write(
        &config,
        TINY_CONFIG.replace("episodes = 40", "episodes = 40\nalpha = 1e9"),
    )
    .unwrap();
    let out = run(&[
        "train",
        "--config",
        &config.display().to_string(),
        "--method",
        "dqn",
        "--out",
        &tmp.path().join("agent.json").display().to_string(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}
