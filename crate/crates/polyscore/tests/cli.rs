//! End-to-end tests of the command-line binary: exit codes, JSON output
//! shapes, determinism, and the file-vs-stdout contract.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polyscore"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn polyscore")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn write(dir: &TempDir, name: &str, contents: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

/// Five 5-class examples with varying annotator counts.
fn annotations_5class(dir: &TempDir) -> String {
    write(
        dir,
        "ann.jsonl",
        concat!(
            r#"{"id": "a", "counts": [3, 1, 0, 0, 0]}"#,
            "\n",
            r#"{"id": "b", "counts": [0, 2, 2, 0, 1]}"#,
            "\n",
            r#"{"id": "c", "counts": [1, 1, 1, 1, 1]}"#,
            "\n",
            r#"{"id": "d", "counts": [0, 0, 0, 6, 0]}"#,
            "\n",
            r#"{"id": "e", "counts": [2, 0, 1, 0, 3]}"#,
            "\n",
        ),
    )
}

fn uniform_predictions_5class(dir: &TempDir) -> String {
    let row = |id: &str| format!(r#"{{"id": "{id}", "probs": [0.2, 0.2, 0.2, 0.2, 0.2]}}"#);
    write(
        dir,
        "pred.jsonl",
        &format!("{}\n{}\n{}\n{}\n{}\n", row("a"), row("b"), row("c"), row("d"), row("e")),
    )
}

#[test]
fn evaluate_uniform_prediction_scores_ln_k() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let pred = uniform_predictions_5class(&dir);
    let out = run(&["evaluate", "--annotations", &ann, "--predictions", &pred]);
    let v = stdout_json(&out);
    assert_eq!(v["metric"], "xentropy_soft");
    assert_eq!(v["n"], 5);
    assert_eq!(v["higher_is_better"], false);
    let value = v["value"].as_f64().unwrap();
    assert!((value - 5.0f64.ln()).abs() < 1e-12, "got {value}");
}

#[test]
fn evaluate_logits_match_probabilities_when_consistent() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let pred = uniform_predictions_5class(&dir);
    // Logits equal to ln(p) + constant produce the same softmax.
    let row = |id: &str| format!(r#"{{"id": "{id}", "logits": [7.0, 7.0, 7.0, 7.0, 7.0]}}"#);
    let logits = write(
        &dir,
        "logits.jsonl",
        &format!("{}\n{}\n{}\n{}\n{}\n", row("a"), row("b"), row("c"), row("d"), row("e")),
    );
    let a = stdout_json(&run(&["evaluate", "--annotations", &ann, "--predictions", &pred]));
    let b = stdout_json(&run(&[
        "evaluate",
        "--annotations",
        &ann,
        "--predictions",
        &logits,
        "--logits",
    ]));
    assert_eq!(a["value"], b["value"]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let args = [
        "best",
        "--annotations",
        &ann,
        "--metric",
        "accuracy",
        "--rounds",
        "500",
        "--seed",
        "9",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert!(!first.stdout.is_empty());
}

#[test]
fn input_row_order_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    // Same rows, reversed file order.
    let mut lines: Vec<String> = std::fs::read_to_string(&ann)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    lines.reverse();
    let reversed = write(&dir, "ann_rev.jsonl", &format!("{}\n", lines.join("\n")));
    for args in [
        vec!["fit-prior", "--annotations"],
        vec!["best", "--rounds", "300", "--annotations"],
    ] {
        let r1 = run(&[args.clone(), vec![&ann]].concat());
        let r2 = run(&[args.clone(), vec![&reversed]].concat());
        assert!(r1.status.success(), "{}", String::from_utf8_lossy(&r1.stderr));
        assert_eq!(r1.stdout, r2.stdout, "row order changed {:?} output", args[0]);
    }
}

#[test]
fn out_flag_writes_file_and_silences_stdout() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "fit-prior",
        "--annotations",
        &ann,
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "stdout should be empty when --out is given");
    let text = std::fs::read_to_string(&report_path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["alpha"].is_array());
    assert_eq!(v["alpha"].as_array().unwrap().len(), 5);
    assert_eq!(v["n_examples"], 5);
    // Written file and stdout form are identical.
    let direct = run(&["fit-prior", "--annotations", &ann]);
    assert_eq!(text.as_bytes(), &direct.stdout[..]);
}

#[test]
fn fit_prior_reads_csv_and_jsonl_identically() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let csv = write(
        &dir,
        "ann.csv",
        "id,c0,c1,c2,c3,c4\na,3,1,0,0,0\nb,0,2,2,0,1\nc,1,1,1,1,1\nd,0,0,0,6,0\ne,2,0,1,0,3\n",
    );
    let from_jsonl = run(&["fit-prior", "--annotations", &ann]);
    let from_csv = run(&["fit-prior", "--annotations", &csv, "--format", "csv"]);
    assert!(from_csv.status.success(), "{}", String::from_utf8_lossy(&from_csv.stderr));
    assert_eq!(from_jsonl.stdout, from_csv.stdout);
}

#[test]
fn class_names_flow_into_reports() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let classes = write(&dir, "classes.json", r#"["aa", "bb", "cc", "dd", "ee"]"#);
    let v = stdout_json(&run(&["fit-prior", "--annotations", &ann, "--classes", &classes]));
    assert_eq!(v["class_names"], serde_json::json!(["aa", "bb", "cc", "dd", "ee"]));
}

#[test]
fn calibrate_keeps_t_at_one_for_uniform_predictions() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let pred = uniform_predictions_5class(&dir);
    let v = stdout_json(&run(&["calibrate", "--annotations", &ann, "--predictions", &pred]));
    // Uniform predictions are invariant to temperature, so the optimum is T = 1.
    assert_eq!(v["T"].as_f64().unwrap(), 1.0);
    assert_eq!(v["xentropy_before"], v["xentropy_after"]);
    assert_eq!(v["n"], 5);
}

#[test]
fn simulate_small_run_reports_all_metrics() {
    let v = stdout_json(&run(&[
        "simulate",
        "--scenario",
        "annotators",
        "--examples",
        "200",
        "--rounds",
        "100",
        "--seed",
        "4",
    ]));
    assert_eq!(v["n_examples"], 200);
    assert_eq!(v["rounds"], 100);
    let metrics = v["metrics"].as_array().unwrap();
    assert_eq!(metrics.len(), 3);
    for m in metrics {
        assert!(m["true_oracle"].is_f64());
        assert!(m["relative_error"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn simulate_rejects_reference_outside_anecdotes_scenario() {
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let out = run(&["simulate", "--scenario", "annotators", "--reference", &ann]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn permtest_flags_planted_feature_only() {
    let dir = TempDir::new().unwrap();
    let mut lines = String::new();
    for i in 0..120 {
        let class = if i % 2 == 0 { "less" } else { "more" };
        let planted = if i % 2 == 0 && i % 3 != 0 { r#", "planted""# } else { "" };
        lines.push_str(&format!(
            "{{\"id\": \"i{i}\", \"class\": \"{class}\", \"features\": [\"common\"{planted}]}}\n"
        ));
    }
    let items = write(&dir, "items.jsonl", &lines);
    let v = stdout_json(&run(&["permtest", "--items", &items, "--samples", "20000"]));
    assert_eq!(v["n_items"], 120);
    assert_eq!(v["alpha"], 0.05);
    let features = v["features"].as_array().unwrap();
    assert_eq!(features.len(), 2);
    let by_name = |name: &str| {
        features
            .iter()
            .find(|f| f["feature"] == name)
            .unwrap_or_else(|| panic!("feature {name} missing"))
    };
    assert_eq!(by_name("planted")["rejected"], true);
    assert_eq!(by_name("planted")["lr"], "inf");
    assert_eq!(by_name("common")["rejected"], false);
}

#[test]
fn latent_null_model_explains_zero_percent() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("q0,q1,q2\n");
    for i in 0..40 {
        csv.push_str(if i % 3 == 0 { "1,1,0\n" } else { "0,1,1\n" });
    }
    let responses = write(&dir, "resp.csv", &csv);
    let v = stdout_json(&run(&["latent", "--responses", &responses, "--traits", "0"]));
    assert_eq!(v["percent_explained"].as_f64().unwrap(), 0.0);
    assert_eq!(v["d"], 0);
    assert_eq!(v["n_annotators"], 40);
    assert_eq!(v["n_questions"], 3);
    assert_eq!(v["converged"], true);
}

#[test]
fn latent_writes_loadings_and_scores_csvs() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("q0,q1,q2\n");
    for i in 0..60 {
        csv.push_str(if i % 2 == 0 { "1,1,1\n" } else { "0,0,1\n" });
        if i % 5 == 0 {
            csv.push_str("1,0,1\n");
        }
    }
    let responses = write(&dir, "resp.csv", &csv);
    let loadings = dir.path().join("loadings.csv");
    let scores = dir.path().join("scores.csv");
    let out = run(&[
        "latent",
        "--responses",
        &responses,
        "--traits",
        "1",
        "--nodes",
        "12",
        "--loadings-out",
        loadings.to_str().unwrap(),
        "--scores-out",
        scores.to_str().unwrap(),
    ]);
    let v = stdout_json(&out);
    assert!(v["percent_explained"].as_f64().unwrap() >= 0.0);

    let loadings_text = std::fs::read_to_string(&loadings).unwrap();
    let mut lines = loadings_text.lines();
    assert_eq!(lines.next(), Some("question,loading1,intercept"));
    assert_eq!(lines.clone().count(), 3);
    assert!(lines.all(|l| l.starts_with('q')));

    let scores_text = std::fs::read_to_string(&scores).unwrap();
    let mut lines = scores_text.lines();
    assert_eq!(lines.next(), Some("annotator,trait1"));
    assert_eq!(lines.count(), 72);
}

#[test]
fn missing_input_file_exits_one_with_json_error() {
    let out = run(&["evaluate", "--annotations", "/nonexistent/x.jsonl", "--predictions", "/nonexistent/y.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("/nonexistent/x.jsonl"));
}

#[test]
fn bad_data_exits_one_with_line_number() {
    let dir = TempDir::new().unwrap();
    let ann = write(
        &dir,
        "bad.jsonl",
        "{\"id\": \"a\", \"counts\": [1, 2]}\n{\"id\": \"b\", \"counts\": [1]}\n",
    );
    let out = run(&["fit-prior", "--annotations", &ann]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn usage_errors_exit_two() {
    // Missing required option.
    let out = run(&["best"]);
    assert_eq!(out.status.code(), Some(2));
    // Unknown metric value.
    let dir = TempDir::new().unwrap();
    let ann = annotations_5class(&dir);
    let out = run(&["best", "--annotations", &ann, "--metric", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    // Unknown scenario.
    let out = run(&["simulate", "--scenario", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn drop_empty_flag_admits_zero_count_rows() {
    let dir = TempDir::new().unwrap();
    let ann = write(
        &dir,
        "gaps.jsonl",
        concat!(
            r#"{"id": "a", "counts": [2, 1]}"#,
            "\n",
            r#"{"id": "b", "counts": [0, 0]}"#,
            "\n",
            r#"{"id": "c", "counts": [1, 4]}"#,
            "\n",
        ),
    );
    // Without the flag: data error.
    let strict = run(&["fit-prior", "--annotations", &ann]);
    assert_eq!(strict.status.code(), Some(1));
    // With the flag: the empty row is dropped and reported.
    let v = stdout_json(&run(&["fit-prior", "--annotations", &ann, "--drop-empty"]));
    assert_eq!(v["n_examples"], 2);
    assert_eq!(v["dropped_rows"], 1);
}

#[test]
fn help_lists_all_subcommands() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["fit-prior", "best", "evaluate", "calibrate", "simulate", "permtest", "latent"] {
        assert!(text.contains(sub), "help missing {sub}");
    }
}

#[test]
fn binary_exists() {
    assert!(Path::new(env!("CARGO_BIN_EXE_polyscore")).exists());
}
