mod common;

use serde_json::json;
use slangcot_core::dataset::load_records;
use slangcot_core::ExperimentReport;

use common::*;

fn script_for_all(dir: &std::path::Path) -> std::path::PathBuf {
    let entries: Vec<serde_json::Value> = FIXTURES
        .iter()
        .flat_map(|f| record_script(f, "a plain answer", f.meaning))
        .collect();
    write(dir, "script.json", &serde_json::to_string(&entries).unwrap())
}

#[test]
fn zero_width_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.jsonl", &dataset_jsonl(&FIXTURES));
    let o = slangcot(&["run", "--dataset", data.to_str().unwrap(), "--width", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));
}

#[test]
fn bad_flags_exit_with_config_code() {
    let o = slangcot(&["run", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "s.json", "[]");
    let missing = dir.path().join("nope.jsonl");
    let o = slangcot(&[
        "run",
        "--dataset",
        missing.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.jsonl", "{\"word\": \"x\", \"meaning\": \"y\"}\n");
    let script = write(dir.path(), "s.json", "[]");
    let o = slangcot(&[
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_script_fails_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.jsonl", &dataset_jsonl(&FIXTURES));
    let script = write(dir.path(), "s.json", "[]");
    let o = slangcot(&[
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("model,temperature,"));
}

#[test]
fn run_prints_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.jsonl", &dataset_jsonl(&FIXTURES));
    let script = script_for_all(dir.path());
    let o = slangcot(&[
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("qwen2-7b-instruct,0.300000,greedy_cot,4,1.000000,1.000000,1.000000,"));
}

#[test]
fn run_writes_report_traces_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.jsonl", &dataset_jsonl(&FIXTURES));
    let script = script_for_all(dir.path());
    let out = dir.path().join("io.csv");
    let o = slangcot(&[
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
        "--strategy",
        "io",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("qwen2-7b-instruct,0.300000,io,4,"));
    let traces = std::fs::read_to_string(dir.path().join("io.csv.traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 4);
    for line in traces.lines() {
        let t: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(t["strategy"], "io");
        assert_eq!(t["final_meaning"], "a plain answer");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("io.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["dataset"]["records_used"], 4);
    assert!(manifest["chat_backend"].as_str().unwrap().starts_with("scripted:"));
    assert_eq!(manifest["embed_backend"], "hashing:256");
}

#[test]
fn sweep_emits_one_row_per_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.jsonl", &dataset_jsonl(&FIXTURES[..1]));
    // Each chain consumes one set of entries, so repeat the script per temperature.
    let entries: Vec<serde_json::Value> = (0..3)
        .flat_map(|_| record_script(&FIXTURES[0], "unused", FIXTURES[0].meaning))
        .collect();
    let script = write(dir.path(), "s.json", &serde_json::to_string(&entries).unwrap());
    let out = dir.path().join("sweep.json");
    let o = slangcot(&[
        "sweep-temp",
        "--dataset",
        data.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
        "--temperatures",
        "0.1,0.5,0.9",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let temps: Vec<f64> = report.rows.iter().map(|r| r.temperature).collect();
    assert_eq!(temps, vec![0.1, 0.5, 0.9]);
    assert!(report.rows.iter().all(|r| r.record_count == 1));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["temperatures"], json!([0.1, 0.5, 0.9]));
}

#[test]
fn preprocess_keeps_drops_and_rewrites() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "raw.jsonl", &dataset_jsonl(&FIXTURES[..3]));
    let script = json!([
        {"contains": "Word: dope\n", "response": "{\"meaning\": \"Something is very good.\", \"example\": \"A: New track?\\nB: It is dope.\"}"},
        {"contains": "Word: salty\n", "response": "{\"mismatch\": true}"},
        {"contains": "Word: lit\n", "response": "no json here"},
    ]);
    let script = write(dir.path(), "s.json", &script.to_string());
    let out = dir.path().join("clean.jsonl");
    let o = slangcot(&[
        "preprocess",
        "--dataset",
        data.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
        "--max-retries",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        String::from_utf8(o.stdout).unwrap().trim(),
        "kept 1, dropped 1, failed 1"
    );
    let kept = load_records(&out, None, None).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].word(), "dope");
    assert_eq!(kept[0].ground_truth_meaning(), "Something is very good.");
    assert_eq!(kept[0].usage_example(), "A: New track?\nB: It is dope.");
}

#[test]
fn preprocess_requires_out() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "raw.jsonl", &dataset_jsonl(&FIXTURES));
    let script = write(dir.path(), "s.json", "[]");
    let o = slangcot(&[
        "preprocess",
        "--dataset",
        data.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn template_override_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let tpl = dir.path().join("tpl");
    std::fs::create_dir(&tpl).unwrap();
    write(
        &tpl,
        "io_baseline.txt",
        "[system]\nBe brief.\n[user]\nDefine {slang_word} as used in: {original_context}\n",
    );
    let data = write(dir.path(), "d.jsonl", &dataset_jsonl(&FIXTURES[..1]));
    let script = write(
        dir.path(),
        "s.json",
        &json!([{"contains": "Define dope as used in:", "response": "something is pretty cool"}]).to_string(),
    );
    let o = slangcot(&[
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
        "--strategy",
        "io",
        "--templates",
        tpl.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().nth(1).unwrap().contains(",io,1,1.000000,"));
}

#[test]
fn template_with_unknown_slot_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let tpl = dir.path().join("tpl");
    std::fs::create_dir(&tpl).unwrap();
    write(&tpl, "io_baseline.txt", "[system]\nx\n[user]\n{nonsense}\n");
    let data = write(dir.path(), "d.jsonl", &dataset_jsonl(&FIXTURES[..1]));
    let o = slangcot(&[
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--templates",
        tpl.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
