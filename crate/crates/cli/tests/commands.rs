use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn npcbench(args: &[&str], dir: &Path) -> (i32, Value, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_npcbench"))
        .args(args)
        .current_dir(dir)
        .env_remove("NPCBENCH_CONFIG")
        .env_remove("NPCBENCH_SCENES")
        .env_remove("NPCBENCH_EMBED_URL")
        .output()
        .expect("binary runs");
    let parse = |b: &[u8]| {
        let s = String::from_utf8_lossy(b);
        // tracing may share stderr; the error document is then the last line.
        serde_json::from_str(&s).ok().or_else(|| s.lines().last().and_then(|l| serde_json::from_str(l).ok())).unwrap_or(Value::Null)
    };
    (out.status.code().unwrap_or(-1), parse(&out.stdout), parse(&out.stderr))
}

#[test]
fn gen_episodes_splits_300_into_100_and_200() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = npcbench(&["gen-episodes", "--task", "object_loconav", "--count", "300", "--seed", "7", "--out", "ep.jsonl"], dir.path());
    assert_eq!(code, 0);
    assert_eq!(out["written"], 300);
    let text = std::fs::read_to_string(dir.path().join("ep.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 300);
    let validation = lines.iter().filter(|e| e["split"] == "validation").count();
    let test = lines.iter().filter(|e| e["split"] == "test").count();
    assert_eq!((validation, test), (100, 200));
}

#[test]
fn generation_and_bench_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for tag in ["a", "b"] {
        let ep = format!("ep_{tag}.jsonl");
        let res = format!("res_{tag}.jsonl");
        let (code, _, err) = npcbench(&["gen-episodes", "--task", "social_loconav", "--count", "12", "--seed", "4", "--out", &ep], d);
        assert_eq!(code, 0, "{err}");
        let (code, _, err) = npcbench(&["run-bench", "--episodes", &ep, "--agent", "modular", "--out", &res], d);
        assert_eq!(code, 0, "{err}");
    }
    let read = |n: &str| std::fs::read(d.join(n)).unwrap();
    assert_eq!(read("ep_a.jsonl"), read("ep_b.jsonl"));
    assert_eq!(read("res_a.jsonl"), read("res_b.jsonl"));
}

#[test]
fn run_bench_on_validation_then_eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    npcbench(&["gen-episodes", "--task", "object_loconav", "--count", "9", "--seed", "2", "--out", "ep.jsonl"], d);
    let (code, report, err) =
        npcbench(&["run-bench", "--episodes", "ep.jsonl", "--agent", "random", "--split", "validation", "--out", "res.jsonl"], d);
    assert_eq!(code, 0, "{err}");
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["split"], "validation");
    assert_eq!(reports[0]["episodes"], 3);
    assert!(report["table"].as_str().unwrap().contains("SPL"));

    let (code, again, _) = npcbench(&["eval", "res.jsonl"], d);
    assert_eq!(code, 0);
    assert_eq!(again["reports"], report["reports"]);
}

#[test]
fn eval_of_empty_results_is_an_undefined_metric_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let (code, out, err) = npcbench(&["eval", "empty.jsonl"], dir.path());
    assert_ne!(code, 0);
    assert!(out.is_null());
    assert_eq!(err["error"]["kind"], "undefined_metric");
}

#[test]
fn malformed_results_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{\"episode_id\": 3}\n").unwrap();
    let (code, _, err) = npcbench(&["eval", "bad.jsonl"], dir.path());
    assert_ne!(code, 0);
    assert_eq!(err["error"]["kind"], "format");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 1"));
}

#[test]
fn validate_scene_and_occupancy_export() {
    let dir = tempfile::tempdir().unwrap();
    let scene = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/apartment_a.json");
    let scene = scene.to_str().unwrap();
    let (code, out, err) = npcbench(&["validate-scene", scene], dir.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(out["scene_id"], "apartment_a");

    let (code, _, err) = npcbench(&["build-occupancy", scene, "--out", "occ.pgm"], dir.path());
    assert_eq!(code, 0, "{err}");
    let pgm = std::fs::read(dir.path().join("occ.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
    // Every pixel is one of undefined, obstacle or free.
    let header_end = pgm.iter().enumerate().filter(|(_, b)| **b == b'\n').nth(2).unwrap().0 + 1;
    assert!(pgm[header_end..].iter().all(|p| matches!(p, 0 | 128 | 255)));

    let (code, _, err) = npcbench(&["validate-scene", "missing.json"], dir.path());
    assert_ne!(code, 0);
    assert!(err["error"]["kind"].is_string());
}

#[test]
fn qa_eval_scores_fixture() {
    let qa = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/qa.jsonl");
    let scene = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/five_objects.json");
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = npcbench(&["qa-eval", qa.to_str().unwrap(), "--scenes", scene.to_str().unwrap()], dir.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(out["scored"], 10);
    let items = out["items"].as_array().unwrap();
    let mean = items.iter().map(|i| i["score"].as_f64().unwrap()).sum::<f64>() / items.len() as f64;
    assert_eq!(out["mean"].as_f64().unwrap(), mean);
}
