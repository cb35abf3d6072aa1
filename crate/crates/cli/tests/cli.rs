mod common;

use std::fs;

use common::{dead_url, fixture, polyg2p, stderr, stdout, StubServer};
use tempfile::tempdir;

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_dict_reports_entries_and_histogram() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("dict.jsonl");
    let o = polyg2p(&["build-dict", "--raw", path(&fixture("raw_records.jsonl")), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "entries: 2\n2 candidates: 2\n");
    let dict = polyg2p::dictionary::load_dictionary(&out).unwrap();
    assert_eq!(dict.entry_count(), 2);
    assert!(!dict.contains('的'));
    let hong = dict.candidates('红').iter().map(ToString::to_string).collect::<Vec<_>>();
    assert_eq!(hong, ["hong2", "gong1"]);
}

#[test]
fn build_dict_warns_on_empty_input() {
    let dir = tempdir().unwrap();
    let raw = dir.path().join("empty.jsonl");
    fs::write(&raw, "").unwrap();
    let out = dir.path().join("dict.jsonl");
    let o = polyg2p(&["build-dict", "--raw", path(&raw), "--out", path(&out)]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    assert_eq!(stdout(&o), "entries: 0\n");
    assert_eq!(polyg2p::dictionary::load_dictionary(&out).unwrap().entry_count(), 0);
}

#[test]
fn build_dict_names_the_bad_line() {
    let dir = tempdir().unwrap();
    let o = polyg2p(&[
        "build-dict",
        "--raw",
        path(&fixture("raw_bad_line7.jsonl")),
        "--out",
        path(&dir.path().join("d.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 7"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(polyg2p(&["build-dict", "--bogus"]).status.code(), Some(1));
    assert_eq!(polyg2p(&["no-such-command"]).status.code(), Some(1));
    let help = polyg2p(&["predict", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = stdout(&help);
    for flag in ["--dict", "--templates", "--style", "--knowledge", "--backend", "--index"] {
        assert!(text.contains(flag), "help lacks {flag}");
    }
    let help = stdout(&polyg2p(&["ablate", "--help"]));
    for flag in ["--data", "--seed", "--out", "--ratio", "--style", "--knowledge", "--backend"] {
        assert!(help.contains(flag), "ablate help lacks {flag}");
    }
}

#[test]
fn missing_inputs_are_data_errors() {
    let o = polyg2p(&["stats", "--data", "/nonexistent/cpp"]);
    assert_eq!(o.status.code(), Some(2));
    let o = polyg2p(&[
        "predict",
        "农夫释耒，▂红▂女下机",
        "--dict",
        "/nonexistent/dict.jsonl",
        "--backend",
        "remote:http://127.0.0.1:9",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_majority_on_fixture() {
    let dir = tempdir().unwrap();
    let o = polyg2p(&[
        "evaluate",
        "--data",
        path(&fixture("majority")),
        "--dict",
        path(&fixture("dictionary.jsonl")),
        "--backend",
        "majority",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy 0.9000 (9/10)"), "{}", stdout(&o));
    let text = fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(record["accuracy"], 0.9);
    assert_eq!(record["n_correct"], 9);
    assert_eq!(record["condition"]["backend"], "majority");
    assert_eq!(record["condition"]["split_source"], "published");
    assert_eq!(record["per_character"]["长"]["correct"], 6);
}

#[test]
fn predict_with_stub_backend() {
    let server = StubServer::start(200, r#"{"text":"gong1"}"#);
    let backend = format!("remote:{}", server.url);
    let o = polyg2p(&[
        "predict",
        "农夫释耒，▂红▂女下机",
        "--dict",
        path(&fixture("dictionary.jsonl")),
        "--backend",
        &backend,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "gong1\tvalid\n");
    let sent: serde_json::Value = serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["greedy"], true);
    assert!(sent["prompt"].as_str().unwrap().contains("▂红▂"));

    // explicit index instead of markers; the answer needs correcting
    let server = StubServer::start(200, r#"{"text":" gong "}"#);
    let o = polyg2p(&[
        "predict",
        "农夫释耒，红女下机",
        "--index",
        "5",
        "--dict",
        path(&fixture("dictionary.jsonl")),
        "--style",
        "completion",
        "--knowledge",
        "off",
        "--backend",
        &format!("remote:{}", server.url),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "gong1\tcorrected from \" gong \"\n");
}

#[test]
fn backend_url_from_environment() {
    let server = StubServer::start(200, r#"{"text":"hong2"}"#);
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_polyg2p"))
        .args(["predict", "▂红▂旗", "--dict", path(&fixture("dictionary.jsonl"))])
        .env("POLYG2P_BACKEND_URL", &server.url)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "hong2\tvalid\n");
}

#[test]
fn unreachable_backend_exits_3() {
    let o = polyg2p(&[
        "predict",
        "农夫释耒，▂红▂女下机",
        "--dict",
        path(&fixture("dictionary.jsonl")),
        "--backend",
        &format!("remote:{}", dead_url()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("backend unavailable"), "{}", stderr(&o));
    // no backend at all
    let o = polyg2p(&["predict", "▂红▂旗", "--dict", path(&fixture("dictionary.jsonl"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_backend_replies_exit_3() {
    for (status, body) in [(500, r#"{"text":"gong1"}"#), (200, r#"{"answer":"gong1"}"#), (200, "nope")] {
        let server = StubServer::start(status, body);
        let o = polyg2p(&[
            "predict",
            "▂红▂旗",
            "--dict",
            path(&fixture("dictionary.jsonl")),
            "--backend",
            &format!("remote:{}", server.url),
        ]);
        assert_eq!(o.status.code(), Some(3), "{status} {body}: {}", stderr(&o));
    }
}

#[test]
fn unknown_character_in_choice_style_is_a_data_error() {
    let server = StubServer::start(200, r#"{"text":"xing2"}"#);
    let o = polyg2p(&[
        "predict",
        "▂行▂走",
        "--dict",
        path(&fixture("dictionary.jsonl")),
        "--backend",
        &format!("remote:{}", server.url),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not in the dictionary"), "{}", stderr(&o));
}

#[test]
fn ablate_with_remote_backend_writes_one_record_per_condition() {
    let server = StubServer::start(200, r#"{"text":"chang2"}"#);
    let dir = tempdir().unwrap();
    let o = polyg2p(&[
        "ablate",
        "--data",
        path(&fixture("majority")),
        "--dict",
        path(&fixture("dictionary.jsonl")),
        "--style",
        "completion,choice",
        "--knowledge",
        "off,on",
        "--ratio",
        "1.0",
        "--backend",
        &format!("remote:{}", server.url),
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
    let labels: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["condition"]["label"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(
        labels,
        [
            "completion/knowledge-off/ratio-1.0",
            "completion/knowledge-on/ratio-1.0",
            "choice/knowledge-off/ratio-1.0",
            "choice/knowledge-on/ratio-1.0"
        ]
    );
    assert!(dir.path().join("table.txt").is_file());
    // The stub always says chang2: right for the six 长 rows, and corrected
    // to hong2 (distance 2) for the three 红 rows.
    assert!(text.lines().all(|l| l.contains("\"n_correct\":9")), "{text}");
}

#[test]
fn stats_on_fixture_directory() {
    let o = polyg2p(&["stats", "--data", path(&fixture("majority"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(stats["n_samples"], 17);
    assert_eq!(stats["n_characters"], 2);
    assert_eq!(stats["two_pinyin_fraction"], 1.0);
}
