//! End-to-end runs of the `evgraph` binary against the shipped configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evgraph_cli::config::load_config;
use evgraph_cli::report::AdvTrainSummary;
use evgraph_cli::runner::read_records;
use evgraph_core::{edit_distance, synth, FeatureExtractor, InputState, Registry};
use serde_json::Value;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn evgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evgraph"))
        .args(args)
        .env_remove("EVGRAPH_SEED")
        .env_remove("EVGRAPH_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Copies a shipped config into `dir`, applying `edit` to its JSON.
fn copy_config(name: &str, dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(configs_dir().join(name)).unwrap()).unwrap();
    edit(&mut v);
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            let out = evgraph(&["validate-config", "--config", s(&p)]);
            assert!(ok(&out).contains(": ok"));
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn synth_config_matches_generator() {
    let cfg = load_config(&configs_dir().join("synth_beam.json")).unwrap();
    assert_eq!(cfg.transformer_specs(), synth::transformer_specs());
    let ours = cfg.extractor(&Registry::with_builtins()).unwrap();
    let theirs = synth::encoder();
    let data = synth::SynthParams::default().generate(20, 4);
    for st in &data.states {
        assert_eq!(ours.extract(st).unwrap(), theirs.extract(st).unwrap());
    }
}

#[test]
fn generate_then_replay_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = copy_config("synth_beam.json", dir.path(), |_| {});
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    ok(&evgraph(&["synth", "--out", s(&train), "--rows", "600", "--seed", "1"]));
    ok(&evgraph(&["synth", "--out", s(&test), "--rows", "60", "--seed", "2"]));
    let model = dir.path().join("models/synth_lr.json");
    std::fs::create_dir_all(model.parent().unwrap()).unwrap();
    assert!(ok(&evgraph(&["train-model", "--config", s(&cfg), "--dataset", s(&train), "--out", s(&model)])).contains("trained LR"));

    let res = dir.path().join("res.jsonl");
    let report = dir.path().join("rep.json");
    let table = ok(&evgraph(&[
        "generate", "--config", s(&cfg), "--dataset", s(&test), "--out", s(&res), "--report", s(&report),
    ]));
    assert!(table.starts_with("Model | Method"));
    assert!(table.contains("Beam(Brute-Force)"));
    let records = read_records(&res).unwrap();
    assert_eq!(records.len(), 60);
    assert!(records.iter().enumerate().all(|(i, r)| r.index == i && r.error.is_none()));
    assert!(records.iter().any(|r| r.success && r.transforms_used > 0));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["metrics"]["samples"], 60);

    assert!(ok(&evgraph(&["replay", "--config", s(&cfg), "--results", s(&res)])).contains("60 reproduced"));

    // Point one record's final state somewhere its edges do not lead.
    let text = std::fs::read_to_string(&res).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let victim = lines.iter_mut().find(|r| r["transforms_used"].as_u64() > Some(0)).unwrap();
    victim["final"]["vector"][7]["float"] = Value::from(99.0);
    let tampered = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered, lines.iter().map(|l| l.to_string() + "\n").collect::<String>()).unwrap();
    let out = evgraph(&["replay", "--config", s(&cfg), "--results", s(&tampered)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 mismatched"));
}

#[test]
fn config_errors_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, Box<dyn FnOnce(&mut Value)>, &str); 4] = [
        ("unknown key", Box::new(|v| v["bogus"] = Value::from(1)), "bogus"),
        (
            "unknown transformer",
            Box::new(|v| v["transformer_params"][0]["transformer_type"] = Value::from("warp")),
            "unknown transformer type `warp`",
        ),
        (
            "annealing with a non-random ranker",
            Box::new(|v| {
                v["search_alg"] = serde_json::json!({"type": "simulated_annealing", "args": {"time_budget": 1.0, "max_transforms": 2}})
            }),
            "invalid pairing",
        ),
        (
            "unknown processor",
            Box::new(|v| v["transformer_params"][0]["input_processor_name"] = Value::from("nope")),
            "unresolved hook",
        ),
    ];
    for (what, edit, needle) in cases {
        let cfg = copy_config("synth_beam.json", dir.path(), edit);
        let out = evgraph(&["validate-config", "--config", s(&cfg)]);
        assert_eq!(out.status.code(), Some(1), "{what}");
        assert!(stderr(&out).contains(needle), "{what}: {}", stderr(&out));
    }
    // Parse errors name the line.
    let cfg = dir.path().join("broken.json");
    std::fs::write(&cfg, "{\n  \"input_schema\": {},\n  \"transformer_params\": 3\n}").unwrap();
    let out = evgraph(&["validate-config", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("broken.json:3:"), "{}", stderr(&out));
    assert!(stderr(&out).contains("transformer_params"));
}

#[test]
fn strict_schema_aborts_lenient_skips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = copy_config("synth_beam.json", dir.path(), |_| {});
    let data = dir.path().join("d.csv");
    ok(&evgraph(&["synth", "--out", s(&data), "--rows", "5", "--seed", "3"]));
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // The score_type cell of the second data row gets an unknown category.
    let mut cells: Vec<&str> = lines[2].split(',').collect();
    cells[1] = "martian";
    lines[2] = cells.join(",");
    std::fs::write(&data, lines.join("\n") + "\n").unwrap();

    let model = dir.path().join("models/synth_lr.json");
    std::fs::create_dir_all(model.parent().unwrap()).unwrap();
    let train = dir.path().join("train.csv");
    ok(&evgraph(&["synth", "--out", s(&train), "--rows", "200", "--seed", "1"]));
    ok(&evgraph(&["train-model", "--config", s(&cfg), "--dataset", s(&train), "--out", s(&model)]));

    let res = dir.path().join("r.jsonl");
    let out = evgraph(&["generate", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&res), "--strict-schema"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
    assert!(stderr(&out).contains("martian"));

    let out = evgraph(&["generate", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&res)]);
    ok(&out);
    assert!(stderr(&out).contains("skipped 1"));
    assert_eq!(read_records(&res).unwrap().len(), 4);
}

#[test]
fn external_mock_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = copy_config("synth_external.json", dir.path(), |v| {
        v["model"]["command"][0] = Value::from(env!("CARGO_BIN_EXE_evgraph-mock-model"));
    });
    let data = dir.path().join("d.csv");
    ok(&evgraph(&["synth", "--out", s(&data), "--rows", "40", "--seed", "5"]));
    let res = dir.path().join("r.jsonl");
    let table = ok(&evgraph(&["generate", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&res)]));
    assert!(table.contains("External"));
    let records = read_records(&res).unwrap();
    assert!(records.iter().all(|r| r.error.is_none()));
    assert!(records.iter().any(|r| r.success));
    ok(&evgraph(&["replay", "--config", s(&cfg), "--results", s(&res)]));

    // A prediction op the mock does not serve is reported per record.
    let cfg = copy_config("synth_external.json", dir.path(), |v| {
        v["model"]["command"][0] = Value::from(env!("CARGO_BIN_EXE_evgraph-mock-model"));
        v["predict_function_name"] = Value::from("predict_proba");
    });
    ok(&evgraph(&["generate", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&res)]));
    let records = read_records(&res).unwrap();
    assert!(records.iter().all(|r| r.error.as_deref().is_some_and(|e| e.contains("predict_proba"))));
}

#[test]
fn domain_edits_stay_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = copy_config("dga_string.json", dir.path(), |v| {
        v["input_schema"]["labels_path"] = Value::from(s(&configs_dir().join("data/domain_labels.txt")));
    });
    let domains = configs_dir().join("data/domains.txt");
    let model = dir.path().join("models/dga_lr.json");
    std::fs::create_dir_all(model.parent().unwrap()).unwrap();
    ok(&evgraph(&["train-model", "--config", s(&cfg), "--dataset", s(&domains), "--out", s(&model)]));
    let res = dir.path().join("r.jsonl");
    ok(&evgraph(&["generate", "--config", s(&cfg), "--dataset", s(&domains), "--out", s(&res)]));
    let records = read_records(&res).unwrap();
    assert!(records.iter().filter(|r| r.success).count() > 10);
    for r in &records {
        let (InputState::Text(a), InputState::Text(b)) = (&r.original, &r.final_state) else {
            panic!("text states expected")
        };
        assert!(r.transforms_used <= 3);
        assert!(edit_distance(&r.original, &r.final_state) <= 3);
        let tld = |d: &str| d.rsplit_once('.').map(|(_, t)| t.to_string());
        assert_eq!(tld(a), tld(b), "{a} -> {b}");
    }
}

#[test]
fn rankers_train_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let lookup = copy_config("synth_lookup.json", dir.path(), |_| {});
    let train = dir.path().join("train.csv");
    ok(&evgraph(&["synth", "--out", s(&train), "--rows", "300", "--seed", "1"]));
    let model = dir.path().join("models/synth_mlp.json");
    std::fs::create_dir_all(model.parent().unwrap()).unwrap();
    ok(&evgraph(&["train-model", "--config", s(&lookup), "--dataset", s(&train), "--out", s(&model)]));
    let out = ok(&evgraph(&["train-ranker", "--config", s(&lookup), "--dataset", s(&train)]));
    assert!(out.contains("trained lookup ranker on "), "{out}");
    assert!(dir.path().join("models/synth_lookup_table.json").exists());

    let guided = copy_config("synth_lookup.json", dir.path(), |v| {
        v["ranking_alg"] = serde_json::json!({
            "type": "guided",
            "args": {"policy": "models/policy.json", "selection": {"samples": 20}, "training": {"episodes": 10}}
        });
    });
    let out = ok(&evgraph(&["train-ranker", "--config", s(&guided), "--dataset", s(&train)]));
    assert!(out.contains("trained guided ranker on 20 samples"), "{out}");
    let res = dir.path().join("r.jsonl");
    ok(&evgraph(&["generate", "--config", s(&guided), "--dataset", s(&train), "--out", s(&res)]));
    assert_eq!(read_records(&res).unwrap().len(), 300);

    let brute = copy_config("synth_beam.json", dir.path(), |_| {});
    let out = evgraph(&["train-ranker", "--config", s(&brute), "--dataset", s(&train)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn adv_train_writes_both_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = copy_config("synth_beam.json", dir.path(), |v| {
        v["training"]["train"]["epochs"] = Value::from(5);
    });
    let data = dir.path().join("d.csv");
    ok(&evgraph(&["synth", "--out", s(&data), "--rows", "200", "--seed", "2", "--preset", "robustness"]));
    let out_model = dir.path().join("hard.json");
    let report = dir.path().join("adv.json");
    let table = ok(&evgraph(&[
        "adv-train", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&out_model), "--report", s(&report),
    ]));
    assert_eq!(table.matches('%').count(), 4);
    assert!(out_model.exists());
    assert!(dir.path().join("hard.standard.json").exists());
    let summary: AdvTrainSummary = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(summary.test_samples, 50);
    for c in [summary.standard, summary.adversarial] {
        assert!((0.0..=1.0).contains(&c.natural) && (0.0..=1.0).contains(&c.adversarial));
    }
    assert!(summary.explorations > 0);
}
