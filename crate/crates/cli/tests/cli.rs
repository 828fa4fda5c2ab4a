use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "count": 4,
  "sim": { "duration_T": 3.0 },
  "training": { "count": 3, "config": { "epochs": 2 } },
  "matching": { "count": 5, "recording": { "frames": 400 } }
}"#;

fn lanebench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanebench")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lanebench(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn campaign_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["campaign", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["campaign", "--config", s(&cfg), "--out", s(&b), "--jobs", "2"]);
    for f in ["report/report.json", "report/scatter.svg", "offline.csv", "online.csv", "matches.csv", "model.bin"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs");
    }
    let report: serde_json::Value = serde_json::from_slice(&read(a.join("report/report.json"))).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 4);
    let t = &report["table"];
    let sum: u64 = ["n11", "n12", "n21", "n22"].iter().map(|k| t[k].as_u64().unwrap()).sum();
    assert_eq!(sum, 4);
    assert_eq!(report["rq0"]["scenarios"], 5);
    let matches = String::from_utf8(read(a.join("matches.csv"))).unwrap();
    assert!(matches.starts_with("sim_id,real_id,x,l,mean_diff,comparable\n"));
    assert_eq!(matches.lines().count(), 6);
    assert_eq!(std::fs::read_dir(a.join("traces")).unwrap().count(), 4);

    // Rerunning into the same directory replaces rather than appends.
    ok(&["campaign", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(read(a.join("matches.csv")), read(b.join("matches.csv")));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "count": 3, "seed": 5 }"#);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["sample", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["sample", "--config", s(&cfg), "--out", s(&b), "--seed", "5"]);
    ok(&["sample", "--config", s(&cfg), "--out", s(&c), "--seed", "6"]);
    let names = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d.join("scenarios"))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        v.sort();
        v
    };
    assert_eq!(names(&a), names(&b));
    assert_ne!(names(&a), names(&c));
    assert_eq!(names(&a).len(), 3);
}

#[test]
fn step_by_step_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let common = ["--config", s(&cfg), "--out", s(&out)];
    let with = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = extra.iter().map(|x| x.to_string()).collect();
        v.extend(common.iter().map(|x| x.to_string()));
        v
    };
    let run = |extra: &[&str]| {
        let args = with(extra);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    run(&["sample"]);
    run(&["dataset"]);
    assert!(out.join("datasets/sim").read_dir().unwrap().count() == 4);
    run(&["train", "--datasets", s(&out.join("datasets/sim"))]);
    let model = out.join("model.bin");
    run(&["offline", "--model", s(&model)]);
    run(&["online", "--model", s(&model)]);
    run(&["dataset", "--kind", "recording"]);
    run(&["match", "--model", s(&model)]);
    let summary = run(&["analyze"]);
    assert!(summary.contains("n11="), "{summary}");
    let report: serde_json::Value = serde_json::from_slice(&read(out.join("report/report.json"))).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 4);
    assert!(report.get("rq0").is_some());

    // Traces are re-derivable from the stored scenarios.
    let before = read(out.join("online.csv"));
    let first = std::fs::read_dir(out.join("traces")).unwrap().next().unwrap().unwrap().path();
    let trace = read(first.join("trace.csv"));
    std::fs::remove_dir_all(out.join("traces")).unwrap();
    run(&["online", "--model", s(&model)]);
    assert_eq!(read(out.join("online.csv")), before);
    assert_eq!(read(first.join("trace.csv")), trace);

    // The oracle reproduces its own labels exactly.
    run(&["offline", "--controller", "oracle"]);
    let offline = String::from_utf8(read(out.join("offline.csv"))).unwrap();
    for row in offline.lines().skip(1) {
        let mae: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(mae, 0.0, "{row}");
    }
}

#[test]
fn errors_are_json_with_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");

    let missing = lanebench(&["sample", "--config", s(&dir.path().join("absent.json"))]);
    assert_eq!(missing.status.code(), Some(4));
    assert_eq!(error_json(&missing)["error"]["kind"], "missing_input");

    let bad = write_config(dir.path(), "{ not json");
    let parse = lanebench(&["sample", "--config", s(&bad)]);
    assert_eq!(parse.status.code(), Some(3));
    assert_eq!(error_json(&parse)["error"]["exit_code"], 3);

    let unknown = write_config(dir.path(), r#"{ "cuont": 3 }"#);
    assert_eq!(lanebench(&["sample", "--config", s(&unknown)]).status.code(), Some(3));

    // Every draw breaks the speed-on-curve constraint.
    let mut domain: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(env!("CARGO_MANIFEST_DIR").to_string() + "/tests/data/full_domain.json").unwrap(),
    )
    .unwrap();
    domain["road_topology_choices"] = serde_json::json!(["left-curved"]);
    domain["curvature_range"] = serde_json::json!({ "min": 0.04, "max": 0.04 });
    domain["ego_speed_range"] = serde_json::json!({ "min": 15.0, "max": 15.0 });
    std::fs::write(dir.path().join("impossible.json"), domain.to_string()).unwrap();
    let cfg = write_config(dir.path(), r#"{ "domain_model": "impossible.json" }"#);
    let exhausted = lanebench(&["sample", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(exhausted.status.code(), Some(5));
    assert_eq!(error_json(&exhausted)["error"]["kind"], "budget_exhausted");

    ok(&["sample", "--count", "2", "--out", s(&out)]);
    let no_model = lanebench(&["online", "--out", s(&out), "--controller", "learned"]);
    assert_eq!(no_model.status.code(), Some(3));

    let no_scenarios = lanebench(&["online", "--out", s(&dir.path().join("empty")), "--controller", "oracle"]);
    assert_eq!(no_scenarios.status.code(), Some(4));

    let usage = lanebench(&["frobnicate"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn shipped_domain_file_matches_the_built_in_default() {
    let dir = tempfile::tempdir().unwrap();
    let path = env!("CARGO_MANIFEST_DIR").to_string() + "/tests/data/full_domain.json";
    let cfg = write_config(dir.path(), &format!(r#"{{ "domain_model": {path:?}, "count": 3 }}"#));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["sample", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["sample", "--count", "3", "--out", s(&b)]);
    let list = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d.join("scenarios"))
            .unwrap()
            .map(|e| std::fs::read(e.unwrap().path()).unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(list(&a), list(&b));
}
