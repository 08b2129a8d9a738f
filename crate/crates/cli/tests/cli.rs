use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use molbbo::runlog::{CallRecord, Clock, LogHeader, RunLog, SCHEMA_VERSION};
use serde_json::{json, Value};
use tempfile::TempDir;

fn molbbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molbbo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, doc: Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, doc.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn atom_count_config(dir: &Path) -> String {
    write_config(dir, json!({"objective": {"kind": "syntheticAtomCount"}, "clock": "logical"}))
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bbo_reaches_atom_cap_within_fifty_calls() {
    let dir = TempDir::new().unwrap();
    let cfg = atom_count_config(dir.path());
    let out = dir.path().join("run");
    let o = molbbo(&["run-bbo", "--config", &cfg, "--out", out.to_str().unwrap(), "--budget", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(s["bestValue"], json!(9.0));
    assert_eq!(s["callsUsed"], json!(50));
    assert!(out.join("state.json").exists());
    let log = RunLog::read(&out.join("runlog.jsonl")).unwrap();
    assert!(log.is_complete());
    assert_eq!(log.records.len(), 50);
}

#[test]
fn budget_one_logs_only_methane() {
    let dir = TempDir::new().unwrap();
    let cfg = atom_count_config(dir.path());
    let out = dir.path().join("run");
    let o = molbbo(&["run-bbo", "--config", &cfg, "--out", out.to_str().unwrap(), "--budget", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = RunLog::read(&out.join("runlog.jsonl")).unwrap();
    assert_eq!(log.records.len(), 1);
    assert_eq!(log.records[0].smiles, "C");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({"objective": {"kind": "syntheticLinearShingles", "seed": 3}, "clock": "logical"}),
    );
    let mut logs = Vec::new();
    for (name, mode) in [("a", "--sequential"), ("b", "--sequential"), ("c", "--parallel=3")] {
        let out = dir.path().join(name);
        let o = molbbo(&["run-bbo", "--config", &cfg, "--out", out.to_str().unwrap(), "--budget", "60", "--seed", "5", mode]);
        assert!(o.status.success(), "{}", stderr(&o));
        logs.push(fs::read(out.join("runlog.jsonl")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[0], logs[2]);
}

#[test]
fn resume_continues_the_same_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({"objective": {"kind": "syntheticLinearShingles", "seed": 8}, "clock": "logical", "bbo": {"budget": 45}}),
    );
    let full = dir.path().join("full");
    assert!(molbbo(&["run-bbo", "--config", &cfg, "--out", full.to_str().unwrap()]).status.success());

    // Simulate a crash: keep an earlier checkpoint and a log that ran past it.
    // 21 calls is methane plus two full steps of 10, a step boundary.
    let part = dir.path().join("part");
    let short = write_config(
        dir.path(),
        json!({"objective": {"kind": "syntheticLinearShingles", "seed": 8}, "clock": "logical", "bbo": {"budget": 21}}),
    );
    assert!(molbbo(&["run-bbo", "--config", &short, "--out", part.to_str().unwrap()]).status.success());
    let mut state: Value = serde_json::from_str(&fs::read_to_string(part.join("state.json")).unwrap()).unwrap();
    state["config"]["budget"] = json!(45);
    state["stopped"] = Value::Null;
    fs::write(part.join("state.json"), state.to_string()).unwrap();
    let mut text = fs::read_to_string(part.join("runlog.jsonl")).unwrap();
    text = text.replace("\"budget\":21", "\"budget\":45");
    text.push_str("{\"callIndex\":22,\"step\":9,\"restart\":0,\"smiles\":\"CC\",\"value\":-3.0,\"bestSoFar\":0.0,\"cpuTimeS\":22.0,\"wallTimeS\":22.0}\n");
    // Drop the footer so the trailing record is a plausible partial write.
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with("{\"footer\"")).collect();
    fs::write(part.join("runlog.jsonl"), lines.join("\n") + "\n").unwrap();

    let o = molbbo(&["run-bbo", "--resume", "--out", part.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(full.join("runlog.jsonl")).unwrap(),
        fs::read_to_string(part.join("runlog.jsonl")).unwrap()
    );
}

#[test]
fn ea_reaches_atom_cap_within_two_hundred_calls() {
    let dir = TempDir::new().unwrap();
    let cfg = atom_count_config(dir.path());
    let out = dir.path().join("ea");
    let o = molbbo(&["run-ea", "--config", &cfg, "--out", out.to_str().unwrap(), "--budget", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary(&out)["bestValue"], json!(9.0));
    let log = RunLog::read(&out.join("runlog.jsonl")).unwrap();
    assert_eq!(log.header.method, "ea");
    assert_eq!(log.records.len(), 200);
}

#[test]
fn invalid_config_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    for doc in [
        json!({"objective": {"kind": "syntheticAtomCount"}, "bogus": true}),
        json!({"objective": {"kind": "syntheticAtomCount"}, "bbo": {"restarts": 0}}),
    ] {
        let cfg = write_config(dir.path(), doc);
        let o = molbbo(&["run-bbo", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    }
}

#[test]
fn missing_objective_program_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({"objective": {"kind": "externalProcess", "command": ["/nonexistent/objective"]}, "clock": "logical"}),
    );
    let out = dir.path().join("run");
    let o = molbbo(&["run-bbo", "--config", &cfg, "--out", out.to_str().unwrap(), "--budget", "5"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let log = RunLog::read(&out.join("runlog.jsonl")).unwrap();
    assert!(!log.is_complete());
    assert_eq!(summary(&out)["complete"], json!(false));
}

#[test]
fn external_process_objective() {
    let dir = TempDir::new().unwrap();
    let script = dir.path().join("objective.py");
    fs::write(
        &script,
        "import sys\n\
         for line in sys.stdin:\n\
         \x20   smiles = line.split(' ', 1)[1].strip()\n\
         \x20   if 'N' in smiles:\n\
         \x20       print('ERR no nitrogen', flush=True)\n\
         \x20   else:\n\
         \x20       print('OK', float(sum(c in 'CNOF' for c in smiles)), flush=True)\n",
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        json!({
            "objective": {"kind": "externalProcess", "command": ["python3", script.to_str().unwrap()], "poolSize": 2, "timeoutS": 30},
            "clock": "logical"
        }),
    );
    let out = dir.path().join("run");
    let o = molbbo(&["run-bbo", "--config", &cfg, "--out", out.to_str().unwrap(), "--budget", "40", "--parallel", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = RunLog::read(&out.join("runlog.jsonl")).unwrap();
    assert_eq!(log.records.len(), 40);
    for r in &log.records {
        if r.smiles.contains('N') {
            assert!(r.value.is_none() && r.error.is_some(), "{r:?}");
        } else {
            assert!(r.value.is_some(), "{r:?}");
        }
    }
}

fn fixture_log(hit_at: Option<u64>, len: u64) -> String {
    let mut log = RunLog::new(LogHeader {
        schema_version: SCHEMA_VERSION,
        method: "bbo".into(),
        seed: 0,
        clock: Clock::Logical,
        objective: json!({"kind": "syntheticAtomCount", "seed": 0, "noiseStd": 0.0}),
        config: Value::Null,
    });
    for i in 1..=len {
        let v = if Some(i) >= hit_at && hit_at.is_some() { -1.5 } else { -8.0 };
        log.records.push(CallRecord {
            call_index: i,
            step: i,
            restart: 0,
            smiles: "C".into(),
            value: Some(v),
            best_so_far: Some(v),
            cpu_time_s: i as f64,
            wall_time_s: i as f64,
            error: None,
        });
    }
    log.to_jsonl()
}

#[test]
fn report_reproduces_ert_fixture() {
    let dir = TempDir::new().unwrap();
    let logs = dir.path().join("logs");
    fs::create_dir(&logs).unwrap();
    fs::write(logs.join("a.jsonl"), fixture_log(Some(100), 1000)).unwrap();
    fs::write(logs.join("b.jsonl"), fixture_log(Some(300), 1000)).unwrap();
    let out = dir.path().join("report");
    let pattern = format!("{}/*.jsonl", logs.display());
    let o = molbbo(&["report", "--logs", &pattern, "--targets", "-2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ert = fs::read_to_string(out.join("ert.csv")).unwrap();
    assert_eq!(ert, "method,target,ert,successes,runs,min,median,max\nbbo,-2,200,2,2,100,200,300\n");
    for name in ["ecdf_calls.csv", "ecdf_cpu.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,proportion"));
        let props: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(props.windows(2).all(|w| w[0] <= w[1]));
        assert!(props.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    fs::write(logs.join("c.jsonl"), fixture_log(None, 1000)).unwrap();
    fs::remove_file(logs.join("b.jsonl")).unwrap();
    let o = molbbo(&["report", "--logs", &pattern, "--targets=-2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ert = fs::read_to_string(out.join("ert.csv")).unwrap();
    assert!(ert.contains("bbo,-2,1100,1,2,100,100,100"), "{ert}");
}

#[test]
fn report_rejects_bad_inputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report");
    let pattern = format!("{}/*.jsonl", dir.path().display());
    let o = molbbo(&["report", "--logs", &pattern, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no run logs"), "{}", stderr(&o));

    fs::write(dir.path().join("a.jsonl"), fixture_log(Some(3), 5)).unwrap();
    let other = fixture_log(Some(3), 5).replace("syntheticAtomCount", "syntheticLinearShingles");
    fs::write(dir.path().join("b.jsonl"), other).unwrap();
    let o = molbbo(&["report", "--logs", &pattern, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = molbbo(&["report", "--logs", &pattern, "--out", out.to_str().unwrap(), "--allow-mixed"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let future = fixture_log(Some(3), 5).replace("\"schemaVersion\":1", "\"schemaVersion\":99");
    fs::write(dir.path().join("b.jsonl"), future).unwrap();
    let o = molbbo(&["report", "--logs", &pattern, "--out", out.to_str().unwrap(), "--allow-mixed"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_splits_methods() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.jsonl"), fixture_log(Some(3), 5)).unwrap();
    fs::write(dir.path().join("b.jsonl"), fixture_log(Some(4), 5).replace("\"method\":\"bbo\"", "\"method\":\"ea\"")).unwrap();
    let out = dir.path().join("report");
    let pattern = format!("{}/*.jsonl", dir.path().display());
    let o = molbbo(&["report", "--logs", &pattern, "--targets=-2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["ecdf_calls_bbo.csv", "ecdf_cpu_bbo.csv", "ecdf_calls_ea.csv", "ecdf_cpu_ea.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let ert = fs::read_to_string(out.join("ert.csv")).unwrap();
    assert!(ert.contains("\nbbo,-2,3,") && ert.contains("\nea,-2,4,"), "{ert}");
}

#[test]
fn generate_then_evaluate_surrogate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({"objective": {"kind": "syntheticLinearShingles", "seed": 2}}));
    let data = dir.path().join("data.csv");
    let o = molbbo(&["generate-molecules", "--config", &cfg, "--count", "220", "--seed", "1", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 220);

    let out = dir.path().join("eval");
    let o = molbbo(&[
        "surrogate-eval", "--dataset", data.to_str().unwrap(), "--sizes", "20,150", "--folds", "10", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("learning_curve.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# protocol: 10-fold cross validation");
    assert_eq!(lines[1], "size,mae_mean,mae_std");
    assert_eq!(lines.len(), 4);

    let o = molbbo(&[
        "surrogate-eval", "--dataset", data.to_str().unwrap(), "--sizes", "210", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unreadable_dataset_lines_are_reported() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    fs::write(&data, "C,-1\nCC,-2\nnot a molecule,3\nCCC,-3\n").unwrap();
    let out = dir.path().join("eval");
    let o = molbbo(&["surrogate-eval", "--dataset", data.to_str().unwrap(), "--sizes", "1", "--folds", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}
