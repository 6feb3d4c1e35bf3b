use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedmd_core::scenario::{RunReport, SweepReport};
use serde_json::json;

fn fedmd(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedmd"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fedmd(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// A small synthetic scenario that runs in well under a second.
fn write_config(dir: &Path, extra: serde_json::Value) -> String {
    let mut cfg = json!({
        "data": { "synthetic": {
            "n_clients": 3, "benign_per_client": 60, "attack_fraction": 0.2, "dim": 4,
            "attack_kinds": ["ConstantOffset", "RandomOffset"]
        }},
        "gmm_grid": [2, 3, 4],
        "federation": { "rounds": 3 },
        "lr_grid": [0.01, 0.05]
    });
    if let (Some(base), Some(more)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in more {
            base.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("scenario.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn generate_writes_one_csv_per_client() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let out = dir.path().join("data");
    let stdout = ok(&["generate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(stdout.lines().count(), 3);
    for i in 0..3 {
        let text = fs::read_to_string(out.join(format!("client_{i:03}.csv"))).unwrap();
        assert!(text.lines().next().unwrap().ends_with("label"));
        assert_eq!(text.lines().count(), 1 + 60 + 15);
    }
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let out = dir.path().join("run");
    let stdout = ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--deterministic"]);
    assert!(stdout.contains("overall mean"));
    for f in ["report.json", "metrics.txt", "rounds.jsonl"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let report: RunReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.config.deterministic);
    for c in &report.clients {
        assert!(out.join("gmm").join(format!("{}.json", c.client_id)).is_file());
        assert!(out.join("weights").join(format!("{}.bin", c.client_id)).is_file());
    }
    for a in &report.artifacts {
        assert!(out.join(a).is_file(), "{a}");
    }
    let rounds = fs::read_to_string(out.join("rounds.jsonl")).unwrap();
    let expected: usize = report.groups.iter().map(|g| g.rounds.len()).sum();
    assert_eq!(rounds.lines().count(), expected);
    assert_eq!(expected, 3 * report.groups.len());
}

#[test]
fn deterministic_runs_match_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let out = dir.path().join("det");
    let once = || {
        ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--deterministic", "--seed", "9"]);
        let r: RunReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        serde_json::to_string(&r.without_timings()).unwrap()
    };
    assert_eq!(once(), once());
}

#[test]
fn rbm_toggle_leaves_mixtures_alone() {
    let dir = tempfile::tempdir().unwrap();
    let with = dir.path().join("with");
    let without = dir.path().join("without");
    let cfg = write_config(dir.path(), json!({}));
    ok(&["run", "--config", &cfg, "--out", with.to_str().unwrap(), "--deterministic"]);
    let cfg = write_config(dir.path(), json!({ "use_rbm_init": false }));
    ok(&["run", "--config", &cfg, "--out", without.to_str().unwrap(), "--deterministic"]);
    let mut names: Vec<_> = fs::read_dir(with.join("gmm")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3);
    for n in names {
        assert_eq!(fs::read(with.join("gmm").join(&n)).unwrap(), fs::read(without.join("gmm").join(&n)).unwrap());
    }
    assert_ne!(
        fs::read(with.join("weights/client_000.bin")).unwrap(),
        fs::read(without.join("weights/client_000.bin")).unwrap()
    );
}

#[test]
fn sweep_and_compare_cover_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let out = dir.path().join("grid");
    let sweep = ok(&["sweep-lr", "--config", &cfg, "--out", out.to_str().unwrap(), "--deterministic"]);
    assert!(sweep.contains("0.05"));
    let s: SweepReport = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(s.rows.len(), 2 * 2);

    let table = ok(&["compare", "--config", &cfg, "--out", out.to_str().unwrap(), "--deterministic"]);
    for col in ["Federated VAE", "Distributed VAE", "Federated AE", "Distributed AE"] {
        assert!(table.contains(col), "{col} missing from\n{table}");
    }
    let c: SweepReport = serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(c.rows.len(), 4 * 2);

    let rendered = ok(&["report", out.to_str().unwrap()]);
    assert!(rendered.contains("sweep.json") && rendered.contains("compare.json"));
}

#[test]
fn report_renders_a_saved_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let out = dir.path().join("r");
    ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let text = ok(&["report", out.join("report.json").to_str().unwrap()]);
    assert!(text.contains("overall mean"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ \"seed\": \"x\" }").unwrap();
    let out = fedmd(&["run", "--config", broken.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let cfg = write_config(dir.path(), json!({ "lr_grid": [] }));
    assert!(!fedmd(&["sweep-lr", "--config", &cfg], &[]).status.success());

    let out = fedmd(&["report", dir.path().join("nothing").to_str().unwrap()], &[]);
    assert!(!out.status.success());

    let out = fedmd(&["run", "--config", &cfg], &[("FEDMD_THREADS", "0")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("FEDMD_THREADS"));
}

#[test]
fn thread_cap_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let out = fedmd(&["run", "--config", &cfg], &[("FEDMD_THREADS", "2")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
