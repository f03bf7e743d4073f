use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn valuesim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_valuesim")).args(args).current_dir(dir).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn mock(n: usize, complexity: &str, composition: &str) -> String {
    format!(
        "[population]\ngroup_size = {n}\ncomplexity = \"{complexity}\"\ncomposition = \"{composition}\"\n\
         [backend]\nkind = \"Mock\"\n"
    )
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn personas_are_written_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &mock(4, "Single", "DiverseBalanced"));
    for out in ["a", "b"] {
        let o = valuesim(&["personas", "--config", &cfg, "--out", out, "--seed", "11"], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read_to_string(tmp.path().join("a/personas.json")).unwrap();
    let profiles: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(profiles.as_array().unwrap().len(), 4);
    assert_eq!(a, fs::read_to_string(tmp.path().join("b/personas.json")).unwrap());
    assert!(tmp.path().join("a/narratives.json").is_file());
}

#[test]
fn configuration_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let infeasible = write_config(tmp.path(), "bad.toml", &mock(4, "Single", "NoValue"));
    let o = valuesim(&["run", "--config", &infeasible, "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!tmp.path().join("r").exists());

    let remote = write_config(
        tmp.path(),
        "remote.toml",
        "[backend]\nkind = \"Remote\"\nendpoint_url = \"http://127.0.0.1:9\"\napi_key_env = \"VALUESIM_CLI_TEST_UNSET_KEY\"\n",
    );
    let o = Command::new(env!("CARGO_BIN_EXE_valuesim"))
        .args(["run", "--config", &remote, "--out", "r"])
        .current_dir(tmp.path())
        .env_remove("VALUESIM_CLI_TEST_UNSET_KEY")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!tmp.path().join("r").exists());

    let o = valuesim(&["run", "--bogus"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn existing_output_needs_force_and_force_is_careful() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &mock(4, "Single", "DiverseBalanced"));
    assert!(valuesim(&["run", "--config", &cfg, "--out", "r"], tmp.path()).status.success());
    let o = valuesim(&["run", "--config", &cfg, "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(valuesim(&["run", "--config", &cfg, "--out", "r", "--force"], tmp.path()).status.success());

    fs::create_dir(tmp.path().join("precious")).unwrap();
    fs::write(tmp.path().join("precious/thesis.txt"), "do not delete").unwrap();
    let o = valuesim(&["run", "--config", &cfg, "--out", "precious", "--force"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(tmp.path().join("precious/thesis.txt").is_file());
}

#[test]
fn analyze_rewrites_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &mock(4, "Multi", "DiverseBalanced"));
    assert!(valuesim(&["run", "--config", &cfg, "--out", "r"], tmp.path()).status.success());
    let before = fs::read_to_string(tmp.path().join("r/metrics/report.json")).unwrap();
    assert_eq!(valuesim(&["analyze", "--run", "r"], tmp.path()).status.code(), Some(2));
    fs::remove_dir_all(tmp.path().join("r/metrics")).unwrap();
    let o = valuesim(&["analyze", "--run", "r"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let after = fs::read_to_string(tmp.path().join("r/metrics/report.json")).unwrap();
    assert_eq!(before, after);
    let report: serde_json::Value = serde_json::from_str(&after).unwrap();
    assert!(report["modularity"].is_number());
    assert!(report["ideology"]["percentages"].is_object());
}

#[test]
fn report_groups_runs_by_condition() {
    let tmp = tempfile::tempdir().unwrap();
    let small = write_config(tmp.path(), "s.toml", &mock(4, "Single", "DiverseBalanced"));
    let large = write_config(tmp.path(), "l.toml", &mock(6, "Single", "DiverseBalanced"));
    for seed in ["1", "2", "3"] {
        let out = format!("s{seed}");
        assert!(valuesim(&["run", "--config", &small, "--out", &out, "--seed", seed], tmp.path()).status.success());
    }
    assert!(valuesim(&["run", "--config", &large, "--out", "l1"], tmp.path()).status.success());

    let o = valuesim(&["report", "--runs", "s1", "s2", "s3"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let col = header.iter().position(|h| *h == "modularity_stddev").expect("stddev column");
    assert!(row[col].parse::<f64>().is_ok(), "{csv}");
    assert!(header.contains(&"gini_mean"));

    let o = valuesim(&["report", "--runs", "s1", "s2", "l1", "--out", "table.csv"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
}

#[test]
fn print_defaults_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = valuesim(&["--print-defaults"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("group_size"));
    let cfg = write_config(tmp.path(), "d.toml", &text);
    assert!(valuesim(&["personas", "--config", &cfg, "--out", "p"], tmp.path()).status.success());
}
