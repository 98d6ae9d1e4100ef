use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hypwalk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypwalk"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn walk_on_integers_reports_the_drift() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["walk", "--group", "integer", "--measure", "1:0.7,-1:0.3", "--n", "300", "--csv", "w.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "L_n - L_n-1").unwrap();
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    let dl: f64 = last[col].parse().unwrap();
    assert!((dl - 0.4).abs() <= 1e-10, "{dl}");
    let v = json(&out);
    assert_eq!(v["command"], "walk");
    assert_eq!(v["schema_version"], "1");
    assert_eq!(v["results"]["n"], 300);
}

#[test]
fn entropy_estimators_agree_on_the_free_group() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["entropy"], dir.path());
    assert!(out.status.success());
    let v = json(&out);
    let boundary = v["results"]["boundary"]["entropy"].as_f64().unwrap();
    let direct = v["results"]["direct"]["value"].as_f64().unwrap();
    assert!((boundary - direct).abs() <= 0.03, "{boundary} vs {direct}");
    assert!(v["results"]["direct"]["error_bar"].as_f64().unwrap() >= 0.0);
}

#[test]
fn measure_off_by_a_tenth_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["walk", "--measure", "a:0.3,A:0.3,b:0.2,B:0.1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["error"]["kind"], "validation");
    assert_eq!(v["error"]["field"], "measure.entries");
}

#[test]
fn bad_entries_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["walk", "--measure", "a:0.5,q:0.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["field"], "measure.entries[1].word");
    let out = hypwalk(&["walk", "--measure", "a:0.5,A:-0.5"], dir.path());
    assert_eq!(json(&out)["error"]["field"], "measure.entries[1].p");
}

#[test]
fn small_drift_is_renormalized() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["walk", "--measure", "a:0.2500001,A:0.25,b:0.25,B:0.25", "--n", "5"], dir.path());
    assert!(out.status.success());
}

const CONFIG: &str = r#"
[group]
kind = "free"
rank = 2

[measure]
entries = [["a", 0.4], ["A", 0.1], ["b", 0.3], ["B", 0.2]]

[params]
n = 30
depth = 3
"#;

#[test]
fn same_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let one = hypwalk(&["walk", "--config", "run.toml", "--json", "one.json", "--threads", "1"], dir.path());
    let two = hypwalk(&["walk", "--config", "run.toml", "--json", "two.json", "--threads", "2"], dir.path());
    assert!(one.status.success() && two.status.success());
    let a = std::fs::read(dir.path().join("one.json")).unwrap();
    let b = std::fs::read(dir.path().join("two.json")).unwrap();
    assert_eq!(a, b);
    // Timestamps go to a separate file.
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("one.json.meta.json")).unwrap()).unwrap();
    assert!(meta["unix_time"].as_u64().unwrap() > 0);
    assert_eq!(meta["threads"], 1);
}

#[test]
fn flags_override_file_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let from_file = json(&hypwalk(&["walk", "--config", "run.toml"], dir.path()));
    assert_eq!(from_file["results"]["n"], 30);
    let out = hypwalk(&["walk", "--config", "run.toml", "--n", "12", "-v"], dir.path());
    let from_flag = json(&out);
    assert_eq!(from_flag["results"]["n"], 12);
    assert_ne!(from_file["config_digest"], from_flag["config_digest"]);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("params.n = 12 (flag)"), "{log}");
    assert!(log.contains("params.depth = 3 (file)"), "{log}");
    assert!(log.contains("params.k = 6 (default)"), "{log}");
    let default = json(&hypwalk(&["walk"], dir.path()));
    assert_eq!(default["results"]["n"], 40);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[params]\nsteps_total = 3\n").unwrap();
    let out = hypwalk(&["walk", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["field"], "config");
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["walk", "--paths", "100", "--n", "5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["field"], "params.seed");
    let a = hypwalk(&["walk", "--paths", "500", "--n", "5", "--seed", "9"], dir.path());
    let b = hypwalk(&["walk", "--paths", "500", "--n", "5", "--seed", "9"], dir.path());
    assert_eq!(a.stdout, b.stdout);
    assert!(json(&a)["results"]["monte_carlo"]["std_err"].as_f64().unwrap() > 0.0);
}

#[test]
fn computation_errors_name_the_module() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["green", "--group", "integer"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["error"]["kind"], "computation");
    assert_eq!(v["error"]["module"], "green-martin");
}

#[test]
fn kink_scan_flags_the_drift_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(
        &[
            "kink-scan",
            "--group",
            "integer",
            "--measure",
            "2:0.25,1:0.25,-1:0.25,-2:0.25",
            "--quantity",
            "escape",
            "--a",
            "0.1,0.5,0.3,0.1",
            "--b",
            "0.1,0.25,0.4,0.25",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let flags = json(&out)["results"]["profile"]["flags"].as_array().unwrap().clone();
    assert_eq!(flags.len(), 1);
    // Drift 0.2 at a and −0.45 at b.
    let t = flags[0]["t"].as_f64().unwrap();
    assert!((t - 0.2 / 0.65).abs() < 1e-9, "{t}");
}

#[test]
fn harmonic_tables_carry_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["harmonic", "--depth", "2", "--csv", "h.csv"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "word,mass,std_err,eigenmeasure");
    assert_eq!(csv.lines().count(), 1 + 12);
    let v = json(&out);
    assert!(v["results"]["pressure"].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn green_truncated_hitting_brackets_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwalk(&["green", "--x", "a,ab", "--csv", "g.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    // Uniform F2: u(e, x) = 3^-|x|.
    for (line, want) in csv.lines().skip(1).zip([1.0 / 3.0, 1.0 / 9.0]) {
        let c: Vec<f64> = line.split(',').skip(1).map(|s| s.parse().unwrap()).collect();
        assert!(c[3] <= want + 1e-9 && want <= c[4] + 1e-9, "{line}");
        assert!(c[5] <= want + 1e-12 && want <= c[6] + 1e-12, "{line}");
        assert!(c[6] - c[5] < 1e-4, "{line}");
    }
}
