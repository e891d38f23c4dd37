use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wipeplan::config::parse_config;

fn wipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wipe"))
        .args(args)
        .output()
        .expect("wipe runs")
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn provenance(text: &str) -> (String, u64) {
    let line = text.lines().next().unwrap();
    let rest = line.strip_prefix("# config_hash=").expect("provenance line");
    let (hash, seed) = rest.split_once(" seed=").unwrap();
    (hash.to_string(), seed.parse().unwrap())
}

#[test]
fn bundled_configs_have_no_unknown_keys() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let p = entry.unwrap().path();
        let parsed = parse_config(&p).unwrap();
        assert!(parsed.unknown_keys.is_empty(), "{}: {:?}", p.display(), parsed.unknown_keys);
        parsed.config.validate().unwrap();
    }
}

#[test]
fn push_only_simulation_wipes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config_path("push_only.json");
    let o = wipe(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(dir.path().join("particles.csv")).unwrap();
    let (hash, seed) = provenance(&csv);
    assert_eq!(hash, parse_config(&cfg).unwrap().config.hash());
    let exported = parse_config(&dir.path().join("config.json")).unwrap();
    assert!(exported.unknown_keys.is_empty());
    assert_eq!(exported.config.hash(), hash);
    assert_eq!(seed, 42);

    let mut lines = csv.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "step,time,particle,x,y,wiped");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    let last_step = rows.iter().map(|r| r[0].parse::<usize>().unwrap()).max().unwrap();
    assert_eq!(last_step, 40);
    let final_rows: Vec<_> = rows.iter().filter(|r| r[0] == last_step.to_string()).collect();
    assert_eq!(final_rows.len(), 500);
    assert!(final_rows.iter().all(|r| r[5] == "0"));
    assert!(dir.path().join("obs_000.pgm").exists());
    assert!(dir.path().join("obs_040.pgm").exists());
    assert!(dir.path().join("density_final.pgm").exists());
}

#[test]
fn same_seed_same_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = wipe(&["rollout", "--seed", "9", "--policy", "covariance_axis", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    let ra = std::fs::read(a.path().join("rollout.json")).unwrap();
    let rb = std::fs::read(b.path().join("rollout.json")).unwrap();
    assert_eq!(ra, rb);
    let v: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn evaluate_writes_report_and_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let o = wipe(&["evaluate", "--episodes", "20", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    let (_, seed) = provenance(&report);
    assert_eq!(seed, 3);
    let lines: Vec<_> = report.lines().collect();
    assert_eq!(lines[1], "episodes,mean_wipes,std_wipes,success_rate,mean_off_table_events");
    assert!(lines[2].starts_with("20,"));
    let episodes = std::fs::read_to_string(dir.path().join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 2 + 20);
}

#[test]
fn planar_plan_respects_the_box() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("planar_2r_box.json");
    let o = wipe(&["plan", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["status"], "converged");
    assert_eq!(plan["seed"], 5);
    assert_eq!(plan["config_hash"].as_str().unwrap().len(), 64);
    let steps = plan["steps"].as_array().unwrap();
    let mut min = f64::INFINITY;
    for s in &steps[1..] {
        for ob in s["residuals"]["obstacles"].as_array().unwrap() {
            for v in ob.as_array().unwrap() {
                min = min.min(v.as_f64().unwrap());
            }
        }
    }
    assert!(min >= -1e-6, "obstacle residual {min}");
    assert!(steps.iter().any(|s| s["phase"] == "wipe"));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = write(dir.path(), "bad.json", "{ not json");
    let bad_value = write(dir.path(), "neg.json", r#"{"env":{"sde":{"lambda":-1}}}"#);
    let bad_robot = write(dir.path(), "robot.json", r#"{"robot":"/nonexistent/robot.json"}"#);
    for args in [
        vec!["simulate", "--config", bad_json.as_str()],
        vec!["simulate", "--config", bad_value.as_str()],
        vec!["plan", "--config", bad_robot.as_str()],
        vec!["simulate", "--config", "/nonexistent/config.json"],
        vec!["explode"],
        vec!["evaluate", "--episodes", "many"],
        vec!["evaluate", "--policy", "telepathy"],
        vec!["evaluate", "--episodes", "0"],
    ] {
        let o = wipe(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn help_exits_cleanly() {
    let o = wipe(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("serve-env"));
}

#[test]
fn unknown_keys_only_warn() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "extra.json", r#"{"episodes": 2, "flavour": "mint"}"#);
    let o = wipe(&["evaluate", "--config", cfg.as_str(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("flavour"));
}

#[test]
fn serve_env_over_stdio() {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_wipe"))
        .arg("serve-env")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"cmd\":\"reset\",\"seed\":4}\n{\"cmd\":\"step\",\"action\":[0.5,0.5,0,0.3]}\n{\"cmd\":\"close\"}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["obs"].as_array().unwrap().len(), 4096);
    assert_eq!(lines[1]["info"]["step"], 1);
    assert_eq!(lines[2]["closed"], true);
}
