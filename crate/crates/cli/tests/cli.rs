use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repset")).args(args).env_remove("REPSET_SEED").output().unwrap()
}

fn toy() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.json").display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn optimize_writes_outputs_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = repset(&["optimize", "-c", &toy(), "-o", &out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["solution.json", "representations.csv", "distribution.csv", "popularity.csv", "rate_ranges.csv", "effective_config.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let sol = read_json(&dir.path().join("solution.json"));
    assert!((sol["solution"]["objective"].as_f64().unwrap() - 1.4).abs() < 1e-12, "{sol}");
    let reps = fs::read_to_string(dir.path().join("representations.csv")).unwrap();
    assert_eq!(reps.lines().collect::<Vec<_>>(), ["video,resolution,rate_kbps", "sport,360p,400"]);
}

#[test]
fn flags_override_config_and_binary_pins_serving_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = repset(&[
        "optimize", "-c", &toy(), "-o", &out_arg(dir.path()), "--k", "2", "--variant", "binary", "--t-min", "0.3", "--c",
        "unconstrained",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = read_json(&dir.path().join("effective_config.json"));
    assert_eq!(echo["problem"]["max_representations"], 2);
    assert_eq!(echo["problem"]["variant"], "binary");
    assert_eq!(echo["problem"]["min_serving_time"], 1.0);
    assert!(echo["problem"]["cdn_budget_kbps"].is_null());
    let sol = read_json(&dir.path().join("solution.json"));
    assert!((sol["solution"]["objective"].as_f64().unwrap() - 1.65).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = repset(&["optimize", "-c", "no/such/config.json", "-o", &out_arg(dir.path())]);
    assert_eq!(missing.status.code(), Some(1));

    let bad_flag = repset(&["optimize", "-c", &toy(), "--k", "many"]);
    assert_eq!(bad_flag.status.code(), Some(1));

    let bad_value = repset(&["optimize", "-c", &toy(), "-o", &out_arg(dir.path()), "--p", "1.5"]);
    assert_eq!(bad_value.status.code(), Some(1));

    let infeasible = dir.path().join("infeasible.json");
    fs::write(
        &infeasible,
        r#"{
            "population": {"kind": "explicit", "users": [
                {"id": 7, "video": "movie", "display": "720p", "throughput": {"kind": "scalar", "capacity_kbps": 100}}
            ]},
            "problem": {"served_fraction": 1.0, "cdn_budget_kbps": null},
            "universe": {"external_only": true, "extra": [{"video": "movie", "resolution": "720p", "rate_kbps": 900}]}
        }"#,
    )
    .unwrap();
    let out = repset(&["optimize", "-c", infeasible.to_str().unwrap(), "-o", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains('7'));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = repset(&["optimize", "-c", &toy(), "-o", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn show_recommendation_lists_ladders() {
    let out = repset(&["show-recommendation", "netflix"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1 + 132);
    let apple = repset(&["show-recommendation", "apple"]);
    assert_eq!(String::from_utf8_lossy(&apple.stdout).lines().count(), 1 + 40);
}

#[test]
fn evaluate_vendor_and_file_sets_agree() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let out = repset(&["evaluate", "-c", &toy(), "-o", &out_arg(&a), "--set", "apple"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["evaluation.json", "representations.csv", "per_user.csv", "excess_cdf.csv", "distribution.csv"] {
        assert!(a.join(name).is_file(), "{name}");
    }
    let b = dir.path().join("b");
    let file = format!("file:{}", a.join("representations.csv").display());
    let out = repset(&["evaluate", "-c", &toy(), "-o", &out_arg(&b), "--set", &file]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (ea, eb) = (read_json(&a.join("evaluation.json")), read_json(&b.join("evaluation.json")));
    assert_eq!(ea["model"]["solution"]["objective"], eb["model"]["solution"]["objective"]);
    let cdf = fs::read_to_string(a.join("excess_cdf.csv")).unwrap();
    assert_eq!(cdf.lines().next(), Some("excess_bin,cumulative_fraction"));
}

#[test]
fn simulate_reports_per_user_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = repset(&["simulate", "-c", &toy(), "-o", &out_arg(dir.path()), "--set", "microsoft", "--controller", "no_outage"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let per_user = fs::read_to_string(dir.path().join("per_user.csv")).unwrap();
    assert_eq!(per_user.lines().next(), Some("user_id,mean_satisfaction,serving_time"));
    assert_eq!(per_user.lines().count(), 3);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = repset(&["sweep", "-c", &toy(), "-o", &out_arg(dir.path()), "--axis", "K", "--values", "1,2", "--runs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 4);
    for name in ["distribution.csv", "popularity.csv", "rate_ranges.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn export_lp_writes_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = repset(&["export-lp", "-c", &toy(), "-o", &out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lp = fs::read_to_string(dir.path().join("model.lp")).unwrap();
    for section in ["Maximize", "Subject To", "Bounds", "End"] {
        assert!(lp.lines().any(|l| l.trim() == section), "{section}");
    }
    assert!(lp.contains("beta_t0") && lp.contains("beta_t1"));
}

#[test]
fn ingest_then_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let mut text = String::from("user_id,chunk_index,bytes_received,download_seconds\n");
    for (user, kbps) in [("a", 600.0), ("b", 1800.0), ("c", 3000.0), ("d", 20_000.0)] {
        for chunk in 0..12 {
            let bytes = (kbps + 10.0 * chunk as f64) * 1000.0 / 8.0 * 2.0;
            text.push_str(&format!("{user},{chunk},{bytes},2.0\n"));
        }
    }
    fs::write(&trace, text).unwrap();
    let pop = dir.path().join("pop");
    let out = repset(&["ingest", trace.to_str().unwrap(), "--users", "3", "-o", &out_arg(&pop)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let users = read_json(&pop.join("users.json"));
    assert_eq!(users["users"].as_array().unwrap().len(), 3);

    let too_many = repset(&["ingest", trace.to_str().unwrap(), "--users", "4", "-o", &out_arg(&pop)]);
    assert_eq!(too_many.status.code(), Some(1));

    let config = dir.path().join("config.json");
    let exp = serde_json::json!({
        "population": users,
        "problem": {"max_representations": 6, "cdn_budget_kbps": null},
        "solver": {"time_limit_s": 30.0},
    });
    fs::write(&config, exp.to_string()).unwrap();
    let out = repset(&["optimize", "-c", config.to_str().unwrap(), "-o", &out_arg(&dir.path().join("opt"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
