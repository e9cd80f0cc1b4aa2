use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn spoofplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spoofplan"))
        .args(args)
        .env_remove("SPOOFPLAN_OUT")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"];
    args.extend_from_slice(extra);
    spoofplan(&args)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_bound_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": "double_integrator", "x0": [1, 0, 0, 0], "horizon": 1,
            "nominal_input": {"mode": "constant", "value": [0, 0]}}"#,
    );
    let o = run_in("simulate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("u_max"), "{}", stderr(&o));
}

#[test]
fn syntax_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"model\": \"double_integrator\",\n  \"x0\": [1, 0, 0 0]\n}");
    let o = run_in("simulate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn target_at_the_base_station_is_rejected_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": "double_integrator", "x0": [1, 1, -1, 1], "p_F": [0, 0], "u_max": 1,
            "nominal_input": {"mode": "secure_plan"}}"#,
    );
    let start = Instant::now();
    let o = run_in("plan-secure", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("base station"), "{}", stderr(&o));
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn simulate_writes_listed_artifacts_and_is_undetected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_in("simulate", &scenario("idle_circle.json"), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["detection"]["detected"], Value::Bool(false));
    for f in r["files"].as_array().unwrap() {
        assert!(Path::new(f.as_str().unwrap()).exists(), "{f}");
    }
    // Unit-circle arc swept counterclockwise to the far side.
    let csv = std::fs::read_to_string(out.join("attacked.csv")).unwrap();
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').take(3).map(|s| s.parse().unwrap()).collect();
    assert!((last[1].hypot(last[2]) - 1.0).abs() < 1e-6);
    assert!(last[1] < -0.95 && last[2] > 0.0, "{last:?}");
    let svg = std::fs::read_to_string(out.join("plot.svg")).unwrap();
    assert!(svg.contains("base station") && svg.contains("<polyline"));
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run_in("attack-opt", &scenario("table1_mintime.json"), out, &["--seed", "7"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["nominal.csv", "attacked.csv", "bang_profile.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn attack_none_omits_attacked_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        r#"{"model": "double_integrator", "x0": [1, 0, 0, 0.5], "horizon": 2, "u_max": 1,
            "nominal_input": {"mode": "constant", "value": [-0.2, 0]}, "attack": {"mode": "none"}}"#,
    );
    let o = run_in("simulate", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("nominal.csv").exists());
    assert!(!out.join("attacked.csv").exists());
    assert_eq!(report(&out)["detection"]["detected"], Value::Bool(false));
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spoofplan"))
        .args(["simulate", "--quiet", "--config", scenario("unicycle_radial.json").to_str().unwrap()])
        .env("SPOOFPLAN_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("nominal.csv").exists());
}

#[test]
fn dt_flag_overrides_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_in("simulate", &scenario("unicycle_radial.json"), &out, &["--dt", "0.01"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(&out)["metrics"]["steps"], Value::from(300));
}

#[test]
fn planned_input_checks_secure_and_min_time_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan");
    let o = run_in("plan-secure", &scenario("fig4_secure.json"), &plan, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kappa = std::fs::read_to_string(plan.join("kappa.csv")).unwrap();
    assert!(kappa.lines().skip(1).all(|l| l.ends_with(",1.0000000000000000e0") || l.ends_with(",-1.0000000000000000e0")));

    let secure = dir.path().join("secure");
    let input = plan.join("secure.csv");
    let o = run_in("check", &scenario("fig4_secure.json"), &secure, &["--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(&secure)["metrics"]["secure"], Value::Bool(true));
    assert!(!secure.join("counterexample.csv").exists());

    let attackable = dir.path().join("mintime");
    let o = run_in("check", &scenario("table1_mintime.json"), &attackable, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&attackable);
    assert_eq!(r["metrics"]["secure"], Value::Bool(false));
    assert_eq!(r["detection"]["detected"], Value::Bool(false));
    assert!(r["metrics"]["max_deviation"].as_f64().unwrap() > 1e-3);
    assert!(attackable.join("counterexample.svg").exists());
}

#[test]
fn unicycle_full_speed_radial_input_is_secure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_in("check", &scenario("unicycle_radial.json"), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(&out)["metrics"]["secure"], Value::Bool(true));
}

#[test]
fn radial_plan_matches_the_closed_form_time() {
    // Start at rest on the ray to the target with full outward thrust:
    // p(T) = 1 + T²/2 and the optimality condition reduces to T³ − 6T + 1 = 0.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_in("plan-secure", &scenario("radial_1d.json"), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = report(&out)["metrics"]["secure_horizon"].as_f64().unwrap();
    assert!((t * t * t - 6.0 * t + 1.0).abs() < 1e-6, "T = {t}");
    assert!(t > 1.0);
}

#[test]
fn sweep_emits_a_nonincreasing_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_in("sweep", &scenario("fig3_sweep.json"), &out, &["--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let devs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(devs.len(), 4);
    assert!(devs.windows(2).all(|w| w[1] <= w[0]), "{devs:?}");
}

#[test]
fn malformed_candidate_csv_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,x1,x2\n0,1,2\n").unwrap();
    let o = run_in("check", &scenario("table1_mintime.json"), &dir.path().join("out"), &["--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("header"), "{}", stderr(&o));
}

#[test]
fn shipped_scenarios_finish_within_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        ("simulate", "idle_circle.json"),
        ("attack-opt", "idle_circle_opt.json"),
        ("attack-opt", "table1_mintime.json"),
        ("sweep", "fig3_sweep.json"),
        ("plan-secure", "fig4_secure.json"),
        ("plan-secure", "fig4_secure_attack.json"),
        ("plan-secure", "radial_1d.json"),
        ("simulate", "unicycle_radial.json"),
        ("simulate", "unicycle_offset.json"),
    ];
    for (i, (cmd, file)) in runs.iter().enumerate() {
        let start = Instant::now();
        let o = run_in(cmd, &scenario(file), &dir.path().join(i.to_string()), &[]);
        let took = start.elapsed();
        assert!(o.status.success(), "{cmd} {file}: {}", stderr(&o));
        assert!(took < Duration::from_secs(60), "{cmd} {file} took {took:?}");
    }
}
