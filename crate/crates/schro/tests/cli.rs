use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use schro::config::{Config, StateSpec};
use serde_json::Value;

fn schro(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_schro"));
    c.args(args).arg("--quiet").env_remove("SCHRO_SEED");
    if let Some(s) = env_seed {
        c.env("SCHRO_SEED", s);
    }
    c.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(dir: &Path, command: &str, text: &str, extra: &[&str]) -> (i32, PathBuf) {
    let cfg = write_config(dir, &format!("{command}.conf"), text);
    let out = dir.join(format!("out-{command}"));
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = schro(&args, None);
    (o.status.code().unwrap(), out)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

const FREE: &str = "[grid]\nn_points = 2048\ntruncation = 6\n[potential]\nv = zero\nq = linear 1\n";

#[test]
fn spectrum_of_the_free_particle() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(dir.path(), "spectrum", FREE, &[]);
    assert_eq!(code, 0);
    let r = json(&out.join("result.json"));
    let l1 = r["eigenvalues"][0].as_f64().unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((l1 / pi2 - 1.0).abs() < 1e-6, "{l1}");
    assert_eq!(listing(&out), ["couplings.csv", "manifest.json", "potentials.csv", "result.json", "spectrum.csv", "spectrum.svg"]);
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    // Round-trip formatting: the CSV value is the JSON value bit for bit.
    assert_eq!(first[1].parse::<f64>().unwrap(), l1);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 0);
    let echoed: Config = m["config"].as_str().unwrap().parse().unwrap();
    assert_eq!(echoed.grid.n_points, 2048);
    assert_eq!(echoed.control.alpha, 0.1);
}

#[test]
fn sampled_potentials_reproduce_the_analytic_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nn_points = 256\ntruncation = 6\n[potential]\nv = cosine 3 2\nq = gauss 1 0.4 0.1\n";
    let (_, out) = run(dir.path(), "spectrum", text, &[]);
    let samples = out.join("potentials.csv");
    let copy = dir.path().join("pots.csv");
    fs::copy(&samples, &copy).unwrap();
    let text2 = format!("[grid]\nn_points = 256\ntruncation = 6\n[potential]\nsamples = {}\n", copy.display());
    let cfg = write_config(dir.path(), "s.conf", &text2);
    let out2 = dir.path().join("sampled");
    let o = schro(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&out.join("result.json")), json(&out2.join("result.json")));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x,v,q\n0.5,1,1\n").unwrap();
    let cfg = write_config(dir.path(), "b.conf", &format!("[grid]\nn_points = 256\ntruncation = 6\n[potential]\nsamples = {}\n", bad.display()));
    let o = schro(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_configs_exit_2_with_only_an_error_report() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("[grid]\ndt = -1e-3\n", "dt"),
        ("[grid]\ndt = 1e-3\ndt = 1e-3\n", "line 3"),
        ("[control]\ngain = 2\n", "line 2"),
        ("[grid]\ntruncation = 500\n", "truncation"),
    ] {
        let (code, out) = run(dir.path(), "stabilize", text, &[]);
        assert_eq!(code, 2, "{text}");
        assert_eq!(listing(&out), ["error.json"]);
        let e = json(&out.join("error.json"));
        assert!(e["error"].as_str().unwrap().contains(needle), "{e}");
    }
    let o = schro(&["spectrum", "--config", "/nonexistent/file.conf", "--out", dir.path().join("x").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_computations_exit_3_with_details_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nn_points = 256\ntruncation = 6\ndt = 1e-4\n[control]\ninitial = eigen 2\ngoal = eigen 1\nmax_time = 0.01\nmax_halvings = 0\n";
    let (code, out) = run(dir.path(), "steer", text, &[]);
    assert_eq!(code, 3);
    assert_eq!(listing(&out), ["manifest.json"]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "timeout");
    assert!(m["error"].as_str().unwrap().contains("timeout"));
}

#[test]
fn seed_sources_in_priority_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), "c.conf", &format!("seed = 5\n{FREE}"));
    let seed_of = |args: &[&str], env: Option<&str>| {
        let mut a = vec!["spectrum", "--out", out.to_str().unwrap()];
        a.extend_from_slice(args);
        assert_eq!(schro(&a, env).status.code(), Some(0));
        json(&out.join("manifest.json"))["seed"].as_u64().unwrap()
    };
    let c = cfg.to_str().unwrap();
    assert_eq!(seed_of(&["--config", c, "--seed", "9"], Some("3")), 9);
    assert_eq!(seed_of(&["--config", c], Some("3")), 5);
    assert_eq!(seed_of(&[], Some("3")), 3);
    assert_eq!(seed_of(&[], None), 0);
}

#[test]
fn stabilize_is_deterministic_and_decreasing() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nn_points = 256\ntruncation = 6\ndt = 1e-4\n[control]\nhorizon = 1\nstop_threshold = 0\n";
    let (code, a) = run(dir.path(), "stabilize", text, &["--seed", "4"]);
    assert_eq!(code, 0);
    let b = dir.path().join("again");
    let cfg = dir.path().join("stabilize.conf");
    let o = schro(&["stabilize", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "4"], None);
    assert_eq!(o.status.code(), Some(0));
    for f in ["result.json", "trajectory.csv", "lyapunov.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let r = json(&a.join("result.json"));
    assert_eq!(r["monotone"], true);
    assert!(r["lyapunov_final"].as_f64().unwrap() < r["lyapunov_initial"].as_f64().unwrap());
    let csv = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,lyapunov,control,pop_target,norm_l2,norm_h2\n"));
    assert_eq!(csv.lines().count(), 1 + r["rows"].as_u64().unwrap() as usize);

    let o = schro(&["stabilize", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "5"], None);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(fs::read(a.join("result.json")).unwrap(), fs::read(b.join("result.json")).unwrap());
}

#[test]
fn steer_demo_writes_a_verified_control() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/steer.conf");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("steer");
    let o = schro(&["steer", "--config", root.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("result.json"));
    assert!(r["achieved"].as_f64().unwrap() < r["eps"].as_f64().unwrap());
    let csv = fs::read_to_string(out.join("control.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert!(rows <= 100_000 && rows > 0);
    let steps = r["steps"].as_u64().unwrap() as usize;
    assert_eq!(rows, steps.div_ceil(r["csv_stride"].as_u64().unwrap() as usize));
}

#[test]
fn random_growth_paths_flag_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nn_points = 64\ntruncation = 4\ndt = 1e-2\n[potential]\nq = gauss 20 0.37 0.1\n\
                [stochastic]\nmax_steps = 40\nn_max = 4\nblock = 10\ngrowth_steps = 20\nper_path_csv = true\n";
    let (code, out) = run(dir.path(), "random-growth", text, &["--paths", "60", "--seed", "1"]);
    assert_eq!(code, 0);
    let r = json(&out.join("result.json"));
    assert_eq!(r["paths"], 60);
    assert_eq!(r["tail"].as_array().unwrap().len(), 5);
    assert_eq!(r["growth"]["checkpoints"], serde_json::json!([2, 10, 20]));
    assert_eq!(fs::read_to_string(out.join("entrances.csv")).unwrap().lines().count(), 61);
    let m = json(&out.join("manifest.json"));
    assert_eq!(r["config_hash"], m["config_hash"]);

    let (code, _) = run(dir.path(), "random-growth", text, &["--paths", "10"]);
    assert_eq!(code, 2);
}

#[test]
fn nonlinear_and_probe_commands() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nn_points = 128\ntruncation = 6\ndt = 1e-4\n[control]\nhold_steps = 1\nhorizon = 0.2\nstop_threshold = 0\ninitial = random 9\n";
    let (code, out) = run(dir.path(), "nonlinear-stabilize", text, &[]);
    assert_eq!(code, 0);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["blow_up"], false);
    assert_eq!(json(&out.join("result.json"))["monotone"], true);

    let (code, out) = run(dir.path(), "linearized-probe", "[grid]\nn_points = 128\ntruncation = 6\ndt = 1e-4\n", &[]);
    assert_eq!(code, 0);
    let r = json(&out.join("result.json"));
    assert!(r["relative_error"].as_f64().unwrap() < 0.05);
    assert_eq!(r["rank"]["full_rank"], true);

    let (code, _) = run(dir.path(), "linearized-probe", "[conditions]\nprobe_p = 2\nprobe_l = 2\n", &[]);
    assert_eq!(code, 2);
}

#[test]
fn check_conditions_reports_free_particle_violations() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nn_points = 512\ntruncation = 10\n[potential]\nv = zero\nq = linear 1\n[conditions]\nindex_bound = 9\n";
    let (code, out) = run(dir.path(), "check-conditions", text, &[]);
    assert_eq!(code, 0);
    let r = json(&out.join("result.json"));
    let coupling = &r["reports"][0];
    assert_eq!(coupling["condition_id"], "coupling_nonvanishing");
    let idx: Vec<u64> = coupling["violations"].as_array().unwrap().iter().map(|v| v["indices"][0].as_u64().unwrap()).collect();
    assert_eq!(idx, [3, 5, 7, 9]);
    assert_eq!(r["passed"], false);
    let csv = fs::read_to_string(out.join("violations.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("coupling_nonvanishing,3,")));
}

fn potential() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("zero".to_string()),
        (-50.0..50.0f64).prop_map(|a| format!("linear {a}")),
        (-50.0..50.0f64, 0.5..5.0f64).prop_map(|(a, k)| format!("cosine {a} {k} + quadratic {}", a / 3.0)),
        (-5.0..5.0f64, 0.0..1.0f64, 0.01..1.0f64).prop_map(|(a, x, w)| format!("gauss {a} {x} {w}")),
    ]
}

fn state_spec() -> impl Strategy<Value = StateSpec> {
    prop_oneof![
        Just(StateSpec::Random),
        any::<u64>().prop_map(StateSpec::Seeded),
        (1usize..9).prop_map(StateSpec::Eigen),
        prop::collection::vec(-1e3..1e3f64, 8).prop_map(StateSpec::Coeffs),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(
        seed in prop::option::of(any::<u64>()),
        n in 32usize..5000,
        dt in 1e-7..1.0f64,
        v in potential(),
        q in potential(),
        alpha in 1e-6..1e3f64,
        initial in state_spec(),
        adapt in any::<bool>(),
        scale in 0.0..1e-3f64,
    ) {
        let mut text = String::new();
        if let Some(s) = seed {
            text.push_str(&format!("seed = {s}\n"));
        }
        text.push_str(&format!("[grid]\nn_points = {n}\ndt = {dt:e}\n[potential]\nv = {v}\nq = {q}\n"));
        text.push_str(&format!("[control]\nalpha = {alpha}\nadapt_delta = {adapt}\ninitial = {initial}\n"));
        text.push_str(&format!("[stochastic]\nscale = {scale}\n"));
        let parsed: Config = text.parse().unwrap();
        let again: Config = parsed.to_text().parse().unwrap();
        prop_assert_eq!(&again, &parsed);
        prop_assert_eq!(again.to_text(), parsed.to_text());
        prop_assert_eq!(parsed.grid.dt, dt);
        prop_assert_eq!(parsed.control.alpha, alpha);
    }
}
