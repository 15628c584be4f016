use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_vgstein");

fn vgstein(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("VGSTEIN_THREADS").output().expect("spawn vgstein")
}

fn ok_json(args: &[&str]) -> Value {
    let out = vgstein(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(args: &[&str]) -> i32 {
    vgstein(args).status.code().expect("exit code")
}

fn stderr(args: &[&str]) -> String {
    String::from_utf8_lossy(&vgstein(args).stderr).into_owned()
}

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/vgstein-output.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(def: &str, instance: &Value) {
    let mut s = schema();
    s["$ref"] = Value::String(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&s).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "{def}: {errors:#?}\n{instance:#}");
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

#[test]
fn moments_example() {
    let v = ok_json(&["moments", "--r", "1", "--theta", "1", "--sigma", "1", "--k", "2"]);
    assert_eq!(v, serde_json::json!({ "M": [1.0, 1.0, 4.0] }));
    assert_valid("moments", &v);
}

#[test]
fn laplace_density_example() {
    let v = ok_json(&["density", "--r", "2", "--theta", "0", "--sigma", "1", "--mu", "0", "--x", "0"]);
    assert!((v["density"].as_f64().unwrap() - 0.5).abs() < 1e-12, "{v}");
    assert_valid("density", &v);
}

#[test]
fn d2_bound_example() {
    let v = ok_json(&["d2-bound", "--m", "100", "--n", "100", "--norms", "1,1,1", "--center-norm", "2"]);
    assert_valid("d2-bound", &v);
    let (a, b, min) = (v["A"].as_f64().unwrap(), v["B"].as_f64().unwrap(), v["min"].as_f64().unwrap());
    assert_eq!(a, b);
    assert_eq!(min, a);
    let (m3, m4) = (v["report"]["M3"].as_f64().unwrap(), v["report"]["M4"].as_f64().unwrap());
    assert_eq!(a, 9.0 / 100.0 * m3 + 1.0 / 100.0 * m4);
    assert_eq!(v["report"]["total"].as_f64().unwrap(), min);
}

#[test]
fn argument_errors_exit_2_and_name_the_problem() {
    assert_eq!(code(&["density", "--r", "1", "--bogus", "1", "--x", "0"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["density", "--r", "1"]), 2);
    assert_eq!(code(&["density", "--r", "abc", "--x", "0"]), 2);

    assert_eq!(code(&["density", "--r", "-1", "--x", "0"]), 2);
    assert!(stderr(&["density", "--r", "-1", "--x", "0"]).contains("r must be > 0"));
    assert_eq!(code(&["density", "--r", "1", "--sigma", "0", "--x", "0"]), 2);
    assert!(stderr(&["mgf", "--r", "1", "--t", "5"]).contains("strip"));
    assert_eq!(code(&["mgf", "--r", "1", "--t", "5"]), 2);
    assert_eq!(code(&["moments", "--r", "1", "--mu", "1", "--k", "3"]), 2);
    assert_eq!(code(&["moments", "--r", "1", "--k", "0"]), 2);
    assert_eq!(code(&["sample", "--r", "1", "--n", "0"]), 2);
    assert_eq!(code(&["simulate", "--m", "0", "--n", "3"]), 2);
    assert_eq!(code(&["simulate", "--m", "3", "--n", "3", "--samples", "10"]), 2);
    assert!(stderr(&["simulate", "--m", "3", "--n", "3", "--samples", "10"]).contains("--samples"));
    assert_eq!(code(&["simulate", "--m", "3", "--n", "3", "--law-x", "cauchy"]), 2);
    assert_eq!(code(&["simulate", "--m", "3", "--n", "3", "--h", "exp"]), 2);
    assert_eq!(code(&["bound", "--m", "3", "--n", "3", "--norms", "1,1", "--center-norm", "1"]), 2);
    assert_eq!(code(&["bound", "--m", "3", "--n", "3", "--h", "indicator0"]), 2);
    assert_eq!(code(&["bound", "--m", "3", "--n", "3"]), 2);
    assert_eq!(code(&["d2-bound", "--m", "3", "--n", "3", "--norms", "1,-1,1", "--center-norm", "1"]), 2);
    assert_eq!(code(&["nonsmooth", "--k", "0"]), 2);
    assert_eq!(code(&["bessel-check", "--nu", "-0.7"]), 2);
    assert_eq!(code(&["convert", "--from", "second", "--alpha", "1"]), 2);
    assert!(stderr(&["convert", "--from", "second", "--alpha", "1"]).contains("--nu"));
    assert_eq!(code(&["density", "--r", "1", "--x", "0", "--out", "result.txt"]), 2);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["simulate", "--help"]), 0);
}

#[test]
fn exceeded_time_budget_exits_3() {
    let args = ["simulate", "--m", "200", "--n", "200", "--samples", "100000000", "--time-budget", "0.001"];
    assert_eq!(code(&args), 3);
    assert!(stderr(&args).contains("partial"));
}

#[test]
fn every_command_matches_the_schema() {
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("density", vec!["density", "--r", "1.5", "--theta", "-0.3", "--x", "-1,0.5,3"]),
        ("density", vec!["density", "--r", "1", "--x", "0"]),
        ("cdf", vec!["cdf", "--r", "2", "--theta", "0.4", "--x", "-2,0,1"]),
        ("mgf", vec!["mgf", "--r", "2", "--t", "0.2"]),
        ("sample", vec!["sample", "--r", "2", "--theta", "0.3", "--n", "5", "--seed", "9"]),
        ("convert", vec!["convert", "--r", "3", "--theta", "0.2", "--sigma", "0.8", "--mu", "1"]),
        ("convert", vec!["convert", "--from", "product-normal", "--sigma-x", "1", "--sigma-y", "2", "--rho", "0.5"]),
        ("convert", vec!["convert", "--from", "gamma-difference", "--r", "1", "--lambda1", "2", "--lambda2", "1"]),
        ("convert", vec!["convert", "--from", "laplace", "--sigma", "2"]),
        ("stein-solve", vec!["stein-solve", "--r", "2", "--theta", "0.3", "--h", "tanh", "--x", "-1,0,2", "--derivatives", "4"]),
        ("stein-check", vec!["stein-check", "--r", "2", "--grid", "7", "--h", "cos,tanh"]),
        ("bound", vec!["bound", "--m", "10", "--n", "30", "--r", "2", "--law-y", "uniform_pm", "--h", "cos"]),
        ("bound", vec!["bound", "--m", "10", "--n", "30", "--norms", "1,1,1", "--center-norm", "2", "--as-stated"]),
        ("d2-bound", vec!["d2-bound", "--m", "10", "--n", "40", "--h", "tanh"]),
        ("simulate", vec!["simulate", "--m", "4", "--n", "6", "--r", "2", "--h", "cos,indicator0", "--samples", "20000"]),
        ("d2-run", vec!["d2-run", "--m", "16", "--n", "16", "--h", "cos,sin", "--samples", "20000", "--seed", "3"]),
        ("nonsmooth", vec!["nonsmooth", "--k", "1,25,50,100", "--l", "1,25,50,100"]),
        ("bessel-check", vec!["bessel-check", "--nu", "0.5", "--beta", "0.3", "--order", "1"]),
        ("bessel-check", vec!["bessel-check", "--nu", "-0.25", "--x", "0,0.5,4"]),
    ];
    for (def, args) in cases {
        let v = ok_json(&args);
        assert_valid(def, &v);
    }
}

#[test]
fn simulation_output_reports_bound_validity() {
    let v = ok_json(&["simulate", "--m", "8", "--n", "8", "--h", "cos,sin,tanh,bump", "--samples", "200000", "--seed", "5"]);
    for e in v["per_h"].as_array().unwrap() {
        assert_eq!(e["pass"], true, "{e}");
        let d = e["distance"].as_f64().unwrap();
        let b = e["bound"]["total"].as_f64().unwrap();
        let se = e["se"].as_f64().unwrap();
        assert!(d <= b + 3.0 * se);
    }
}

#[test]
fn check_commands_pass_on_good_parameters() {
    let v = ok_json(&["stein-check", "--r", "3", "--sigma", "0.8", "--mu", "0.5"]);
    assert_eq!(v["pass"], true);
    assert!(v["characterization_max_residual"].as_f64().unwrap() < 1e-6);
    for e in v["round_trip"].as_array().unwrap() {
        assert!(e["max_residual"].as_f64().unwrap() < 1e-6);
        assert!(e["sup_df"].as_f64().unwrap() <= e["M1"].as_f64().unwrap());
    }
    let v = ok_json(&["bessel-check", "--nu", "1.5", "--beta", "-0.4"]);
    assert_eq!(v["pass"], true);
    assert!(v["wronskian_max_rel_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn nonsmooth_reports_exact_and_stirling_values() {
    let v = ok_json(&["nonsmooth", "--k", "1,25,50,100,200,400"]);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows[0]["exact"], 0.75);
    assert!(rows[2]["stirling_rel_error"].as_f64().unwrap() < 0.02);
    let slope = v["decay_slope"].as_f64().unwrap();
    // includes k = 1, so only a loose check; the k >= 25 fit is tighter
    assert!(slope < -0.3 && slope > -0.6, "{slope}");
    let v = ok_json(&["nonsmooth", "--k", "25,50,100,200,400"]);
    let slope = v["decay_slope"].as_f64().unwrap();
    assert!((-0.55..=-0.45).contains(&slope), "{slope}");
}

#[test]
fn out_files_get_manifests_and_replay_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("sim.csv", vec!["simulate", "--m", "5", "--n", "7", "--h", "cos,tanh", "--samples", "30000", "--seed", "11"]),
        ("sim.json", vec!["simulate", "--m", "5", "--n", "7", "--samples", "30000", "--seed", "11"]),
        ("draws.csv", vec!["sample", "--r", "1.3", "--theta", "-0.2", "--n", "50", "--seed", "4"]),
        ("convert.csv", vec!["convert", "--r", "2", "--theta", "0.5"]),
        ("ns.json", vec!["nonsmooth", "--k", "3,9"]),
    ] {
        let out = dir.path().join(name);
        let mut full = args.clone();
        let out_s = out.to_str().unwrap().to_string();
        full.extend(["--out", out_s.as_str()]);
        let res = vgstein(&full);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        assert!(res.stdout.is_empty(), "results go to the file, not stdout");
        let first = std::fs::read(&out).unwrap();

        let manifest_path = dir.path().join(format!("{name}.manifest.json"));
        let manifest: Value = serde_json::from_slice(&std::fs::read(&manifest_path).unwrap()).unwrap();
        assert_valid("manifest", &manifest);
        assert_eq!(manifest["command"], args[0]);
        assert_eq!(manifest["artifact_version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(manifest["outputs"][0], out_s.as_str());

        if name.ends_with(".json") {
            let v: Value = serde_json::from_slice(&first).unwrap();
            assert_valid(args[0], &v);
        }

        // replay into the same path and into a fresh one
        let replayed = dir.path().join(format!("replayed-{name}"));
        assert_eq!(code(&["replay", "--manifest", manifest_path.to_str().unwrap()]), 0);
        assert_eq!(std::fs::read(&out).unwrap(), first, "{name}: replay in place");
        assert_eq!(
            code(&["replay", "--manifest", manifest_path.to_str().unwrap(), "--out", replayed.to_str().unwrap()]),
            0
        );
        assert_eq!(std::fs::read(&replayed).unwrap(), first, "{name}: replay elsewhere");
    }
}

#[test]
fn csv_output_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cell.csv");
    let res = vgstein(&[
        "d2-run", "--m", "10", "--n", "12", "--h", "cos,sin", "--samples", "20000", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "m,n,r,law_x,law_y,h,n_samples,estimate,se,target,distance,gamma1,gamma2,gamma3,M2,M3,M4,bound,pass"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols.len(), 19);
        // 17 significant digits: one leading digit and sixteen after the point
        let est = cols[7];
        let mantissa = est.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.len(), 18, "{est}");
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let args = ["simulate", "--m", "9", "--n", "9", "--h", "cos,tanh", "--samples", "300000", "--seed", "2"];
    let one = Command::new(BIN).args(args).env("VGSTEIN_THREADS", "1").output().unwrap();
    let four = Command::new(BIN).args(args).env("VGSTEIN_THREADS", "4").output().unwrap();
    let flag = vgstein(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, flag.stdout);
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_or_malformed_sweeps_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "empty.cfg", "# no cells\nseed = 1\nsamples = 20000\n");
    let res = vgstein(&["sweep", "--config", empty.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty"));

    let bad = write_config(dir.path(), "bad.cfg", "[series]\nm = 4, five\n");
    let res = vgstein(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));

    assert_eq!(code(&["sweep", "--config", dir.path().join("missing.cfg").to_str().unwrap()]), 1);
}

#[test]
fn sweep_records_failed_cells_in_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mixed.cfg",
        "samples = 20000\nseed = 3\n\n[cell]\nm = 4\nn = 6\n\n[cell]\nm = 4\nlaw_x = cauchy\n\n[cell]\nm = 0\n",
    );
    let out = dir.path().join("mixed.csv");
    let res = vgstein(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].ends_with(",true"));
    assert!(rows[1].starts_with("4,4,1,cauchy,rademacher,cos,20000,NaN") && rows[1].ends_with(",error"));
    assert!(rows[2].starts_with("0,0,") && rows[2].ends_with(",error"));

    let json_out = dir.path().join("mixed.json");
    assert_eq!(code(&["sweep", "--config", cfg.to_str().unwrap(), "--out", json_out.to_str().unwrap()]), 0);
    let v: Value = serde_json::from_slice(&std::fs::read(&json_out).unwrap()).unwrap();
    assert_valid("sweep", &v);
    assert!(v["cells"][1]["error"].as_str().unwrap().contains("cauchy"));

    let all_bad = write_config(dir.path(), "bad.cfg", "samples = 20000\n[cell]\nm = 0\n[cell]\nm = 3\nh = exp\n");
    assert_eq!(code(&["sweep", "--config", all_bad.to_str().unwrap()]), 2);
}

#[test]
fn gaussian_sweep_is_a_zero_signal_control() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("control.json");
    let cfg = config_path("gaussian_control.cfg");
    let res = vgstein(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_valid("sweep", &v);
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    for c in cells {
        for e in c["per_h"].as_array().unwrap() {
            let (d, se) = (e["distance"].as_f64().unwrap(), e["se"].as_f64().unwrap());
            assert!(d <= 4.0 * se, "m={} h={}: {d} vs se {se}", c["m"], e["h"]);
        }
    }
    // no resolvable signal, so the rate fit reports that instead of a slope
    assert_eq!(v["fits"].as_array().unwrap().len(), 4);
    assert!(v["fits"][0]["error"].as_str().unwrap().contains("insufficient signal"));
}

#[test]
fn acceptance_sweep_config_produces_five_rows_and_a_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("acceptance.csv");
    let cfg = config_path("acceptance.cfg");
    let res = vgstein(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 5 + 1, "{text}");
    for (row, m) in lines[1..6].iter().zip([20, 40, 80, 160, 320]) {
        assert!(row.starts_with(&format!("{m},{m},1,rademacher,rademacher,cos,10000000,")), "{row}");
        assert!(row.ends_with(",true"), "bound violated: {row}");
    }
    let slope_row: Vec<&str> = lines[6].split(',').collect();
    assert_eq!(slope_row[0], "slope");
    let slope: f64 = slope_row[7].parse().unwrap();
    assert!((-1.4..=-0.6).contains(&slope), "{slope}");
    assert_eq!(slope_row[18], "true");

    // the manifest replays to the same bytes
    let manifest = dir.path().join("acceptance.csv.manifest.json");
    let m: Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_valid("manifest", &m);
    assert!(m["config_text"].as_str().unwrap().contains("m = 20, 40, 80, 160, 320"));
    let again = dir.path().join("again.csv");
    assert_eq!(code(&["replay", "--manifest", manifest.to_str().unwrap(), "--out", again.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read(&again).unwrap(), text.as_bytes());
}

#[test]
fn replay_refuses_a_changed_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.cfg", "samples = 20000\n[cell]\nm = 3\n");
    let out = dir.path().join("s.csv");
    assert_eq!(code(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    std::fs::write(&cfg, "samples = 30000\n[cell]\nm = 3\n").unwrap();
    let manifest = dir.path().join("s.csv.manifest.json");
    let res = vgstein(&["replay", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("changed"));
}
