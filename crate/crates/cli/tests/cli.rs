use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn optokerr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optokerr"))
        .args(args)
        .env_remove("OPTOKERR_THREADS")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn help_for_every_subcommand() {
    for verb in ["steady", "stability", "cool", "sweep", "phase-diagram", "figure"] {
        let out = optokerr(&[verb, "--help"]);
        assert!(out.status.success(), "{verb}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn steady_reports_three_branches_in_the_window() {
    let out = optokerr(&["steady", "--set", "kerr_uhz=150", "--set", "power_mw=100", "--set", "detuning_over_kappa=3"]);
    let v = stdout_json(&out);
    let labels: Vec<&str> = v["branches"].as_array().unwrap().iter().map(|b| b["branch_label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["lower", "middle", "upper"]);
    for b in v["branches"].as_array().unwrap() {
        assert!(b["cubic_residual"].as_f64().unwrap() < 1e-9);
    }
    assert_eq!(v["branches"][1]["stable"], false);
}

#[test]
fn cool_prints_temperature() {
    let v = stdout_json(&optokerr(&["cool", "-c", "cryogenic_membrane"]));
    let t = v["branches"][0]["cooling"]["t_eff_k"].as_f64().unwrap();
    assert!(t > 0.0 && t < 1e-3, "{t}");
}

#[test]
fn unknown_key_is_a_usage_error() {
    let out = optokerr(&["steady", "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unstable_point_exits_3() {
    let out = optokerr(&[
        "cool",
        "--set",
        "kerr_is_angular=false",
        "--set",
        "kerr_uhz=200",
        "--set",
        "detuning_over_kappa=4.87",
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn json_errors_are_machine_readable() {
    let out = optokerr(&["--json-errors", "figure", "9"]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["exit_code"], 2);
    assert!(v["message"].as_str().unwrap().contains('9'));
}

#[test]
fn zero_threads_rejected() {
    assert_eq!(optokerr(&["--threads", "0", "steady"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_optokerr"))
        .arg("steady")
        .env("OPTOKERR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = optokerr(&["sweep", "--axis", "power", "--range", "1:500:40", "--log", "--set", "detuning_over_kappa=3", "-o", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep_power.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("axis_value"));
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sweep_power.json")).unwrap()).unwrap();
    assert_eq!(sidecar["files"][0], "sweep_power.csv");

    let piped = optokerr(&["sweep", "--axis", "power", "--range", "1:500:40", "--log", "--set", "detuning_over_kappa=3"]);
    assert_eq!(String::from_utf8(piped.stdout).unwrap(), csv);
}

#[test]
fn figure_regenerates_from_its_sidecar() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = first.path().to_str().unwrap();
    let out = optokerr(&["figure", "2b", "-o", a, "--grid-1d", "60"]);
    let v = stdout_json(&out);
    assert_eq!(v["figure"], "2b");
    let sidecar = first.path().join("fig2b.json");
    assert!(sidecar.is_file());
    let produced = csv_files(first.path());
    assert_eq!(produced.len(), 4);

    let out = optokerr(&["figure", "2b", "-c", sidecar.to_str().unwrap(), "-o", second.path().to_str().unwrap()]);
    stdout_json(&out);
    assert_eq!(produced, csv_files(second.path()));
}

#[test]
fn output_independent_of_thread_count() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = optokerr(&[
            "--threads",
            threads,
            "phase-diagram",
            "--delta",
            "0:6:24",
            "--range",
            "0:2.5:12",
            "--cooling",
            "-o",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        csv_files(dir.path())
    };
    assert_eq!(run("1"), run("4"));

    let env_run = Command::new(env!("CARGO_BIN_EXE_optokerr"))
        .args(["phase-diagram", "--delta", "0:6:24", "--range", "0:2.5:12", "--cooling"])
        .env("OPTOKERR_THREADS", "2")
        .output()
        .unwrap();
    assert!(env_run.status.success());
    assert_eq!(env_run.stdout, run("3")[0].1);
}
