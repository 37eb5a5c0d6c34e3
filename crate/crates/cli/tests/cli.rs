use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cep-lab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn tables(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir.join("per_trial"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn run_is_reproducible_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = cli(&["run", "b4", "--trials", "3", "--seed", "9", "--out", out], tmp.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(tmp.path().join(out).join("report.json").exists());
    }
    let seq = cli(&["--sequential", "run", "b4", "--trials", "3", "--seed", "9", "--out", "c"], tmp.path());
    assert_eq!(code(&seq), 0);
    let a = tables(&tmp.path().join("a"));
    assert_eq!(a.len(), 3);
    assert_eq!(a, tables(&tmp.path().join("b")));
    assert_eq!(a, tables(&tmp.path().join("c")));
    let v = cli(&["verify", "a"], tmp.path());
    assert_eq!(code(&v), 0);
    assert!(String::from_utf8_lossy(&v.stdout).contains(" 0 mismatches"));
}

#[test]
fn verify_flags_edited_tables() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["run", "b4", "--trials", "2", "--out", "r"], tmp.path())), 0);
    let (name, bytes) = tables(&tmp.path().join("r")).remove(0);
    let text = String::from_utf8(bytes).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    *cells.last_mut().unwrap() = "0.99".into();
    lines[1] = cells.join(",");
    fs::write(tmp.path().join("r/per_trial").join(name), lines.join("\n") + "\n").unwrap();
    assert_eq!(code(&cli(&["verify", "r"], tmp.path())), 4);
}

#[test]
fn flags_override_config_values() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("cfg.json"),
        r#"{"protocol": "b5_energy_proxy", "trials": 7, "seed": 1, "output_dir": "from_config"}"#,
    )
    .unwrap();
    let o = cli(&["run", "b5", "--config", "cfg.json", "--trials", "2", "--seed", "4", "--out", "flag"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!tmp.path().join("from_config").exists());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("flag/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["trials"], 2);
    assert_eq!(report["config"]["seed"], 4);
    assert_eq!(tables(&tmp.path().join("flag")).len(), 4);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), r#"{"protocol": "b2_efficiency_generalization", "trails": 3}"#).unwrap();
    assert_eq!(code(&cli(&["run", "b2", "--config", "bad.json"], tmp.path())), 2);
    assert_eq!(code(&cli(&["run", "b7"], tmp.path())), 2);
    assert_eq!(code(&cli(&["run", "b3", "--config", "missing.json"], tmp.path())), 2);
    fs::write(
        tmp.path().join("few.json"),
        r#"{"protocol": "b2_efficiency_generalization", "models": [{"family": "correlational"}, {"family": "generative"}], "trials": 2}"#,
    )
    .unwrap();
    assert_eq!(code(&cli(&["run", "b2", "--config", "few.json", "--out", "few"], tmp.path())), 3);
    fs::write(tmp.path().join("joint.json"), r#"{"rows": [[0.5, 0.2], [0.1, 0.1]]}"#).unwrap();
    assert_eq!(code(&cli(&["ib-frontier", "--joint", "joint.json"], tmp.path())), 2);
}

#[test]
fn frontier_and_environment_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("joint.json"), r#"{"rows": [[0.3, 0.05], [0.05, 0.3], [0.15, 0.15]]}"#).unwrap();
    let o = cli(&["ib-frontier", "--joint", "joint.json", "--z", "2", "--betas", "10", "--out", "f"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("f/frontier.csv")).unwrap();
    assert!(csv.starts_with("beta,rate_bits,relevance_bits,epsilon_ib,converged\n"));
    assert_eq!(csv.lines().count(), 11);

    let g = cli(&["gen-env", "--kind", "markov_confounded", "--length", "50", "--seed", "2", "--out", "s.txt"], tmp.path());
    assert_eq!(code(&g), 0);
    let text = fs::read_to_string(tmp.path().join("s.txt")).unwrap();
    assert!(text.starts_with("#alphabet="));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 50);
    let again = cli(&["gen-env", "--kind", "markov_confounded", "--length", "50", "--seed", "2"], tmp.path());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn falsify_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    for p in ["b2", "b3", "b4", "b5"] {
        assert_eq!(code(&cli(&["run", p, "--trials", "2", "--out", p], tmp.path())), 0);
    }
    let o = cli(&["falsify", "b2", "b3", "b4", "b5", "--out", "table.json"], tmp.path());
    assert_eq!(code(&o), 0);
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("table.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 4);
    for p in ["b2", "b3", "b4", "b5"] {
        assert_eq!(code(&cli(&["export-plots", p], tmp.path())), 0);
        assert!(fs::read_dir(tmp.path().join(p).join("plots")).unwrap().count() > 0);
    }
}
