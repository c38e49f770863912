use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"

[geometry]
antennas = 2
layers = 2
atoms = 9

[scenario]
users = 2

[sweep]
snr_db = [0.0, 20.0]
trials = 50
seed = 3
"#;

fn simest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simest"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_succeeds() {
    let out = simest(&["validate", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 8);
}

#[test]
fn run_writes_one_row_per_estimator_and_snr() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = simest(&["run", &config]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    assert!(text.starts_with("scenario,estimator,snr_db"));
}

#[test]
fn run_is_byte_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let csv = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = simest(&[
            "run",
            &config,
            "--seed",
            seed,
            "--trials",
            "40",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        fs::read(path).unwrap()
    };
    let (a, b, c) = (csv("a.csv", "9"), csv("b.csv", "9"), csv("c.csv", "10"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(String::from_utf8(a).unwrap().contains(",40,"));
}

#[test]
fn config_problems_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(simest(&["run", "no-such-preset"]).status.code(), Some(2));
    let malformed = write_config(dir.path(), "name = \n[geometry");
    assert_eq!(simest(&["run", &malformed]).status.code(), Some(2));
    let short_pilots = write_config(dir.path(), &SMALL.replace("users = 2", "users = 2\ntau_p = 1"));
    assert_eq!(simest(&["run", &short_pilots]).status.code(), Some(2));
    let not_square = write_config(dir.path(), &SMALL.replace("atoms = 9", "atoms = 10"));
    assert_eq!(simest(&["run", &not_square]).status.code(), Some(2));
    let zero_trials = write_config(dir.path(), SMALL);
    assert_eq!(simest(&["run", &zero_trials, "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn dump_matrices_writes_re_im_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let target = dir.path().join("m");
    let out = simest(&["dump-matrices", &config, "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let p = fs::read_to_string(target.join("transmission_0.csv")).unwrap();
    // Psi M = ceil(9 / 2) * 2 = 10 rows of 9 complex entries.
    assert_eq!(p.lines().count(), 10);
    assert!(p.lines().all(|l| l.split(',').count() == 18));
    let r = fs::read_to_string(target.join("correlation.csv")).unwrap();
    assert!(r.lines().next().unwrap().starts_with("1.0,0.0,"));
}
