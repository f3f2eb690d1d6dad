//! The `fedmd` binary: exit codes, reports and the networked mode.

mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use common::small_config;
use fedmd::experiments::{run_experiment, MetricsLog};

fn fedmd() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fedmd"));
    c.env_remove("FEDMD_OUTPUT_DIR");
    c
}

fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, parties: usize, rounds: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, small_config(parties, rounds, seed).to_toml_string().unwrap()).unwrap();
    path
}

#[test]
fn no_arguments_prints_usage() {
    let out = fedmd().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("Usage"));
    assert_eq!(fedmd().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(fedmd().arg("frobnicate").output().unwrap().status.code(), Some(2));
}

#[test]
fn gradcheck_succeeds() {
    let out = fedmd().args(["gradcheck", "--networks", "50"]).output().unwrap();
    let (stdout, _) = text(&out);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("networks: 50"));
    assert!(stdout.trim_end().ends_with("ok"));
}

#[test]
fn inspect_data_prints_shape_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.idx");
    let mut bytes = vec![0, 0, 8, 1, 0, 0, 0, 5];
    bytes.extend_from_slice(&[1, 0, 1, 2, 1]);
    std::fs::write(&labels, &bytes).unwrap();
    let out = fedmd().arg("inspect-data").arg(&labels).output().unwrap();
    let (stdout, _) = text(&out);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout.contains("shape: [5]"), "{stdout}");
    let hist: Vec<(usize, usize)> = stdout
        .lines()
        .skip_while(|l| !l.starts_with("label"))
        .skip(1)
        .map(|l| {
            let mut f = l.split_whitespace().map(|x| x.parse().unwrap());
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    assert_eq!(hist, vec![(0, 1), (1, 3), (2, 1)]);

    let images = dir.path().join("images.idx");
    std::fs::write(&images, [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 0, 255]).unwrap();
    let out = fedmd().arg("inspect-data").arg(&images).output().unwrap();
    assert!(text(&out).0.contains("shape: [1, 2, 2]"));

    // malformed input: runtime failure with a one-line categorised error
    let junk = dir.path().join("junk");
    std::fs::write(&junk, [1, 2, 3]).unwrap();
    let out = fedmd().arg("inspect-data").arg(&junk).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let (_, stderr) = text(&out);
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error[parse]: "), "{stderr}");
}

#[test]
fn run_prints_summary_and_honours_output_env() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 2, 1, 7);
    let out_dir = dir.path().join("results");
    let out = fedmd()
        .arg("run")
        .arg(&config)
        .arg("revisit_epochs=1")
        .env("FEDMD_OUTPUT_DIR", &out_dir)
        .output()
        .unwrap();
    let (stdout, stderr) = text(&out);
    assert_eq!(out.status.code(), Some(0), "{stderr}");
    assert!(stdout.starts_with("party  baseline"), "{stdout}");
    assert!(stdout.contains(" mean "));
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(MetricsLog::from_csv(&csv).unwrap().rows.len(), 4);
    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"revisit_epochs\": 1"));
}

#[test]
fn configuration_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 2, 1, 7);
    for (args, category) in [
        (vec!["subset_size=0"], "config"),
        (vec!["bogus_key=1"], "config"),
        (vec!["weights=[0.9, 0.9]"], "config"),
    ] {
        let out = fedmd().arg("run").arg(&config).args(&args).output().unwrap();
        let (_, stderr) = text(&out);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {stderr}");
        assert_eq!(stderr.lines().count(), 1);
        assert!(stderr.starts_with(&format!("error[{category}]: ")), "{stderr}");
    }
    let out = fedmd().args(["run", "/nonexistent/config.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.starts_with("error[file]: "));
}

#[test]
fn baseline_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 2, 3, 8);
    for kind in ["transfer", "pooled"] {
        let out = fedmd().args(["baseline", "--kind", kind]).arg(&config).output().unwrap();
        let (stdout, stderr) = text(&out);
        assert_eq!(out.status.code(), Some(0), "{stderr}");
        assert_eq!(stdout.lines().count(), 3, "{stdout}");
    }
}

#[test]
fn serve_and_join_match_in_process_run() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), 2, 2, 11);
    let out_dir = dir.path().join("served");
    let mut server = fedmd()
        .args(["serve", "127.0.0.1:0"])
        .arg(&config_path)
        .arg("--output")
        .arg(&out_dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdout = BufReader::new(server.stdout.take().unwrap());
    let mut first = String::new();
    stdout.read_line(&mut first).unwrap();
    let addr = first.trim().strip_prefix("listening on ").expect(&first).to_string();

    let joins: Vec<_> = (0..2)
        .map(|k| {
            fedmd()
                .args(["join", &addr, &k.to_string()])
                .arg(&config_path)
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    for j in joins {
        let out = j.wait_with_output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", text(&out).1);
    }
    let status = server.wait().unwrap();
    assert_eq!(status.code(), Some(0));

    let served = MetricsLog::from_csv(&std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap()).unwrap();
    let mut config = small_config(2, 2, 11);
    config.pooled = false;
    let local = run_experiment(&config).unwrap().log;
    assert!(served.same_outcome(&local));
}
