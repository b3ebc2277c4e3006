use std::path::Path;
use std::process::{Command, Output};

fn mct(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mct"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("MCT_SEED")
        .output()
        .expect("binary runs")
}

const TINY: &[&str] = &["--grid", "20", "--t-start", "0.1", "--t-step", "0.1"];

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        "[ensemble]\nhidden = [30, 20]\nfeatures = [4, 2]\n[train]\nepochs = 10\n[clustering]\nk = 2\n",
    )
    .unwrap();
    path
}

#[test]
fn full_chain_prints_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let o = mct(&run, &[&["generate", "--config", cfg][..], TINY].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // Later stages read the run's config.toml.
    for stage in ["split", "train", "predict", "weights"] {
        let o = mct(&run, &[stage]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
        if stage == "predict" {
            let text = String::from_utf8(o.stdout).unwrap();
            assert!(text.contains("T' = "), "{text}");
            assert!(text.contains("analytic MCT = 3.1416"), "{text}");
            assert!(text.contains("empirical MCT"), "{text}");
        }
    }
    assert!(run.join("weights_map.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(mct(&run, &["generate", "--t-step", "0"]).status.code(), Some(1));
    assert_eq!(mct(&run, &["generate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mct(&run, &["weights", "--threshold", "1.01"]).status.code(), Some(1));
    assert_eq!(mct(&run, &["predict"]).status.code(), Some(2));
    assert_eq!(mct(&run, &["--help"]).status.code(), Some(0));
}

#[test]
fn seed_env_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = Command::new(env!("CARGO_BIN_EXE_mct"))
        .args(["--out", a.to_str().unwrap(), "generate"])
        .args(TINY)
        .env("MCT_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(mct(&b, &[&["--seed", "99", "generate"][..], TINY].concat())
        .status
        .success());
    for run in [&a, &b] {
        let text = std::fs::read_to_string(run.join("config.toml")).unwrap();
        assert!(text.contains("master_seed = 99"), "{text}");
    }
    assert_eq!(
        std::fs::read(a.join("dataset.mctl")).unwrap(),
        std::fs::read(b.join("dataset.mctl")).unwrap()
    );
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mct(dir.path(), &["oracle-check", "--samples", "100"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
}
