use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flate2::write::GzEncoder;
use flate2::Compression;

fn data_dir() -> PathBuf {
    std::env::var_os("DPRUNE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn dprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dprune"))
        .args(args)
        .env("DPRUNE_DATA_DIR", data_dir())
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 4] = ["--train-limit", "500", "--test-limit", "200"];

fn train_small(dir: &Path) -> PathBuf {
    let model = dir.join("m.bin");
    let mut args = vec!["train", "--fc", "20", "--epochs", "1", "--out", model.to_str().unwrap()];
    args.extend(SMALL);
    let o = dprune(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    model
}

#[test]
fn help_documents_subcommands_and_flags() {
    let o = dprune(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in ["train", "eval", "prune", "sweep-fc", "sweep-angle", "fetch-data", "--config", "--data-dir"] {
        assert!(text.contains(sub), "missing {sub} in help");
    }
    let text = stdout(&dprune(&["prune", "--help"]));
    for flag in ["--model", "--angle", "--report", "--pattern-limit", "--detail", "--out"] {
        assert!(text.contains(flag), "missing {flag} in prune help");
    }
}

#[test]
fn usage_errors_exit_2_runtime_errors_exit_1() {
    assert_eq!(dprune(&["bogus"]).status.code(), Some(2));
    assert_eq!(dprune(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(dprune(&["prune", "--model", "x.bin"]).status.code(), Some(2));
    let o = dprune(&["eval", "--model", "/nonexistent/model.bin"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn trained_model_loads_and_prunes() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path());
    let mut args = vec!["eval", "--model", model.to_str().unwrap()];
    args.extend(SMALL);
    let o = dprune(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("hidden size 20"));

    let report = dir.path().join("r.csv");
    for angle in ["40", "15"] {
        let mut args = vec!["prune", "--model", model.to_str().unwrap(), "--angle", angle];
        args.extend(["--report", report.to_str().unwrap()]);
        args.extend(SMALL);
        let o = dprune(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("run_id,angle_deg,"));
    assert!(lines[1].starts_with("m,40,20,"));
    assert!(lines.iter().all(|l| l.split(',').count() == 11));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# desk run\nepochs = 2\ntrain-limit = 300\ntest-limit = 100\nseed = 4\n").unwrap();
    let csv = dir.path().join("runs.csv");
    let o = dprune(&[
        "sweep-fc",
        "--config",
        cfg.to_str().unwrap(),
        "--sizes",
        "20",
        "--repeats",
        "1",
        "--epochs",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], ["fc20-s4", "20", "4", "1"]);
    assert_eq!(row[7], "300");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn data_dir_falls_back_to_env() {
    let o = Command::new(env!("CARGO_BIN_EXE_dprune"))
        .args(["train", "--fc", "20", "--epochs", "0", "--train-limit", "100", "--test-limit", "50"])
        .env("DPRUNE_DATA_DIR", "/nonexistent/mnist")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/mnist"));
}

#[test]
fn fetch_data_from_directory_checks_sizes() {
    let src = tempfile::tempdir().unwrap();
    let names = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];
    for name in names {
        let raw = std::fs::read(data_dir().join(name)).unwrap();
        let mut gz = GzEncoder::new(Vec::new(), Compression::fast());
        gz.write_all(&raw).unwrap();
        std::fs::write(src.path().join(format!("{name}.gz")), gz.finish().unwrap()).unwrap();
    }
    let dest = tempfile::tempdir().unwrap();
    let o = dprune(&["fetch-data", "--source", src.path().to_str().unwrap(), "--data-dir", dest.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in names {
        assert_eq!(
            std::fs::read(dest.path().join(name)).unwrap(),
            std::fs::read(data_dir().join(name)).unwrap()
        );
    }

    let label_gz = src.path().join("t10k-labels-idx1-ubyte.gz");
    std::fs::remove_file(&label_gz).unwrap();
    std::fs::write(src.path().join("t10k-labels-idx1-ubyte"), [0u8; 100]).unwrap();
    let dest = tempfile::tempdir().unwrap();
    let o = dprune(&["fetch-data", "--source", src.path().to_str().unwrap(), "--data-dir", dest.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected 10008 bytes"));
}
