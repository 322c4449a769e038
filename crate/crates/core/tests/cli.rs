mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use alexbench::data::{dataset_dir, image_file_name, label_file_name, DatasetId, RawDataset, Split};
use alexbench::data::idx::{write_idx_images, write_idx_labels};
use common::synthetic_dataset;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_alexbench"));
    cmd.env_remove("ALEXBENCH_DATA_DIR").env("RUST_LOG", "warn");
    cmd
}

fn write_split(dir: &Path, split: &RawDataset, which: Split) {
    fs::write(dir.join(image_file_name(which)), write_idx_images(&split.images)).unwrap();
    fs::write(dir.join(label_file_name(which)), write_idx_labels(&split.labels)).unwrap();
}

/// Data root holding a small synthetic benchmark in IDX form.
fn data_root() -> tempfile::TempDir {
    let root = tempfile::tempdir().unwrap();
    let dir = dataset_dir(root.path(), DatasetId::Mnist);
    fs::create_dir_all(&dir).unwrap();
    let data = synthetic_dataset(8, 3, 11);
    write_split(&dir, &data.train, Split::Train);
    write_split(&dir, &data.test, Split::Test);
    root
}

fn run_args(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.args(["run", "--arch", "dense", "--q", "1", "--p", "2", "--reps", "1", "--set", "epochs=2"])
        .arg("--data-dir")
        .arg(data)
        .arg("--out-dir")
        .arg(out)
        .args(extra);
    cmd.output().unwrap()
}

fn ppm_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    files.sort();
    files
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("usage"));
}

#[test]
fn help_exits_zero() {
    let out = bin().args(["run", "--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--strategy", "--q", "--p", "--seed", "--heatmaps", "--out-dir"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn bad_values_exit_two() {
    let root = data_root();
    let out_dir = tempfile::tempdir().unwrap();
    for extra in [&["--q", "0"][..], &["--strategy", "nope"], &["--bogus"], &["--config", "/no/such/file"]] {
        let out = run_args(root.path(), out_dir.path(), extra);
        assert_eq!(out.status.code(), Some(2), "{extra:?}");
    }
}

#[test]
fn run_writes_reports_models_and_heatmaps() {
    let root = data_root();
    let a = tempfile::tempdir().unwrap();
    let out = run_args(root.path(), a.path(), &["--strategy", "all", "--heatmaps", "1", "--sequential"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report = fs::read_to_string(a.path().join("report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = report
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("repetition"))
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 5 * 3);
    let seed_rows: Vec<&Vec<&str>> = rows.iter().filter(|r| r[1] == "0").collect();
    assert_eq!(seed_rows.len(), 5);
    assert!(seed_rows.iter().all(|r| r[3] == "10" && r[4] == seed_rows[0][4]));
    assert!(a.path().join("curves.csv").is_file());
    assert!(a.path().join("diagnostics.csv").is_file());
    for s in ["rs", "us-p", "us-m", "dw", "alex"] {
        assert!(a.path().join("models").join(format!("{s}.model")).is_file());
        assert_eq!(ppm_files(&a.path().join("heatmaps").join(s)).len(), 10, "{s}");
    }

    // Same seed, same bytes.
    let b = tempfile::tempdir().unwrap();
    let out = run_args(root.path(), b.path(), &["--strategy", "all", "--heatmaps", "1"]);
    assert!(out.status.success());
    assert_eq!(report, fs::read_to_string(b.path().join("report.csv")).unwrap());
    let first = ppm_files(&a.path().join("heatmaps/alex"));
    let second = ppm_files(&b.path().join("heatmaps/alex"));
    for (x, y) in first.iter().zip(&second) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }

    // Export and render from the saved artefacts.
    let curves = a.path().join("again.csv");
    let out = bin()
        .arg("export")
        .arg("--report")
        .arg(a.path().join("report.csv"))
        .arg("--out")
        .arg(&curves)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&curves).unwrap(), fs::read(a.path().join("curves.csv")).unwrap());

    let rendered = a.path().join("render");
    let out = bin()
        .arg("render")
        .arg("--model")
        .arg(a.path().join("models/rs.model"))
        .arg("--data-dir")
        .arg(root.path())
        .arg("--out-dir")
        .arg(&rendered)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(ppm_files(&rendered).len(), 10);
}

#[test]
fn data_dir_from_environment() {
    let root = data_root();
    let out_dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("ALEXBENCH_DATA_DIR", root.path())
        .args(["run", "--strategy", "rs", "--arch", "dense", "--q", "1", "--p", "0", "--reps", "1"])
        .arg("--out-dir")
        .arg(out_dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.path().join("report.csv").is_file());
}

#[test]
fn missing_data_is_a_runtime_failure() {
    let empty = tempfile::tempdir().unwrap();
    let out = run_args(empty.path(), empty.path(), &["--strategy", "rs"]);
    assert_eq!(out.status.code(), Some(1));
}
