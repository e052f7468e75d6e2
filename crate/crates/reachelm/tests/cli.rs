//! End-to-end checks of the `reachelm` binary: the documented exit codes
//! (0 ok, 2 I/O, 3 solver, 64 usage, 65 data), deterministic artifacts,
//! and the report formats scripts depend on.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use reachelm::cli::{ModelFile, ModelMeta, TrainMethod, BOXES_HEADER, DATASET_HEADER};
use reachelm::{Activation, ShallowNet};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reachelm"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "expected exit {code}, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn porcelain_value(stdout: &[u8], key: &str) -> f64 {
    let text = std::str::from_utf8(stdout).unwrap();
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}=` line in:\n{text}"));
    line.split_once('=').unwrap().1.parse().unwrap()
}

fn gen_dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("data_{n}_{seed}.csv"));
    let out = run(&[
        "gen",
        "--zone",
        "normal",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    path
}

fn read_boxes(path: &Path) -> Vec<[f64; 4]> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(BOXES_HEADER));
    lines
        .map(|l| {
            let vals: Vec<f64> = l.split(',').map(|f| f.parse().unwrap()).collect();
            [vals[0], vals[1], vals[2], vals[3]]
        })
        .collect()
}

#[test]
fn help_and_version_exit_zero() {
    assert_exit(&run(&["--help"]), 0);
    assert_exit(&run(&["--version"]), 0);
    assert_exit(&run(&["train", "--help"]), 0);
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("d.csv");

    // Unknown zone name.
    let out = run(&[
        "gen",
        "--zone",
        "nowhere",
        "--n",
        "5",
        "-o",
        out_csv.to_str().unwrap(),
    ]);
    assert_exit(&out, 64);

    // Unknown flag and missing required argument.
    assert_exit(&run(&["gen", "--bogus"]), 64);
    assert_exit(&run(&["train"]), 64);

    // Value that parses but is rejected by validation.
    let data = gen_dataset(dir.path(), 6, 0);
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--method",
        "elm",
        "--delta",
        "-0.5",
        "-o",
        dir.path().join("m.model").to_str().unwrap(),
    ]);
    assert_exit(&out, 64);
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_dir").join("d.csv");
    let out = run(&["gen", "--zone", "normal", "--n", "5", "-o", missing.to_str().unwrap()]);
    assert_exit(&out, 2);

    let out = run(&[
        "train",
        "--data",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--method",
        "elm",
        "-o",
        dir.path().join("m.model").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn gen_writes_expected_csv_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_dataset(dir.path(), 100, 7);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 101, "header plus one row per sample");
    assert_eq!(text.lines().next(), Some(DATASET_HEADER));

    let b = dir.path().join("again.csv");
    let out = run(&[
        "gen", "--zone", "normal", "--n", "100", "--seed", "7", "-o",
        b.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn malformed_dataset_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.model").to_str().unwrap().to_owned();

    let bad_field = dir.path().join("bad.csv");
    fs::write(&bad_field, format!("{DATASET_HEADER}\n0.1,0.2,oops,0.4\n")).unwrap();
    let out = run(&["train", "--data", bad_field.to_str().unwrap(), "--method", "elm", "-o", &model]);
    assert_exit(&out, 65);

    let bad_header = dir.path().join("hdr.csv");
    fs::write(&bad_header, "a,b,c,d\n0.1,0.2,0.3,0.4\n").unwrap();
    let out = run(&["train", "--data", bad_header.to_str().unwrap(), "--method", "elm", "-o", &model]);
    assert_exit(&out, 65);
}

#[test]
fn train_porcelain_is_parseable_and_model_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 12, 5);
    let model = dir.path().join("elm.model");
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--method",
        "elm",
        "--hidden",
        "4",
        "--seed",
        "11",
        "--porcelain",
        "-o",
        model.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    // Every porcelain line is a bare key=value pair.
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    for line in text.lines() {
        let (key, value) = line.split_once('=').expect("porcelain line has `=`");
        assert!(!key.is_empty() && key.chars().all(|c| c.is_ascii_lowercase() || c == '_'));
        assert!(!value.is_empty());
    }
    assert!(porcelain_value(&out.stdout, "radius") > 0.0);
    assert!(porcelain_value(&out.stdout, "mse") >= 0.0);

    // save -> load -> save reproduces the file byte for byte.
    let loaded = ModelFile::load(&model).unwrap();
    assert_eq!(loaded.meta.method.to_string(), "elm");
    assert_eq!(loaded.meta.seed, 11);
    let copy = dir.path().join("copy.model");
    loaded.save(&copy).unwrap();
    assert_eq!(fs::read(&model).unwrap(), fs::read(&copy).unwrap());
}

#[test]
fn robust_with_zero_delta_matches_elm_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 12, 3);
    let train = |method: &str, delta: &str, model: &str| {
        let out = run(&[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--method",
            method,
            "--delta",
            delta,
            "--hidden",
            "4",
            "--seed",
            "2",
            "--porcelain",
            "-o",
            dir.path().join(model).to_str().unwrap(),
        ]);
        assert_exit(&out, 0);
        porcelain_value(&out.stdout, "mse")
    };

    let mse_elm = train("elm", "0", "e.model");
    let mse_robust = train("robust", "0", "r.model");
    let rel = (mse_elm - mse_robust).abs() / mse_elm.max(1e-300);
    assert!(
        rel <= 1e-3,
        "delta = 0 should reduce robust to least squares: elm {mse_elm:.6e}, robust {mse_robust:.6e}"
    );
}

#[test]
fn robust_gamma_bounds_nominal_residual() {
    let dir = tempfile::tempdir().unwrap();
    let n = 10;
    let data = gen_dataset(dir.path(), n, 2);
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--method",
        "robust",
        "--delta",
        "0.01",
        "--hidden",
        "3",
        "--seed",
        "4",
        "--porcelain",
        "-o",
        dir.path().join("r.model").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let mse = porcelain_value(&out.stdout, "mse");
    let gamma = porcelain_value(&out.stdout, "gamma");
    // gamma certifies the worst case over the uncertainty box, which is at
    // least the nominal squared residual sum = mse * N * n2.
    let nominal = mse * (n as f64) * 2.0;
    assert!(
        gamma >= nominal - 1e-9 * (1.0 + nominal),
        "gamma {gamma:.6e} below nominal residual sum {nominal:.6e}"
    );
}

#[test]
fn reach_boxes_shrink_to_points_and_nest_by_delta() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 10, 1);
    let model = dir.path().join("m.model");
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--method",
        "elm",
        "--hidden",
        "4",
        "--seed",
        "0",
        "-o",
        model.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let reach = |delta: &str, name: &str, svg: Option<&str>| -> (PathBuf, Output) {
        let boxes = dir.path().join(name);
        let mut args = vec![
            "reach".to_owned(),
            "--model".to_owned(),
            model.to_str().unwrap().to_owned(),
            "--data".to_owned(),
            data.to_str().unwrap().to_owned(),
            "--delta".to_owned(),
            delta.to_owned(),
            "--porcelain".to_owned(),
            "-o".to_owned(),
            boxes.to_str().unwrap().to_owned(),
        ];
        if let Some(s) = svg {
            args.push("--svg".to_owned());
            args.push(dir.path().join(s).to_str().unwrap().to_owned());
        }
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(&refs);
        assert_exit(&out, 0);
        (boxes, out)
    };

    let (zero, out0) = reach("0", "zero.csv", None);
    for b in read_boxes(&zero) {
        assert_eq!(b[2], 0.0, "x radius must vanish at delta 0");
        assert_eq!(b[3], 0.0, "y radius must vanish at delta 0");
    }
    assert_eq!(porcelain_value(&out0.stdout, "radius"), 0.0);

    let (small, out_small) = reach("0.01", "small.csv", Some("fig.svg"));
    let (large, out_large) = reach("0.02", "large.csv", None);
    let svg_text = fs::read_to_string(dir.path().join("fig.svg")).unwrap();
    assert!(svg_text.starts_with("<svg"), "figure should be an SVG document");

    for (a, b) in read_boxes(&small).iter().zip(read_boxes(&large).iter()) {
        for k in 0..2 {
            let (ca, ra) = (a[k], a[k + 2]);
            let (cb, rb) = (b[k], b[k + 2]);
            assert!(
                cb - rb <= ca - ra + 1e-12 && ca + ra <= cb + rb + 1e-12,
                "box {a:?} not nested in {b:?}"
            );
        }
    }
    assert!(
        porcelain_value(&out_small.stdout, "radius") <= porcelain_value(&out_large.stdout, "radius")
    );
}

#[test]
fn mismatched_model_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 6, 0);

    // A model expecting three inputs can never consume the two-column data.
    let net = ShallowNet::new(
        DMatrix::from_fn(4, 3, |i, j| 0.1 * (i as f64) - 0.2 * (j as f64)),
        DVector::zeros(4),
        DMatrix::from_element(2, 4, 0.25),
        DVector::zeros(2),
        Activation::Sigmoid,
        Activation::Identity,
    )
    .unwrap();
    let wide = dir.path().join("wide.model");
    ModelFile {
        net,
        meta: ModelMeta {
            seed: 0,
            method: TrainMethod::Elm,
            delta: 0.0,
            gamma: None,
        },
    }
    .save(&wide)
    .unwrap();

    let boxes = dir.path().join("b.csv");
    let out = run(&[
        "reach",
        "--model",
        wide.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "-o",
        boxes.to_str().unwrap(),
    ]);
    assert_exit(&out, 65);
}

#[test]
fn corrupt_or_future_model_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 6, 0);
    let model = dir.path().join("m.model");
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--method",
        "elm",
        "--hidden",
        "3",
        "-o",
        model.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let boxes = dir.path().join("b.csv").to_str().unwrap().to_owned();

    // Bump the version line on an otherwise valid file.
    let text = fs::read_to_string(&model).unwrap();
    let future = dir.path().join("future.model");
    fs::write(&future, text.replacen("reachelm-model 1", "reachelm-model 2", 1)).unwrap();
    let out = run(&[
        "reach", "--model", future.to_str().unwrap(), "--data", data.to_str().unwrap(), "-o", &boxes,
    ]);
    assert_exit(&out, 65);

    let garbage = dir.path().join("garbage.model");
    fs::write(&garbage, "not a model at all\n").unwrap();
    let out = run(&[
        "reach", "--model", garbage.to_str().unwrap(), "--data", data.to_str().unwrap(), "-o", &boxes,
    ]);
    assert_exit(&out, 65);
}

#[test]
fn bench_prints_one_row_per_method() {
    let out = run(&[
        "bench", "robot-arm", "--n", "8", "--seed", "1", "--delta", "0.01", "--hidden", "3",
    ]);
    assert_exit(&out, 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert!(rows[0].starts_with("method"), "header first: {text}");
    let elm: Vec<&str> = rows.iter().filter(|l| l.starts_with("elm")).cloned().collect();
    let robust: Vec<&str> = rows.iter().filter(|l| l.starts_with("robust")).cloned().collect();
    assert_eq!(elm.len(), 1, "exactly one elm row:\n{text}");
    assert_eq!(robust.len(), 1, "exactly one robust row:\n{text}");
    // elm carries no certificate, robust does.
    assert!(elm[0].split_whitespace().last() == Some("-"));
    assert!(robust[0].split_whitespace().last().unwrap().parse::<f64>().is_ok());
}
