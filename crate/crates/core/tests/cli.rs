use std::path::Path;

use h4d::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use h4d::pipeline::content_hash;

fn h4d(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("h4d").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = h4d(args);
    assert_eq!(code, EXIT_OK, "{args:?}: {err}");
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn kv(out: &str, key: &str) -> f64 {
    out.split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .parse()
        .unwrap()
}

fn hash(path: &str) -> String {
    content_hash(&std::fs::read(path).unwrap())
}

/// gen-data → fit-lmm → train 1 → train 2 on the micro preset.
fn micro_run(dir: &Path) {
    let data = p(dir, "data");
    ok(&["gen-data", "--seed", "7", "--out", &data, "--set", "preset=micro", "--set", "n_train=4", "--set", "n_test=2"]);
    ok(&["fit-lmm", "--data", &data, "--q", "0.9", "--out", &p(dir, "lmm.hta")]);
    let common = ["--seed", "1", "--set", "preset=micro", "--set", "iterations=20"];
    let mut a = vec!["train", "--stage", "1", "--data", &data, "--basis", "", "--out", ""];
    let (lmm, ck1, ck2) = (p(dir, "lmm.hta"), p(dir, "ck1.hta"), p(dir, "ck2.hta"));
    a[6] = &lmm;
    a[8] = &ck1;
    a.extend(common);
    ok(&a);
    ok(&["train", "--stage", "2", "--data", &data, "--init", &ck1, "--out", &ck2, "--seed", "1", "--set", "preset=micro", "--set", "iterations=20", "--threads", "2"]);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(h4d(&[]).0, EXIT_USAGE);
    assert_eq!(h4d(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(h4d(&["gen-data", "--out", "x"]).0, EXIT_USAGE, "seed is mandatory");
    assert_eq!(h4d(&["train", "--stage", "3", "--data", "d", "--out", "o", "--seed", "1"]).0, EXIT_USAGE);
    let (code, out, _) = h4d(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("gen-data") && out.contains("export-obj"));
}

#[test]
fn config_keys_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = h4d(&["gen-data", "--seed", "1", "--out", &p(dir.path(), "d"), "--set", "bogus=1"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("bogus"));
    let cfg = p(dir.path(), "gen.cfg");
    std::fs::write(&cfg, "# micro corpus\npreset = micro\nn_train=3\nn_test=1\n").unwrap();
    let out = ok(&["gen-data", "--seed", "1", "--out", &p(dir.path(), "d"), "--config", &cfg, "--set", "n_test=2"]);
    assert_eq!((kv(&out, "train"), kv(&out, "test"), kv(&out, "verts")), (3.0, 2.0, 24.0));
    let meta = std::fs::read_to_string(dir.path().join("d/run.meta")).unwrap();
    assert!(meta.contains("config.seed=1\n") && meta.contains("config.n_test=2\n") && meta.contains("config.preset=micro\n"));
    std::fs::write(&cfg, "n_train\n").unwrap();
    assert_eq!(h4d(&["gen-data", "--seed", "1", "--out", &p(dir.path(), "e"), "--config", &cfg]).0, EXIT_USAGE);
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = h4d(&["fit-lmm", "--data", &p(dir.path(), "missing"), "--out", &p(dir.path(), "b.hta")]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.starts_with("error="));
    std::fs::write(dir.path().join("bad.hta"), b"HTA1\x05").unwrap();
    let bad = p(dir.path(), "bad.hta");
    assert_eq!(h4d(&["eval", "--pred", &bad, "--gt", &bad]).0, EXIT_FAILURE);
}

#[test]
fn end_to_end_micro_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = p(d, "data");
    let out = ok(&["gen-data", "--seed", "7", "--out", &data, "--set", "preset=micro", "--set", "n_train=6", "--set", "n_test=2"]);
    assert!(out.starts_with("event=gen-data"));
    let out = ok(&["fit-lmm", "--data", &data, "--q", "0.9", "--out", &p(d, "lmm.hta")]);
    assert!(kv(&out, "q_global") > 0.9 && kv(&out, "q_body") > 0.9);
    assert!(Path::new(&p(d, "lmm.hta.run.meta")).exists());
    assert_eq!(h4d(&["train", "--stage", "2", "--data", &data, "--basis", &p(d, "lmm.hta"), "--out", &p(d, "x.hta"), "--seed", "1"]).0, EXIT_USAGE);

    let ck = p(d, "ck.hta");
    let out = ok(&["train", "--stage", "1", "--data", &data, "--basis", &p(d, "lmm.hta"), "--out", &ck, "--seed", "1", "--set", "preset=micro", "--set", "iterations=5", "--set", "log_every=2"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("event=train ")).count(), 3);
    let before = hash(&ck);

    let (rec, gt) = (p(d, "rec.hta"), p(d, "gt.hta"));
    ok(&["reconstruct", "--ckpt", &ck, "--data", &data, "--seq", "test:0", "--out", &rec, "--truth", &gt, "--seed", "3"]);
    assert_eq!(hash(&ck), before, "inputs are not modified");
    let out = ok(&["eval", "--pred", &gt, "--gt", &gt, "--out", &p(d, "m.txt")]);
    for key in ["mpjpe_mm", "pa_mpjpe_mm", "pve_mm", "chamfer"] {
        assert_eq!(kv(&out, key), 0.0, "{key}");
    }
    assert_eq!(kv(&out, "iou"), 1.0);
    let out = ok(&["eval", "--pred", &rec, "--gt", &gt, "--set", "iou_resolution=16"]);
    assert!(kv(&out, "pve_mm") > 0.0 && kv(&out, "iou") < 1.0);

    let fit = ["--set", "iterations=5", "--set", "n_sample=32"];
    for (args, prefix) in [
        (vec!["complete", "--mode", "temporal", "--set", "observed=2"], "event=complete-temporal-metrics"),
        (vec!["complete", "--mode", "spatial", "--set", "phase=1.0"], "event=complete-spatial-metrics"),
        (vec!["predict", "--set", "observed=2"], "event=predict-metrics"),
    ] {
        let out_path = p(d, "fit.hta");
        let mut a = args.clone();
        a.extend(["--ckpt", &ck, "--data", &data, "--seq", "test:1", "--out", &out_path, "--seed", "4"]);
        a.extend(fit);
        let out = ok(&a);
        assert!(out.lines().any(|l| l.starts_with(prefix)), "{out}");
    }
    assert_eq!(h4d(&["complete", "--mode", "temporal", "--ckpt", &ck, "--data", &data, "--seq", "test:1", "--out", &p(d, "f.hta"), "--seed", "4", "--set", "loss=magic"]).0, EXIT_USAGE);
    let out = ok(&["retarget", "--ckpt", &ck, "--data", &data, "--identity", "test:0", "--motion", "train:1", "--out", &p(d, "rt.hta"), "--seed", "2"]);
    assert!(kv(&out, "mpjpe_to_motion_mm").is_finite());

    let objs = p(d, "objs");
    let out = ok(&["export-obj", "--input", &rec, "--out", &objs]);
    assert_eq!(kv(&out, "files"), 3.0);
    assert!(Path::new(&objs).join("frame_0002.obj").exists());
    assert!(Path::new(&objs).join("run.meta").exists());
}

#[test]
fn repeated_runs_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    micro_run(a.path());
    micro_run(b.path());
    for f in ["data/model.hta", "data/train.hta", "data/test.hta", "lmm.hta", "ck1.hta", "ck2.hta"] {
        assert_eq!(hash(&p(a.path(), f)), hash(&p(b.path(), f)), "{f}");
    }
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_h4d");
    let st = std::process::Command::new(bin).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_USAGE));
    let dir = tempfile::tempdir().unwrap();
    let st = std::process::Command::new(bin)
        .args(["gen-data", "--seed", "3", "--out", &p(dir.path(), "d"), "--set", "preset=micro", "--set", "n_train=2", "--set", "n_test=1"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&st.stdout).starts_with("event=gen-data"));
}
