use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use longview::aligned::{parse_alignment_report, ALIGNMENT_REPORT};
use longview::cli::RUN_MANIFEST;
use longview::manifest::{load_cohort, save_cohort};
use longview_core::align::{warped_iou, AffineTransform, DEFAULT_EPS};
use longview_core::cohort::{Cohort, Split, SplitRule};

fn lv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longview")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file below `dir` except run manifests, by relative path.
fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".run.json") && p.file_name().unwrap() != RUN_MANIFEST {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn synth(out: &Path, patients: usize, exams: usize, seed: u64, scale: u32) -> Output {
    lv(&[
        "synth",
        "--out",
        s(out),
        "--patients",
        &patients.to_string(),
        "--exams-per-patient",
        &exams.to_string(),
        "--seed",
        &seed.to_string(),
        "--scale",
        &scale.to_string(),
    ])
}

#[test]
fn synth_writes_four_rasters_per_exam_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = synth(dir, 50, 3, 7, 20);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let cohort = load_cohort(&a, &SplitRule::default()).unwrap();
    assert_eq!(cohort.exam_count(), 150);
    assert_eq!(fs::read_dir(a.join("rasters")).unwrap().count(), 600);
    assert_eq!(files(&a), files(&b));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join(RUN_MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["n_patients"], 50);

    let empty = tmp.path().join("empty");
    assert_eq!(code(&synth(&empty, 0, 2, 1, 20)), 0);
    assert_eq!(load_cohort(&empty, &SplitRule::default()).unwrap().exam_count(), 0);
}

#[test]
fn usage_and_runtime_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&lv(&["synth", "--patients", "3"])), 2, "missing --out");
    assert_eq!(code(&lv(&["synth", "--out", s(tmp.path()), "--patients", "many"])), 2);
    assert_eq!(code(&lv(&["frobnicate"])), 2);
    assert_eq!(code(&lv(&["synth", "--out", s(tmp.path()), "--scale", "0"])), 2);
    let missing = tmp.path().join("nowhere");
    let out = lv(&["align", "--cohort", s(&missing), "--out", s(&tmp.path().join("al"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
    let threads = Command::new(env!("CARGO_BIN_EXE_longview"))
        .args(["synth", "--out", s(&tmp.path().join("t")), "--patients", "1"])
        .env("LV_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&threads), 2);
}

#[test]
fn align_reports_every_view_of_every_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let (cohort_dir, out) = (tmp.path().join("c"), tmp.path().join("al"));
    assert_eq!(code(&synth(&cohort_dir, 12, 3, 5, 20)), 0);
    let res = lv(&["align", "--cohort", s(&cohort_dir), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report = out.join(ALIGNMENT_REPORT);
    let rows = parse_alignment_report(&fs::read_to_string(&report).unwrap(), &report).unwrap();
    let cohort = load_cohort(&cohort_dir, &SplitRule::default()).unwrap();
    let pairs: Vec<_> = [Split::Train, Split::Val, Split::Test].into_iter().flat_map(|sp| cohort.pairs(sp)).collect();
    assert_eq!(rows.len(), 4 * pairs.len());
    assert!(out.join(RUN_MANIFEST).exists());

    // Registration beats leaving the prior where it is.
    let mut gains: Vec<f64> = rows
        .iter()
        .map(|r| {
            let p = pairs.iter().find(|p| p.id() == r.pair_id).unwrap();
            let identity = warped_iou(p.prior().image(r.view), p.current().image(r.view), &AffineTransform::IDENTITY, DEFAULT_EPS).unwrap();
            assert!(r.result.iou >= identity);
            r.result.iou - identity
        })
        .collect();
    gains.sort_by(f64::total_cmp);
    assert!(gains[gains.len() / 2] > 0.0, "median gain {}", gains[gains.len() / 2]);
}

#[test]
fn aligning_identical_exams_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    assert_eq!(code(&synth(&src, 6, 2, 9, 20)), 0);
    let cohort = load_cohort(&src, &SplitRule::default()).unwrap();
    let exams = cohort
        .patients()
        .iter()
        .flat_map(|p| {
            let first = p.exams[0].images.clone();
            p.exams.iter().map(move |e| longview_core::cohort::Exam { images: first.clone(), ..(**e).clone() })
        })
        .collect();
    let twin = Cohort::from_exams(exams, &SplitRule::default()).unwrap();
    let dir = tmp.path().join("twin");
    save_cohort(&twin, &dir).unwrap();
    let out = tmp.path().join("al");
    assert_eq!(code(&lv(&["align", "--cohort", s(&dir), "--out", s(&out)])), 0);
    let report = out.join(ALIGNMENT_REPORT);
    let rows = parse_alignment_report(&fs::read_to_string(&report).unwrap(), &report).unwrap();
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().all(|r| r.result.iou == 1.0), "{rows:?}");
}

fn train(cohort: &Path, out: &Path, variant: &str, members: usize, epochs: usize) -> Output {
    lv(&[
        "train",
        "--cohort",
        s(cohort),
        "--variant",
        variant,
        "--members",
        &members.to_string(),
        "--epochs",
        &epochs.to_string(),
        "--pretrain-epochs",
        "1",
        "--B",
        "3",
        "--seed",
        "4",
        "--out",
        s(out),
    ])
}

#[test]
fn train_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cohort = tmp.path().join("c");
    assert_eq!(code(&synth(&cohort, 40, 2, 3, 40)), 0);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = train(&cohort, dir, "global-compare", 5, 2);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for i in 0..5 {
        assert!(a.join(format!("member-{i}.lvck")).exists());
        let log = fs::read_to_string(a.join(format!("member-{i}.metrics.csv"))).unwrap();
        assert_eq!(log.lines().count(), 1 + 2, "{log}");
    }
    assert_eq!(files(&a), files(&b), "reruns must match");
    assert_eq!(files(&a).keys().filter(|p| p.extension().is_some_and(|e| e == "lvck")).count(), 5);

    // Five members: every cell has mean, std and ensemble.
    let report = tmp.path().join("five.csv");
    let glob = format!("{}/member-*.lvck", s(&a));
    let out = lv(&["evaluate", "--cohort", s(&cohort), "--checkpoints", &glob, "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = longview::report::read_report(&report).unwrap();
    assert_eq!(rows.len(), 12);

    // One member: zero spread.
    let one = tmp.path().join("one.csv");
    let out = lv(&["evaluate", "--cohort", s(&cohort), "--checkpoints", s(&a.join("member-0.lvck")), "--out", s(&one)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = longview::report::read_report(&one).unwrap();
    for r in rows.iter().filter(|r| r.statistic == longview_core::eval::Statistic::Std) {
        assert!(r.value.is_none() || r.value == Some(0.0), "{r:?}");
    }
    assert!(tmp.path().join("one.run.json").exists());

    // Checkpoints of two variants cannot be ensembled.
    let single = tmp.path().join("single");
    assert_eq!(code(&train(&cohort, &single, "single-baseline", 1, 1)), 0);
    fs::copy(single.join("member-0.lvck"), a.join("member-9.lvck")).unwrap();
    let out = lv(&["evaluate", "--cohort", s(&cohort), "--checkpoints", &glob, "--out", s(&tmp.path().join("mixed.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("disagree"), "{}", String::from_utf8_lossy(&out.stderr));

    // align-local-compare needs the aligned pairs.
    assert_eq!(code(&train(&cohort, &tmp.path().join("x"), "align-local-compare", 1, 1)), 2);
}
