#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn lulc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lulc"))
        .args(args)
        .env_remove("LULC_OUT_DIR")
        .output()
        .expect("spawn lulc")
}

/// Runs `lulc` and panics with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> Output {
    let out = lulc(args);
    assert!(
        out.status.success(),
        "lulc {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn macro_f1(metrics: &Path) -> f64 {
    read_json(metrics)["macro"]["f1"]["mean"].as_f64().unwrap()
}

pub const TEACHER_CLASSES: [&str; 7] = ["Bare Ground", "Building", "Crop", "Grass", "Trees", "Water", "Negative"];
pub const STUDENT_CLASSES: [&str; 6] = ["Bare Ground", "Built-up", "Crop", "Grass", "Trees", "Water"];

/// Desk-scale schedule used by the synthetic end-to-end runs.
pub const DESK_CONFIG: &str = "\
[model]
radius = 1
hidden = [32]

[train]
learning_rate = 0.2
batch_size = 8
min_epochs = 10
max_epochs = 30
patch_size = 32
steps_per_epoch = 8
rounds = 1
patience = 5
";

/// Scheme and remap files for a six-class teacher (plus Negative) and the
/// matching six-class student.
pub struct Schemes {
    pub teacher: PathBuf,
    pub student: PathBuf,
    pub remap: PathBuf,
    pub desk: PathBuf,
}

pub fn write_schemes(dir: &Path) -> Schemes {
    std::fs::create_dir_all(dir).unwrap();
    let teacher = dir.join("teacher6.json");
    let student = dir.join("student6.json");
    let remap = dir.join("teacher6-student6.json");
    let desk = dir.join("desk.toml");
    write(
        &teacher,
        &json!({"name": "teacher6", "source": "teacher", "classes": TEACHER_CLASSES}).to_string(),
    );
    write(
        &student,
        &json!({"name": "student6", "source": "student", "classes": STUDENT_CLASSES}).to_string(),
    );
    let mut map = serde_json::Map::new();
    for (t, st) in TEACHER_CLASSES.iter().zip(STUDENT_CLASSES.iter().chain(["Unlabeled"].iter())) {
        map.insert((*t).into(), Value::from(*st));
    }
    write(
        &remap,
        &json!({"source": "teacher6", "target": "student6", "map": map}).to_string(),
    );
    write(&desk, DESK_CONFIG);
    Schemes {
        teacher,
        student,
        remap,
        desk,
    }
}

pub struct E2e {
    pub dir: PathBuf,
    pub teacher_f1: f64,
    pub fused_f1: f64,
    pub manual_f1: f64,
}

/// The full synthetic pipeline through the command line: synth, rasterize
/// (with negatives), split, train teacher, predict, evaluate, distill, fuse,
/// train fused and manual-only students, evaluate both, compare.
pub fn run_e2e(dir: &Path, seed: u64, threads: usize) -> E2e {
    let sc = write_schemes(&dir.join("schemes"));
    let seed = seed.to_string();
    let threads = threads.to_string();
    let p = |name: &str| dir.join(name);
    let common = |args: &mut Vec<String>| {
        args.extend(["--seed".into(), seed.clone(), "--threads".into(), threads.clone()]);
    };
    let run = |mut args: Vec<String>| {
        common(&mut args);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs)
    };
    let v = |items: &[&str]| items.iter().map(|x| x.to_string()).collect::<Vec<_>>();

    let scene = p("scene");
    run(v(&[
        "synth", "--scheme", s(&sc.teacher), "--size", "256", "--res", "1", "--factor", "4",
        "--bands", "4", "--separability", "0.9", "--out-dir", s(&scene),
    ]));
    let hi_truth = scene.join("hi_truth.tif");
    let lo_truth = scene.join("lo_truth.tif");
    let labels = scene.join("labels.geojson");

    run(v(&[
        "rasterize", "--labels", s(&labels), "--like", s(&hi_truth), "--scheme", s(&sc.teacher),
        "--negatives", "--out", s(&p("teacher_mask.tif")),
    ]));
    run(v(&[
        "rasterize", "--labels", s(&labels), "--like", s(&hi_truth), "--scheme", s(&sc.teacher),
        "--out", s(&p("manual_hi.tif")),
    ]));
    run(v(&["split", "--like", s(&hi_truth), "--fraction", "0.7", "--out-dir", s(&p("split_hi"))]));
    run(v(&[
        "train", "--config", s(&sc.desk), "--image", s(&scene.join("hi_image.tif")),
        "--mask", s(&p("teacher_mask.tif")), "--extent", s(&p("split_hi/train_extent.json")),
        "--scheme", s(&sc.teacher), "--out-dir", s(&p("teacher")),
    ]));
    run(v(&[
        "predict", "--model", s(&p("teacher/model.lcm")), "--image", s(&scene.join("hi_image.tif")),
        "--probs", s(&p("teacher_probs.tif")), "--map", s(&p("teacher_map.tif")),
    ]));
    run(v(&[
        "evaluate", "--pred", s(&p("teacher_map.tif")), "--truth", s(&hi_truth), "--scheme", s(&sc.teacher),
        "--set", "test", "--extent", s(&p("split_hi/test_extent.json")), "--out-dir", s(&p("eval_teacher")),
    ]));

    for (src, out) in [("teacher_map.tif", "distilled.tif"), ("manual_hi.tif", "manual_lo.tif")] {
        run(v(&[
            "distill", "--teacher", s(&p(src)), "--teacher-scheme", s(&sc.teacher),
            "--student-scheme", s(&sc.student), "--remap", s(&sc.remap), "--like", s(&lo_truth),
            "--factor", "4", "--min-coverage", "0.5", "--out", s(&p(out)),
        ]));
    }
    write(
        &p("fuse.json"),
        &json!({"sources": [
            {"path": "manual_lo.tif", "provenance": "manual"},
            {"path": "distilled.tif", "provenance": "pseudo"}
        ]})
        .to_string(),
    );
    run(v(&["fuse", "--manifest", s(&p("fuse.json")), "--out", s(&p("fused.tif"))]));
    run(v(&["split", "--like", s(&lo_truth), "--fraction", "0.7", "--out-dir", s(&p("split_lo"))]));

    for (mask, name) in [("fused.tif", "student_fused"), ("manual_lo.tif", "student_manual")] {
        let out = p(name);
        run(v(&[
            "train", "--config", s(&sc.desk), "--image", s(&scene.join("lo_image.tif")), "--mask", s(&p(mask)),
            "--extent", s(&p("split_lo/train_extent.json")), "--scheme", s(&sc.student),
            "--patch-size", "16", "--out-dir", s(&out),
        ]));
        run(v(&[
            "predict", "--model", s(&out.join("model.lcm")), "--image", s(&scene.join("lo_image.tif")),
            "--out-dir", s(&out),
        ]));
        run(v(&[
            "evaluate", "--pred", s(&out.join("map.tif")), "--pred-scheme", s(&sc.student),
            "--truth", s(&lo_truth), "--truth-scheme", s(&sc.teacher), "--target", s(&sc.student),
            "--remap", s(&sc.remap), "--set", "test", "--extent", s(&p("split_lo/test_extent.json")),
            "--out-dir", s(&out.join("eval")),
        ]));
    }
    run(v(&[
        "compare", "--target", s(&sc.student), "--remap", s(&sc.remap),
        "--map", &format!("fused:{}:{}", s(&sc.student), s(&p("student_fused/map.tif"))),
        "--map", &format!("manual:{}:{}", s(&sc.student), s(&p("student_manual/map.tif"))),
        "--map", &format!("truth:{}:{}", s(&sc.teacher), s(&lo_truth)),
        "--out-dir", s(&p("compare")),
    ]));

    E2e {
        dir: dir.to_path_buf(),
        teacher_f1: macro_f1(&p("eval_teacher/metrics.json")),
        fused_f1: macro_f1(&p("student_fused/eval/metrics.json")),
        manual_f1: macro_f1(&p("student_manual/eval/metrics.json")),
    }
}

/// Every regular file under `dir`, relative path → bytes, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
