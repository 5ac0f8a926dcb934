use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pzsr_core::io::{load_image, save_color_png, save_gray_png, ColorImage, LoadedImage};
use pzsr_core::synth::synthetic_scene;

fn pzsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pzsr")).args(args).output().expect("spawn pzsr")
}

fn ok(args: &[&str]) -> String {
    let out = pzsr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Trains and indexes a small model; returns (db, index) paths.
fn model(dir: &Path) -> (PathBuf, PathBuf) {
    let train = dir.join("train");
    std::fs::create_dir(&train).unwrap();
    for i in 0..3 {
        save_gray_png(&synthetic_scene(160, 160, 100 + i), train.join(format!("{i}.png"))).unwrap();
    }
    let (db, idx) = (dir.join("m.pzdb"), dir.join("m.pzlsh"));
    ok(&["train", "--images", s(&train), "--out", s(&db), "--samples-per-image", "3"]);
    ok(&["index", "--db", s(&db), "--out", s(&idx), "--r", "auto"]);
    (db, idx)
}

#[test]
fn train_index_and_enhance() {
    let dir = tempfile::tempdir().unwrap();
    let (db, idx) = model(dir.path());
    let input = dir.path().join("in.png");
    save_gray_png(&synthetic_scene(40, 30, 7), &input).unwrap();

    let out = dir.path().join("up.png");
    ok(&["upscale", "--db", s(&db), "--index", s(&idx), "--in", s(&input), "--out", s(&out)]);
    assert_eq!(load_image(&out).unwrap().luma().dims(), (80, 60));

    let raw = dir.path().join("raw.png");
    ok(&["upscale", "--db", s(&db), "--index", s(&idx), "--in", s(&input), "--out", s(&raw), "--no-backproject"]);
    assert_eq!(load_image(&raw).unwrap().luma().dims(), (80, 60));

    let st = dir.path().join("st.png");
    ok(&["stretch", "--db", s(&db), "--index", s(&idx), "--in", s(&input), "--out", s(&st), "--fx", "2", "--fy", "1"]);
    assert_eq!(load_image(&st).unwrap().luma().dims(), (80, 30));

    let db_out = dir.path().join("db.png");
    ok(&["deblur", "--db", s(&db), "--index", s(&idx), "--in", s(&input), "--out", s(&db_out)]);
    assert_eq!(load_image(&db_out).unwrap().luma().dims(), (40, 30));
}

#[test]
fn color_input_stays_color() {
    let dir = tempfile::tempdir().unwrap();
    let (db, idx) = model(dir.path());
    let input = dir.path().join("rgb.png");
    let luma = synthetic_scene(32, 32, 3);
    let color = ColorImage {
        cb: synthetic_scene(32, 32, 4).map(|v| 0.4 + 0.2 * v),
        cr: synthetic_scene(32, 32, 5).map(|v| 0.4 + 0.2 * v),
        luma,
    };
    save_color_png(&color, &input).unwrap();
    let out = dir.path().join("up.png");
    ok(&["upscale", "--db", s(&db), "--index", s(&idx), "--in", s(&input), "--out", s(&out)]);
    match load_image(&out).unwrap() {
        LoadedImage::Color(c) => assert_eq!(c.luma.dims(), (64, 64)),
        LoadedImage::Gray(_) => panic!("color input came back gray"),
    }
}

#[test]
fn bench_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (db, idx) = model(dir.path());
    let test = dir.path().join("test");
    std::fs::create_dir(&test).unwrap();
    for i in 0..3 {
        save_gray_png(&synthetic_scene(64, 64, 500 + i), test.join(format!("t{i}.png"))).unwrap();
    }
    let run = |name: &str| {
        let report = dir.path().join(name);
        ok(&["bench", "--db", s(&db), "--index", s(&idx), "--test", s(&test), "--report", s(&report), "--no-timing"]);
        std::fs::read_to_string(report).unwrap()
    };
    let a = run("a.csv");
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 13);
    assert_eq!(lines[0], "image,method,mse,psnr,similarity_ops,wall_ms,fallbacks");
    for m in ["ours", "exhaustive-lle", "bicubic", "bicubic+unsharp"] {
        assert_eq!(lines.iter().filter(|l| l.split(',').nth(1) == Some(m)).count(), 3);
    }
    assert_eq!(a, run("b.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pzsr(&["upscale", "--bogus"]).status.code(), Some(2));
    assert_eq!(pzsr(&[]).status.code(), Some(2));

    let (db, _) = model(dir.path());
    let idx = dir.path().join("x.pzlsh");
    assert_eq!(pzsr(&["index", "--db", s(&db), "--out", s(&idx), "--r", "wide"]).status.code(), Some(2));
    assert_eq!(pzsr(&["index", "--db", s(&db), "--out", s(&idx), "--t", "40"]).status.code(), Some(2));

    let junk = dir.path().join("junk.pzdb");
    std::fs::write(&junk, b"definitely not a database").unwrap();
    assert_eq!(pzsr(&["index", "--db", s(&junk), "--out", s(&idx)]).status.code(), Some(3));
}
