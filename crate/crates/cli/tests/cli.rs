use std::path::Path;
use std::process::{Command, Output};

use nalgebra::Matrix3;
use serde_json::Value;

use rhwarp::augment::warp_image;
use rhwarp::camera::Camera;
use rhwarp::io;
use rhwarp::raster::Affine2;
use rhwarp::verify::smooth_test_image;
use rhwarp::Homography;

fn rhwarp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhwarp")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn setup(dir: &Path) -> Camera {
    let cam = Camera::from_focal(90.0, 47.5, 35.5, 96, 72).unwrap();
    io::write_camera(&dir.join("cam.json"), &cam).unwrap();
    io::write_png(&dir.join("img.png"), &smooth_test_image(96, 72, 3, Affine2::identity())).unwrap();
    std::fs::write(dir.join("pose.json"), r#"{"R":[1,0,0,0,1,0,0,0,1],"t":[0.1,-0.05,2.0]}"#).unwrap();
    cam
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("metadata JSON on stdout")
}

#[test]
fn warp_round_trip() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    let (img, cam, py, back) = (d.path().join("img.png"), d.path().join("cam.json"), d.path().join("py.png"), d.path().join("back.png"));
    let o = rhwarp(&["warp", "--in", s(&img), "--camera", s(&cam), "--out", s(&py), "--size", "144x192", "--direction", "to-py", "--mask", s(&d.path().join("pym.png"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("py.pix2cal.json").exists());
    let o = rhwarp(&["warp", "--in", s(&py), "--camera", s(&cam), "--out", s(&back), "--direction", "from-py", "--in-mask", s(&d.path().join("pym.png")), "--mask", s(&d.path().join("m.png"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let orig = io::read_png(&img, Affine2::identity()).unwrap();
    let mut out = io::read_png(&back, Affine2::identity()).unwrap();
    let (mask, w, h) = io::read_mask_png(&d.path().join("m.png")).unwrap();
    assert_eq!((w, h), (96, 72));
    out.valid_mut().copy_from_slice(&mask);
    assert!(out.count_valid() > 96 * 72 * 9 / 10);
    let err = out.mean_abs_diff(&orig).unwrap();
    assert!(err < 2.55, "{err}");
}

#[test]
fn warp_output_size_and_missing_camera() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    let out = d.path().join("o.png");
    let o = rhwarp(&["warp", "--in", s(&d.path().join("img.png")), "--camera", s(&d.path().join("cam.json")), "--out", s(&out), "--size", "50x70"]);
    assert!(o.status.success());
    let r = io::read_png(&out, Affine2::identity()).unwrap();
    assert_eq!((r.width(), r.height()), (70, 50));
    assert_eq!(stdout_json(&o)["width"], 70);

    let o = rhwarp(&["warp", "--in", s(&d.path().join("img.png")), "--camera", s(&d.path().join("nope.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = rhwarp(&["warp", "--in", s(&d.path().join("img.png")), "--camera", s(&d.path().join("cam.json")), "--out", s(&out), "--size", "big"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rhwarp(&["warp", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

fn augment(d: &Path, config: &str, index: &str, out: &str) -> Output {
    let cfg = d.join("aug.json");
    std::fs::write(&cfg, config).unwrap();
    rhwarp(&[
        "augment", "--in", s(&d.join("img.png")), "--ann", s(&d.join("pose.json")), "--camera", s(&d.join("cam.json")),
        "--config", s(&cfg), "--index", index, "--out-dir", s(&d.join(out)),
    ])
}

#[test]
fn augment_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cam = setup(d.path());
    let cfg = r#"{"scale_range":[0.8,1.2],"roll_range_deg":[-30,30],"tilt_max_deg":15,"seed":99}"#;
    assert!(augment(d.path(), cfg, "4", "a").status.success());
    assert!(augment(d.path(), cfg, "4", "b").status.success());
    for name in ["aug_4.png", "aug_4_mask.png", "aug_4_pose.json", "aug_4_provenance.json"] {
        let (x, y) = (std::fs::read(d.path().join("a").join(name)).unwrap(), std::fs::read(d.path().join("b").join(name)).unwrap());
        assert_eq!(x, y, "{name} differs");
    }

    // the recorded homography reproduces the output image
    let prov: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("a/aug_4_provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["seed"], 99);
    assert_eq!(prov["index"], 4);
    let h: Vec<f64> = prov["H"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let h = Homography::new(Matrix3::from_row_slice(&h)).unwrap();
    let img = io::read_png(&d.path().join("img.png"), Affine2::identity()).unwrap();
    let again = d.path().join("again.png");
    io::write_png(&again, &warp_image(&img, &h)).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(d.path().join("a/aug_4.png")).unwrap());
    assert_eq!(cam.width, 96);

    let pose: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("a/aug_4_pose.json")).unwrap()).unwrap();
    assert!(pose["t"].is_array() && pose.get("c").is_none());
}

#[test]
fn zero_range_augment_passes_through() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    let cfg = r#"{"scale_range":[1,1],"roll_range_deg":[0,0],"tilt_max_deg":0,"seed":1}"#;
    let o = augment(d.path(), cfg, "0", "z");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = io::read_png(&d.path().join("img.png"), Affine2::identity()).unwrap();
    let b = io::read_png(&d.path().join("z/aug_0.png"), Affine2::identity()).unwrap();
    assert_eq!(a, b);
    let pose = io::read_pose(&d.path().join("z/aug_0_pose.json")).unwrap();
    assert_eq!(pose, io::read_pose(&d.path().join("pose.json")).unwrap());

    let bad = r#"{"scale_range":[1.2,0.8],"roll_range_deg":[0,0],"tilt_max_deg":0,"seed":1}"#;
    assert_eq!(augment(d.path(), bad, "0", "bad").status.code(), Some(3));
}

#[test]
fn distort_writes_csv() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("f.csv");
    let o = rhwarp(&["distort", "--alpha", "0,0", "--which", "py", "--grid", "11x9", "--out", s(&out)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("u0,u1,error,valid"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 99);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
    }

    let o = rhwarp(&["distort", "--alpha", "0.349,0", "--which", "translation", "--grid", "21x21", "--half-width", "0.5", "--out", s(&out)]);
    assert!(o.status.success());
    let meta = stdout_json(&o);
    assert!(meta["mean_py"].as_f64().unwrap() < meta["mean_translation"].as_f64().unwrap());
    assert!(String::from_utf8_lossy(&o.stderr).contains("mean distortion"));

    let o = rhwarp(&["distort", "--alpha", "0.1,0", "--which", "py", "--grid", "21", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = rhwarp(&["distort", "--alpha", "0.1", "--which", "py", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn distort_numbers_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("f.csv");
    assert!(rhwarp(&["distort", "--alpha", "0.3,-0.2", "--which", "py", "--grid", "5x5", "--out", s(&out)]).status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let first = text.lines().nth(1).unwrap();
    let u0: f64 = first.split(',').next().unwrap().parse().unwrap();
    assert_eq!(u0, -std::f64::consts::FRAC_PI_2);
}

#[test]
fn sset_worked_case() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("s.json");
    let o = rhwarp(&["sset", "--tau", "1,0", "--v", "1,0,0", "--out", s(&out), "--check", "--check-n", "41"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let eig: Vec<f64> = doc["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(eig.len(), 1);
    assert!((eig[0] - 1.0).abs() < 1e-12);
    let cases = doc["cases"].as_array().unwrap();
    assert!(cases.iter().any(|c| c["kind"] == "plane"));
    let curve = doc["curve"].as_array().unwrap();
    assert!(!curve.is_empty());
    for p in curve {
        let p: Vec<f64> = p.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(p.len(), 4);
        assert!(p[2] == 0.0 && p[3] == 0.0);
    }
    assert_eq!(stdout_json(&o)["check"]["passed"], true);

    let o = rhwarp(&["sset", "--tau", "0,0", "--v", "1,0,0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let o = rhwarp(&["sset", "--tau", "1,0", "--v", "1,0,0", "--rotation", "1,0,0,0,1,0,0,0,2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_reports_and_filters() {
    let o = rhwarp(&["verify", "--filter", "taylor"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.contains("taylor.")));

    let o = rhwarp(&["verify", "--filter", "so3py", "--perturb", "so3py.phi_round_trip"]);
    assert_eq!(o.status.code(), Some(4));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("FAIL") && l.contains("so3py.phi_round_trip")));

    assert_eq!(rhwarp(&["verify", "--filter", "no-such-check"]).status.code(), Some(2));
}

#[test]
fn verify_clean_run() {
    let o = rhwarp(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}
