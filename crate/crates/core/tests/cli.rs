use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rigfit::optim::StagePlan;

fn rigfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigfit")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small template in `dir`; returns its JSON path.
fn make_template(dir: &Path) -> PathBuf {
    let o = rigfit(&[
        "make-template",
        "--out",
        arg(dir),
        "--columns",
        "41",
        "--rows",
        "29",
        "--size",
        "128",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("head.json")
}

fn short_plan(dir: &Path) -> PathBuf {
    let mut plan = StagePlan::three_stage();
    for (s, n) in plan.stages.iter_mut().zip([40, 10, 20]) {
        s.iterations = n;
    }
    let path = dir.join("plan.json");
    std::fs::write(&path, serde_json::to_string_pretty(&plan).unwrap()).unwrap();
    path
}

fn eval_json(a: &Path, b: &Path, extra: &[&str]) -> serde_json::Value {
    let mut args = vec!["eval", "--mesh-a", arg(a), "--mesh-b", arg(b), "--n", "20000"];
    args.extend_from_slice(extra);
    let o = rigfit(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let o = rigfit(&["eval", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(rigfit(&["--help"]).status.code(), Some(0));
    assert_eq!(rigfit(&["--version"]).status.code(), Some(0));
    assert_eq!(rigfit(&[]).status.code(), Some(1));
}

#[test]
fn eval_identical_meshes() {
    let dir = tempfile::tempdir().unwrap();
    make_template(dir.path());
    let mesh = dir.path().join("head.obj");
    let v = eval_json(&mesh, &mesh, &[]);
    assert!(v["rmse"].as_f64().unwrap() < 1e-3);
    assert!(v["nc"].as_f64().unwrap() > 0.999);
    assert_eq!(v["seed"].as_u64(), Some(0));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let tmpl = make_template(dir.path());
    let missing = dir.path().join("nowhere");
    let o = rigfit(&["fit", "--template", arg(&tmpl), "--target", arg(&missing), "--out", arg(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));

    let mesh = dir.path().join("head.obj");
    let o = rigfit(&["eval", "--mesh-a", arg(&mesh), "--mesh-b", arg(&mesh), "--n", "0"]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.obj");
    std::fs::write(&bad, "v 0 0 0\nf 1 2 3\n").unwrap();
    let o = rigfit(&["eval", "--mesh-a", arg(&bad), "--mesh-b", arg(&mesh)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_fit_eval_loop() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let tmpl = make_template(d);
    let target = d.join("target");
    let o = rigfit(&["synth", "--template", arg(&tmpl), "--seed", "4", "--out", arg(&target)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["normals.f32", "mask.png", "landmarks.json", "camera.json", "truth.obj", "truth_state.json"] {
        assert!(target.join(f).is_file(), "missing {f}");
    }
    let plan = short_plan(d);
    let out = d.join("fit");
    let o = rigfit(&[
        "fit",
        "--template",
        arg(&tmpl),
        "--target",
        arg(&target),
        "--plan",
        arg(&plan),
        "--out",
        arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["fit.obj", "state.json", "trace.csv", "report.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let before = eval_json(&d.join("head.obj"), &target.join("truth.obj"), &[]);
    let after = eval_json(&out.join("fit.obj"), &target.join("truth.obj"), &[]);
    assert!(after["rmse"].as_f64().unwrap() < before["rmse"].as_f64().unwrap());

    let masked = eval_json(&out.join("fit.obj"), &target.join("truth.obj"), &["--template", arg(&tmpl)]);
    assert!(masked["rmse"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bake_writes_maps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    make_template(d);
    let mut img = rigfit::render::ImageBuffer::filled(128, 128, 3, 0.5);
    img.data.iter_mut().step_by(3).for_each(|v| *v = 0.7);
    img.write_png(d.join("photo.png"), rigfit::render::BitDepth::Eight).unwrap();
    rigfit::render::ImageBuffer::filled(64, 64, 3, 0.4)
        .write_png(d.join("tex.png"), rigfit::render::BitDepth::Eight)
        .unwrap();
    let out = d.join("bake");
    let o = rigfit(&[
        "bake",
        "--image",
        arg(&d.join("photo.png")),
        "--mesh",
        arg(&d.join("head.obj")),
        "--camera",
        arg(&d.join("camera.json")),
        "--template-tex",
        arg(&d.join("tex.png")),
        "--out",
        arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["albedo.png", "normal.png", "baked_albedo.png", "baked_normal.png", "coverage.png"] {
        let img = rigfit::render::ImageBuffer::read_png(out.join(f)).unwrap();
        assert_eq!((img.width, img.height), (64, 64), "{f}");
    }
}

#[test]
fn grad_check_on_small_template() {
    let dir = tempfile::tempdir().unwrap();
    let tmpl = make_template(dir.path());
    let o = rigfit(&["grad-check", "--template", arg(&tmpl), "--seed", "2", "--points", "1", "--vertex-coords", "15"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["checks"].as_array().unwrap().len(), 21);
}

#[test]
fn bundled_default_plan_matches_the_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("plans/default.json");
    assert_eq!(StagePlan::load(path).unwrap(), StagePlan::default());
}
