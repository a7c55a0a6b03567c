use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use objctrl_core::tensor_io::{load_mask, load_tensor, save_depth, save_image, save_mask, save_tensor};
use objctrl_core::{DepthMap, Image, Mask, PoseSequence64, Tensor, Trajectory2D64, Trajectory3D64};

fn objctrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_objctrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_out(args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = objctrl(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim().lines().count(), 1, "single JSON document: {text}");
    serde_json::from_str(&text).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (w, h) = (48, 32);
        save_image(&Image::new(w, h, 1, vec![7; w * h]).unwrap(), dir.path().join("image.png")).unwrap();
        save_depth(&DepthMap::uniform(w, h, 2.0).unwrap(), dir.path().join("depth.otsr")).unwrap();
        save_mask(
            &Mask::from_fn(w, h, |x, y| (5..11).contains(&x) && (5..9).contains(&y)),
            dir.path().join("mask.png"),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("stroke.json"),
            Trajectory2D64::new(vec![[6.0, 6.0], [32.0, 6.0]]).unwrap().to_json(),
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn preset_zero_magnitude_gives_identity_poses() {
    let f = Fixture::new();
    let out = f.path("p.json");
    let o = objctrl(&["preset", "--kind", "pan_right", "--mag", "0", "--frames", "14", "-o", p(&out)]);
    assert!(o.status.success());
    let poses = PoseSequence64::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(poses.len(), 14);
    assert!(poses.frames().iter().all(|f| f.is_identity()));
}

#[test]
fn objmc_identical_prints_zero() {
    let f = Fixture::new();
    let s = f.path("stroke.json");
    let o = objctrl(&["objmc", "--target", p(&s), "--tracked", p(&s)]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "mean 0.0");

    let moved = f.path("moved.json");
    std::fs::write(
        &moved,
        Trajectory2D64::new(vec![[9.0, 10.0], [35.0, 10.0]]).unwrap().to_json(),
    )
    .unwrap();
    let doc = json_out(&["objmc", "--target", p(&s), "--tracked", p(&moved)]);
    assert_eq!(doc["mean"], 5.0);

    let pairs = f.path("pairs.json");
    std::fs::write(
        &pairs,
        serde_json::json!([
            {"target": s, "tracked": moved},
            {"target": s, "tracked": s},
            {"target": s, "tracked": f.path("nope.json")}
        ])
        .to_string(),
    )
    .unwrap();
    let report = f.path("report.json");
    let doc = json_out(&["objmc", "--pairs", p(&pairs), "-o", p(&report)]);
    assert_eq!(doc["mean"], 2.5);
    assert!(doc["pairs"][2]["error"].is_string());
    let saved: Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    assert_eq!(saved, doc);
}

#[test]
fn lift_then_poses() {
    let f = Fixture::new();
    let t3 = f.path("t3d.json");
    let doc = json_out(&[
        "lift", "--traj", p(&f.path("stroke.json")), "--depth", p(&f.path("depth.otsr")),
        "--frames", "14", "--theta", "0.2", "-o", p(&t3),
    ]);
    assert_eq!(doc["points"], 14);
    let traj = Trajectory3D64::from_json(&std::fs::read_to_string(&t3).unwrap()).unwrap();
    assert_eq!(traj.len(), 14);
    assert!(traj.depths().iter().all(|&d| d == 2.0));

    let poses = f.path("poses.json");
    let doc = json_out(&["poses", "--traj3d", p(&t3), "--width", "48", "--height", "32", "-o", p(&poses)]);
    assert_eq!(doc["frames"], 14);
    let seq = PoseSequence64::from_json(&std::fs::read_to_string(&poses).unwrap()).unwrap();
    assert_eq!(seq.intrinsics.fx, 48.0);
    assert_eq!(seq.frames()[0].translation(), &[0.0, 0.0, 0.0]);

    let explicit = f.path("poses_k.json");
    json_out(&[
        "poses", "--traj3d", p(&t3), "--fx", "10", "--fy", "10", "--cx", "1", "--cy", "1", "-o", p(&explicit),
    ]);
    let seq = PoseSequence64::from_json(&std::fs::read_to_string(&explicit).unwrap()).unwrap();
    assert_eq!(seq.intrinsics.cx, 1.0);
}

#[test]
fn stage_chain() {
    let f = Fixture::new();
    let poses = f.path("poses.json");
    json_out(&[
        "preset", "--kind", "pan_right", "--mag", "0.5", "--frames", "4", "--width", "48", "--height", "32",
        "-o", p(&poses),
    ]);

    let plucker = f.path("pl.otsr");
    let doc = json_out(&["plucker", "--poses", p(&poses), "--width", "48", "--height", "32", "-o", p(&plucker)]);
    assert_eq!(doc["shape"], serde_json::json!([4, 6, 32, 48]));
    let bg = f.path("bg.otsr");
    json_out(&[
        "plucker", "--poses", p(&poses), "--width", "48", "--height", "32", "--no-add-translation",
        "--normalize", "-o", p(&bg),
    ]);

    let masks = f.path("masks");
    let doc = json_out(&[
        "warp-mask", "--mask", p(&f.path("mask.png")), "--depth", p(&f.path("depth.otsr")),
        "--poses", p(&poses), "--out-dir", p(&masks),
    ]);
    assert_eq!(doc["files"].as_array().unwrap().len(), 4);
    assert_eq!(load_mask(masks.join("frame_00.png"), 128).unwrap(), load_mask(f.path("mask.png"), 128).unwrap());

    let pyr = f.path("pyr");
    let doc = json_out(&[
        "pyramid", "--mask", p(&f.path("mask.png")), "--masks-dir", p(&masks), "--levels", "3",
        "--kernel", "3", "--out-dir", p(&pyr),
    ]);
    assert_eq!(doc["files"].as_array().unwrap().len(), 4);
    assert!(pyr.join("manifest.json").exists());

    let fused = f.path("fused.otsr");
    json_out(&["fuse", "--obj", p(&plucker), "--bg", p(&bg), "--mask", p(&pyr.join("level_0.png")), "-o", p(&fused)]);
    let (a, b, m) = (load_tensor(&plucker).unwrap(), load_tensor(&bg).unwrap(), load_mask(pyr.join("level_0.png"), 128).unwrap());
    let v = load_tensor(&fused).unwrap();
    let plane = 32 * 48;
    for (i, x) in v.data().iter().enumerate() {
        let want = if m.data()[i % plane] != 0 { a.data()[i] } else { b.data()[i] };
        assert_eq!(*x, want);
    }

    let swl = f.path("swl.otsr");
    let doc = json_out(&[
        "swl", "--depth", p(&f.path("depth.otsr")), "--poses", p(&poses), "--masks-dir", p(&masks),
        "--seed", "3", "--channels", "2", "--downsample", "8", "--d0", "0.25", "-o", p(&swl),
    ]);
    assert_eq!(doc["shape"], serde_json::json!([4, 2, 4, 6]));
    let prov: Value = serde_json::from_slice(&std::fs::read(f.path("swl.json")).unwrap()).unwrap();
    assert_eq!(prov["seed"], 3);
    assert_eq!(prov["d0"], 0.25);
}

#[test]
fn run_from_config() {
    let f = Fixture::new();
    std::fs::write(
        f.path("run.json"),
        r#"{"image":"image.png","depth":"depth.otsr","mask":"mask.png",
            "guidance":{"type":"trajectory2d","path":"stroke.json"},
            "options":{"frames":6,"swl":{"seed":1,"channels":4,"downsample":8,"d0":0.25}}}"#,
    )
    .unwrap();
    let out = f.path("bundle");
    let doc = json_out(&["run", "--config", p(&f.path("run.json")), "--out-dir", p(&out)]);
    assert!(doc["files"]["swl.otsr"].is_string());
    assert!(out.join("warped_masks/frame_05.png").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    // usage
    assert_eq!(objctrl(&["lift", "--traj", "x.json"]).status.code(), Some(2));
    assert_eq!(objctrl(&["lift", "--bogus"]).status.code(), Some(2));
    assert_eq!(objctrl(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(objctrl(&["poses", "--traj3d", "t", "--fx", "1", "-o", "x"]).status.code(), Some(2));
    for sub in ["lift", "poses", "plucker", "warp-mask", "pyramid", "fuse", "swl", "preset", "objmc", "run", "serve"] {
        let o = objctrl(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8(o.stdout).unwrap().contains("Usage"));
    }
    // i/o
    let o = objctrl(&["--json", "objmc", "--target", "missing.json", "--tracked", "missing.json"]);
    assert_eq!(o.status.code(), Some(4));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["error"], "io");
    // validation: stroke outside the frame
    let bad = f.path("bad.json");
    std::fs::write(&bad, r#"{"points":[[0,0],[480,0]]}"#).unwrap();
    let o = objctrl(&["lift", "--traj", p(&bad), "--depth", p(&f.path("depth.otsr")), "-o", p(&f.path("o.json"))]);
    assert_eq!(o.status.code(), Some(3));
    // validation: malformed tensor
    let junk = f.path("junk.otsr");
    std::fs::write(&junk, b"not a tensor").unwrap();
    let o = objctrl(&["fuse", "--obj", p(&junk), "--bg", p(&junk), "--mask", p(&f.path("mask.png")), "-o", "x"]);
    assert_eq!(o.status.code(), Some(3));
    // validation: shape mismatch
    let a = f.path("a.otsr");
    save_tensor(&Tensor::zeros(vec![1, 6, 2, 2]), &a).unwrap();
    let o = objctrl(&["fuse", "--obj", p(&a), "--bg", p(&a), "--mask", p(&f.path("mask.png")), "-o", "x"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn thread_cap_does_not_change_output() {
    let f = Fixture::new();
    let poses = f.path("poses.json");
    json_out(&["preset", "--kind", "orbit", "--mag", "20", "--frames", "5", "--width", "48", "--height", "32", "-o", p(&poses)]);
    let run = |threads: &str, name: &str| {
        let out = f.path(name);
        let o = Command::new(env!("CARGO_BIN_EXE_objctrl"))
            .env("OBJCTRL_THREADS", threads)
            .args(["plucker", "--poses", p(&poses), "--width", "48", "--height", "32", "-o", p(&out)])
            .output()
            .unwrap();
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("1", "a.otsr"), run("8", "b.otsr"));
}
