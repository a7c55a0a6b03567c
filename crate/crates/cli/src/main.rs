//! `objctrl`: every pipeline stage as a subcommand, plus the full run and the
//! preview server.
//!
//! Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error.
//! `OBJCTRL_THREADS` caps worker threads.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use objctrl_core::layer_control::{fuse_volumes, mask_pyramid, union_mask};
use objctrl_core::metrics::{objmc_batch, objmc_resampled, TrajectoryPair};
use objctrl_core::pipeline::{self, RunConfig, SwlManifest};
use objctrl_core::swl::{make_swl, SwlParams, DEFAULT_CHANNELS, DEFAULT_CUTOFF, DEFAULT_DOWNSAMPLE};
use objctrl_core::tensor_io::{
    load_depth, load_mask, load_tensor, read_text, save_mask, save_tensor, write_bytes,
    DEFAULT_MASK_THRESHOLD,
};
use objctrl_core::trajectory::{DEFAULT_FRAMES, DEFAULT_THETA};
use objctrl_core::{
    default_intrinsics, lift, plucker_volume, preset_poses, threads_from_env, trajectory_to_poses,
    warp_mask_sequence, with_threads, Error, Intrinsics64, Mask, PluckerOptions, PoseSequence64,
    PresetKind, PresetSpec, SmoothingConfig, Trajectory2D64, Trajectory3D64,
};

const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "objctrl", version, about = "Object-motion control signals from trajectories, depth and masks")]
struct Cli {
    /// Emit a single JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample a 2D stroke and attach smoothed depths.
    Lift(LiftArgs),
    /// Convert a 3D trajectory into per-frame camera poses.
    Poses(PosesArgs),
    /// Dense Plücker embedding volume [N,6,H,W] of a pose file.
    Plucker(PluckerArgs),
    /// Warp the object mask into every frame of a pose file.
    WarpMask(WarpMaskArgs),
    /// Union of masks, then the multi-scale dilated pyramid.
    Pyramid(PyramidArgs),
    /// Blend object and background volumes through a mask.
    Fuse(FuseArgs),
    /// Shared warping latent.
    Swl(SwlArgs),
    /// Hand-authored pose sequence.
    Preset(PresetArgs),
    /// ObjMC score between target and tracked trajectories.
    Objmc(ObjmcArgs),
    /// Full pipeline from a run config to a control bundle.
    Run(RunArgs),
    /// Start the preview HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct FrameArgs {
    /// Frame width in pixels.
    #[arg(long, default_value_t = 576)]
    width: usize,
    /// Frame height in pixels.
    #[arg(long, default_value_t = 320)]
    height: usize,
    /// Focal length x; with fy, cx, cy overrides the size-derived intrinsics.
    #[arg(long, requires_all = ["fy", "cx", "cy"])]
    fx: Option<f64>,
    #[arg(long, requires_all = ["fx", "cx", "cy"])]
    fy: Option<f64>,
    #[arg(long, requires_all = ["fx", "fy", "cy"])]
    cx: Option<f64>,
    #[arg(long, requires_all = ["fx", "fy", "cx"])]
    cy: Option<f64>,
}

impl FrameArgs {
    fn intrinsics(&self) -> Result<Intrinsics64, Error> {
        match (self.fx, self.fy, self.cx, self.cy) {
            (Some(fx), Some(fy), Some(cx), Some(cy)) => Intrinsics64::new(fx, fy, cx, cy),
            _ => default_intrinsics(self.width, self.height),
        }
    }
}

#[derive(Args)]
struct LiftArgs {
    /// 2D trajectory JSON.
    #[arg(long)]
    traj: PathBuf,
    /// Depth map (OTSR, or 16-bit PNG with `<file>.json` range sidecar).
    #[arg(long)]
    depth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FRAMES)]
    frames: usize,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Measure depth jumps on raw depths instead of max-normalized ones.
    #[arg(long)]
    no_normalize: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PosesArgs {
    /// 3D trajectory JSON.
    #[arg(long)]
    traj3d: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PluckerArgs {
    #[arg(long)]
    poses: PathBuf,
    #[arg(long, default_value_t = 576)]
    width: usize,
    #[arg(long, default_value_t = 320)]
    height: usize,
    /// Use `R·K⁻¹·u` as the ray direction instead of `R·K⁻¹·u + t`.
    #[arg(long)]
    no_add_translation: bool,
    /// Unit-normalize ray directions.
    #[arg(long)]
    normalize: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct WarpMaskArgs {
    /// Frame-0 object mask PNG.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MASK_THRESHOLD)]
    mask_threshold: u8,
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    poses: PathBuf,
    /// Receives frame_XX.png, one per pose.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PyramidArgs {
    /// Mask PNG; repeat to take the union.
    #[arg(long = "mask", required = true)]
    masks: Vec<PathBuf>,
    /// Directory of frame_XX.png masks to add to the union.
    #[arg(long)]
    masks_dir: Option<PathBuf>,
    #[arg(long, default_value_t = objctrl_core::layer_control::DEFAULT_LEVELS)]
    levels: usize,
    #[arg(long, default_value_t = objctrl_core::layer_control::DEFAULT_KERNEL)]
    kernel: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Object-pose volume [N,C,H,W].
    #[arg(long)]
    obj: PathBuf,
    /// Background-pose volume [N,C,H,W].
    #[arg(long)]
    bg: PathBuf,
    /// Mask PNG at the volume's resolution.
    #[arg(long)]
    mask: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SwlArgs {
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    poses: PathBuf,
    /// Directory of per-frame warped masks (frame_XX.png).
    #[arg(long)]
    masks_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CHANNELS)]
    channels: usize,
    #[arg(long, default_value_t = DEFAULT_DOWNSAMPLE)]
    downsample: usize,
    /// Gaussian cutoff in normalized frequency.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    d0: f64,
    /// Latent OTSR; a provenance JSON is written next to it.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PresetArgs {
    #[arg(long)]
    kind: PresetKind,
    /// Scene units for zoom/pan, degrees for orbit.
    #[arg(long = "mag")]
    magnitude: f64,
    #[arg(long, default_value_t = DEFAULT_FRAMES)]
    frames: usize,
    #[arg(long, default_value_t = 1.0)]
    pivot_depth: f64,
    #[command(flatten)]
    frame: FrameArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ObjmcArgs {
    #[arg(long, requires = "tracked", conflicts_with = "pairs")]
    target: Option<PathBuf>,
    #[arg(long, requires = "target")]
    tracked: Option<PathBuf>,
    /// JSON list of {"target": path, "tracked": path}.
    #[arg(long, required_unless_present = "target")]
    pairs: Option<PathBuf>,
    /// Also write the report JSON here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Run config JSON; relative paths inside are resolved against its directory.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Directory holding the built UI; a placeholder page is served otherwise.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

/// Result of one subcommand: the JSON document and its human rendering.
struct Outcome {
    json: Value,
    text: String,
}

fn written(command: &str, path: &Path, extra: Value) -> Outcome {
    let mut doc = json!({"command": command, "output": path});
    if let (Value::Object(d), Value::Object(e)) = (&mut doc, extra) {
        d.extend(e);
    }
    Outcome {
        text: format!("wrote {}", path.display()),
        json: doc,
    }
}

fn write_text(path: &Path, s: &str) -> Result<(), Error> {
    write_bytes(path, s.as_bytes())
}

fn load_poses(path: &Path) -> Result<PoseSequence64, Error> {
    PoseSequence64::from_json(&read_text(path)?)
}

/// `frame_*.png` files in name order.
fn load_mask_dir(dir: &Path, threshold: u8) -> Result<Vec<Mask>, Error> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut names: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".png"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Validation(format!("no frame_*.png masks in {}", dir.display())));
    }
    names.iter().map(|p| load_mask(p, threshold)).collect()
}

fn cmd_lift(a: &LiftArgs) -> Result<Outcome, Error> {
    let traj = Trajectory2D64::from_json(&read_text(&a.traj)?)?;
    let depth = load_depth(&a.depth)?;
    let cfg = SmoothingConfig {
        theta: a.theta,
        normalize: !a.no_normalize,
    };
    let t3 = lift(&traj, &depth, a.frames, &cfg)?;
    write_text(&a.output, &t3.to_json())?;
    let reset = t3.depths().windows(2).all(|w| w[0] == w[1]);
    Ok(written("lift", &a.output, json!({"points": t3.len(), "flat_depth": reset})))
}

fn cmd_poses(a: &PosesArgs) -> Result<Outcome, Error> {
    let t3 = Trajectory3D64::from_json(&read_text(&a.traj3d)?)?;
    let poses = trajectory_to_poses(&t3, &a.frame.intrinsics()?)?;
    write_text(&a.output, &poses.to_json())?;
    Ok(written("poses", &a.output, json!({"frames": poses.len()})))
}

fn cmd_plucker(a: &PluckerArgs) -> Result<Outcome, Error> {
    let poses = load_poses(&a.poses)?;
    let opts = PluckerOptions {
        add_translation: !a.no_add_translation,
        normalize: a.normalize,
    };
    let vol = plucker_volume(&poses, a.width, a.height, opts)?;
    save_tensor(&vol, &a.output)?;
    Ok(written("plucker", &a.output, json!({"shape": vol.shape()})))
}

fn cmd_warp_mask(a: &WarpMaskArgs) -> Result<Outcome, Error> {
    let m0 = load_mask(&a.mask, a.mask_threshold)?;
    let depth = load_depth(&a.depth)?;
    let poses = load_poses(&a.poses)?;
    let seq = warp_mask_sequence(&m0, &depth, &poses)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let mut files = Vec::new();
    for (i, m) in seq.iter().enumerate() {
        let p = a.out_dir.join(format!("frame_{i:02}.png"));
        save_mask(m, &p)?;
        files.push(p);
    }
    let counts: Vec<usize> = seq.iter().map(Mask::count).collect();
    Ok(Outcome {
        text: format!("wrote {} masks to {}", files.len(), a.out_dir.display()),
        json: json!({"command": "warp-mask", "files": files, "pixel_counts": counts}),
    })
}

fn cmd_pyramid(a: &PyramidArgs) -> Result<Outcome, Error> {
    let mut masks = a
        .masks
        .iter()
        .map(|p| load_mask(p, DEFAULT_MASK_THRESHOLD))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = &a.masks_dir {
        masks.extend(load_mask_dir(dir, DEFAULT_MASK_THRESHOLD)?);
    }
    let union = union_mask(&masks)?;
    let pyr = mask_pyramid(&union, a.levels, a.kernel)?;
    let files = pyr.save(&a.out_dir)?;
    let counts: Vec<usize> = pyr.levels().iter().map(Mask::count).collect();
    Ok(Outcome {
        text: format!("wrote {} levels to {}", pyr.len(), a.out_dir.display()),
        json: json!({"command": "pyramid", "files": files, "pixel_counts": counts}),
    })
}

fn cmd_fuse(a: &FuseArgs) -> Result<Outcome, Error> {
    let obj = load_tensor(&a.obj)?;
    let bg = load_tensor(&a.bg)?;
    let m = load_mask(&a.mask, DEFAULT_MASK_THRESHOLD)?;
    let fused = fuse_volumes(&obj, &bg, &m)?;
    save_tensor(&fused, &a.output)?;
    Ok(written("fuse", &a.output, json!({"shape": fused.shape()})))
}

/// Provenance sidecar path for a latent: `x.otsr` gets `x.json`.
fn swl_manifest_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn cmd_swl(a: &SwlArgs) -> Result<Outcome, Error> {
    let depth = load_depth(&a.depth)?;
    let poses = load_poses(&a.poses)?;
    let masks = load_mask_dir(&a.masks_dir, DEFAULT_MASK_THRESHOLD)?;
    let params = SwlParams {
        seed: a.seed,
        channels: a.channels,
        downsample: a.downsample,
        d0: a.d0,
    };
    let latent = make_swl(&params, &depth, &poses, &masks)?;
    save_tensor(&latent.volume, &a.output)?;
    let prov = SwlManifest {
        seed: a.seed,
        d0: a.d0,
        channels: a.channels,
        downsample: a.downsample,
        poses: a.poses.display().to_string(),
        masks: a.masks_dir.display().to_string(),
    };
    let manifest = swl_manifest_path(&a.output);
    write_text(&manifest, &serde_json::to_string_pretty(&prov).expect("swl manifest serializes"))?;
    Ok(written(
        "swl",
        &a.output,
        json!({"shape": latent.volume.shape(), "manifest": manifest}),
    ))
}

fn cmd_preset(a: &PresetArgs) -> Result<Outcome, Error> {
    let spec = PresetSpec {
        kind: a.kind,
        magnitude: a.magnitude,
        frames: a.frames,
        pivot_depth: a.pivot_depth,
    };
    let poses = preset_poses(&spec, &a.frame.intrinsics()?)?;
    write_text(&a.output, &poses.to_json())?;
    Ok(written("preset", &a.output, json!({"frames": poses.len()})))
}

fn cmd_objmc(a: &ObjmcArgs) -> Result<Outcome, Error> {
    let (doc, mean) = match (&a.target, &a.tracked, &a.pairs) {
        (Some(t), Some(r), _) => {
            let target = Trajectory2D64::from_json(&read_text(t)?)?;
            let tracked = Trajectory2D64::from_json(&read_text(r)?)?;
            let report = objmc_resampled(&target, &tracked)?;
            let mean = report.mean;
            (serde_json::to_value(&report).expect("report serializes"), mean)
        }
        (_, _, Some(p)) => {
            let pairs: Vec<TrajectoryPair> = serde_json::from_str(&read_text(p)?)
                .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
            let report = objmc_batch(&pairs)?;
            let mean = report.mean;
            (serde_json::to_value(&report).expect("report serializes"), mean)
        }
        _ => return Err(Error::Validation("pass --target and --tracked, or --pairs".into())),
    };
    if let Some(out) = &a.output {
        write_text(out, &serde_json::to_string_pretty(&doc).expect("report serializes"))?;
    }
    Ok(Outcome {
        text: format!("mean {mean:?}"),
        json: doc,
    })
}

fn cmd_run(a: &RunArgs) -> Result<Outcome, Error> {
    let raw = RunConfig::from_json(&read_text(&a.config)?)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let bundle = pipeline::run(&raw.resolved(base), &a.out_dir)?;
    Ok(Outcome {
        text: format!(
            "wrote {} files to {}",
            bundle.manifest.files.len() + 1,
            a.out_dir.display()
        ),
        json: json!({"command": "run", "out_dir": a.out_dir, "files": bundle.manifest.files}),
    })
}

fn cmd_serve(a: &ServeArgs) -> Result<Outcome, Error> {
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io {
        path: PathBuf::from("<runtime>"),
        source: e,
    })?;
    rt.block_on(objctrl_service::serve(addr, a.ui_dir.clone()))
        .map_err(|e| Error::Io {
            path: PathBuf::from(addr.to_string()),
            source: e,
        })?;
    Ok(Outcome {
        text: "server stopped".into(),
        json: json!({"command": "serve", "stopped": true}),
    })
}

fn dispatch(cmd: &Command) -> Result<Outcome, Error> {
    match cmd {
        Command::Lift(a) => cmd_lift(a),
        Command::Poses(a) => cmd_poses(a),
        Command::Plucker(a) => cmd_plucker(a),
        Command::WarpMask(a) => cmd_warp_mask(a),
        Command::Pyramid(a) => cmd_pyramid(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Swl(a) => cmd_swl(a),
        Command::Preset(a) => cmd_preset(a),
        Command::Objmc(a) => cmd_objmc(a),
        Command::Run(a) => cmd_run(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn error_code(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Io { .. } => ("io", EXIT_IO),
        Error::Format(_) => ("format", EXIT_VALIDATION),
        Error::Validation(_) => ("validation", EXIT_VALIDATION),
        Error::Domain(_) => ("domain", EXIT_VALIDATION),
        Error::Shape(_) => ("shape", EXIT_VALIDATION),
        Error::Unsupported(_) => ("unsupported", EXIT_VALIDATION),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = with_threads(threads_from_env(), || dispatch(&cli.command));
    match result {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                println!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, exit) = error_code(&e);
            if cli.json {
                println!("{}", json!({"error": code, "message": e.to_string()}));
            }
            eprintln!("error: {e}");
            ExitCode::from(exit)
        }
    }
}
