//! End-to-end orchestration from (image, depth, object mask, guidance) to a
//! bundle of control signals on disk.
//!
//! Bundle layout, all paths relative to the output directory:
//!
//! ```text
//! manifest.json              parameters, input hashes, sha256 of every file below
//! trajectory_3d.json         only for trajectory guidance
//! poses_obj.json
//! poses_bg.json              absent for background mode "none"
//! warped_masks/frame_XX.png
//! union_mask.png
//! mask_pyramid/level_S.png + manifest.json
//! plucker_fused/scale_S.otsr [N, 6, H/2^S, W/2^S]
//! swl.otsr + swl.json        only when the shared warping latent is enabled
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::{default_intrinsics, trajectory_to_poses, Intrinsics, PluckerOptions, PoseSequence};
use crate::error::{ensure, Error, Result};
use crate::layer_control::{
    background_poses, build_control_volume, mask_pyramid, union_mask, BackgroundMode, MaskPyramid,
    DEFAULT_KERNEL, DEFAULT_LEVELS,
};
use crate::presets::{preset_poses, PresetSpec};
use crate::swl::{make_swl, LatentVolume, SwlParams};
use crate::tensor_io::{
    self, load_depth, load_image, load_mask, read_bytes, read_text, write_bytes, DepthMap, Image, Mask,
    Tensor, DEFAULT_MASK_THRESHOLD,
};
use crate::trajectory::{lift, SmoothingConfig, Trajectory2D, Trajectory3D, DEFAULT_FRAMES, DEFAULT_THETA};
use crate::warp::warp_mask_sequence;

/// Where the object motion comes from, as referenced in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GuidanceSource {
    Trajectory2d { path: PathBuf },
    Trajectory3d { path: PathBuf },
    Preset { spec: PresetSpec },
    Poses { path: PathBuf },
}

/// Loaded guidance.
#[derive(Debug, Clone, PartialEq)]
pub enum Guidance {
    Trajectory2d(Trajectory2D<f64>),
    Trajectory3d(Trajectory3D<f64>),
    Preset(PresetSpec),
    Poses(PoseSequence<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub frames: usize,
    pub theta: f64,
    pub normalize: bool,
    pub levels: usize,
    pub kernel: usize,
    pub background: BackgroundMode,
    pub plucker: PluckerOptions,
    pub mask_threshold: u8,
    /// Overrides the intrinsics derived from the frame size (or pose file).
    pub intrinsics: Option<Intrinsics<f64>>,
    /// Shared warping latent; off unless set.
    pub swl: Option<SwlParams>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            frames: DEFAULT_FRAMES,
            theta: DEFAULT_THETA,
            normalize: true,
            levels: DEFAULT_LEVELS,
            kernel: DEFAULT_KERNEL,
            background: BackgroundMode::Static,
            plucker: PluckerOptions::default(),
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            intrinsics: None,
            swl: None,
        }
    }
}

impl RunOptions {
    pub fn smoothing(&self) -> SmoothingConfig<f64> {
        SmoothingConfig {
            theta: self.theta,
            normalize: self.normalize,
        }
    }
}

/// Everything needed to regenerate a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub image: PathBuf,
    pub depth: PathBuf,
    pub mask: PathBuf,
    pub guidance: GuidanceSource,
    #[serde(default)]
    pub options: RunOptions,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("run config: {e}")))
    }

    /// Relative input paths are taken relative to `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let fix = |p: &PathBuf| {
            if p.is_relative() {
                base.join(p)
            } else {
                p.clone()
            }
        };
        let guidance = match &self.guidance {
            GuidanceSource::Trajectory2d { path } => GuidanceSource::Trajectory2d { path: fix(path) },
            GuidanceSource::Trajectory3d { path } => GuidanceSource::Trajectory3d { path: fix(path) },
            GuidanceSource::Poses { path } => GuidanceSource::Poses { path: fix(path) },
            other => other.clone(),
        };
        Self {
            image: fix(&self.image),
            depth: fix(&self.depth),
            mask: fix(&self.mask),
            guidance,
            options: self.options.clone(),
        }
    }
}

/// Rasters shared by every stage.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub image: Image,
    pub depth: DepthMap,
    pub mask: Mask,
}

impl Inputs {
    pub fn new(image: Image, depth: DepthMap, mask: Mask) -> Result<Self> {
        let (w, h) = (image.width(), image.height());
        ensure!(
            depth.width() == w && depth.height() == h,
            Validation,
            "depth is {}x{} but image is {w}x{h}",
            depth.width(),
            depth.height()
        );
        ensure!(
            mask.width() == w && mask.height() == h,
            Validation,
            "mask is {}x{} but image is {w}x{h}",
            mask.width(),
            mask.height()
        );
        Ok(Self { image, depth, mask })
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Object poses (and the lifted trajectory when there was one).
pub fn derive_poses(
    depth: &DepthMap,
    guidance: &Guidance,
    options: &RunOptions,
) -> Result<(Option<Trajectory3D<f64>>, PoseSequence<f64>)> {
    let k = match (options.intrinsics, guidance) {
        (Some(k), _) => k,
        (None, Guidance::Poses(p)) => p.intrinsics,
        (None, _) => default_intrinsics(depth.width(), depth.height())?,
    };
    match guidance {
        Guidance::Trajectory2d(t) => {
            let t3 = lift(t, depth, options.frames, &options.smoothing())?;
            let poses = trajectory_to_poses(&t3, &k)?;
            Ok((Some(t3), poses))
        }
        Guidance::Trajectory3d(t3) => Ok((Some(t3.clone()), trajectory_to_poses(t3, &k)?)),
        Guidance::Preset(spec) => Ok((None, preset_poses(spec, &k)?)),
        Guidance::Poses(p) => Ok((None, PoseSequence::new(k, p.frames().to_vec())?)),
    }
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct Signals {
    pub trajectory: Option<Trajectory3D<f64>>,
    pub poses_obj: PoseSequence<f64>,
    pub poses_bg: Option<PoseSequence<f64>>,
    pub warped_masks: Vec<Mask>,
    pub union: Mask,
    pub pyramid: MaskPyramid,
    pub control: Vec<Tensor>,
    pub swl: Option<LatentVolume>,
}

pub fn compute(inputs: &Inputs, guidance: &Guidance, options: &RunOptions) -> Result<Signals> {
    ensure!(
        !inputs.mask.is_empty(),
        Validation,
        "object mask is empty; the layer control needs an object region"
    );
    let (trajectory, poses_obj) = derive_poses(&inputs.depth, guidance, options)?;
    let poses_bg = background_poses(options.background, &poses_obj)?;
    let warped_masks = warp_mask_sequence(&inputs.mask, &inputs.depth, &poses_obj)?;
    let union = union_mask(&warped_masks)?;
    let pyramid = mask_pyramid(&union, options.levels, options.kernel)?;
    let control = build_control_volume(
        &poses_obj,
        options.background,
        &pyramid,
        inputs.width(),
        inputs.height(),
        options.plucker,
    )?;
    let swl = options
        .swl
        .as_ref()
        .map(|p| make_swl(p, &inputs.depth, &poses_obj, &warped_masks))
        .transpose()?;
    Ok(Signals {
        trajectory,
        poses_obj,
        poses_bg,
        warped_masks,
        union,
        pyramid,
        control,
        swl,
    })
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub config: RunConfig,
    /// sha256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of each emitted file, keyed by bundle-relative path.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ControlBundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub signals: Signals,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `{"seed", "d0", "channels", "downsample", "poses", "masks"}` provenance
/// record written next to a latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwlManifest {
    pub seed: u64,
    pub d0: f64,
    pub channels: usize,
    pub downsample: usize,
    pub poses: String,
    pub masks: String,
}

struct BundleWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl BundleWriter {
    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_bytes(&path, bytes)?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

pub fn load_guidance(src: &GuidanceSource) -> Result<Guidance> {
    let text = |p: &Path| read_text(p);
    Ok(match src {
        GuidanceSource::Trajectory2d { path } => Guidance::Trajectory2d(Trajectory2D::from_json(&text(path)?)?),
        GuidanceSource::Trajectory3d { path } => Guidance::Trajectory3d(Trajectory3D::from_json(&text(path)?)?),
        GuidanceSource::Preset { spec } => Guidance::Preset(*spec),
        GuidanceSource::Poses { path } => Guidance::Poses(PoseSequence::from_json(&text(path)?)?),
    })
}

/// Write every signal of `signals` under `out_dir`.
pub fn write_bundle(
    signals: Signals,
    config: &RunConfig,
    inputs_hashes: BTreeMap<String, String>,
    out_dir: &Path,
) -> Result<ControlBundle> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut w = BundleWriter {
        dir: out_dir.to_path_buf(),
        files: BTreeMap::new(),
    };
    if let Some(t) = &signals.trajectory {
        w.put("trajectory_3d.json", t.to_json().as_bytes())?;
    }
    w.put("poses_obj.json", signals.poses_obj.to_json().as_bytes())?;
    if let Some(bg) = &signals.poses_bg {
        w.put("poses_bg.json", bg.to_json().as_bytes())?;
    }
    for (i, m) in signals.warped_masks.iter().enumerate() {
        w.put(&format!("warped_masks/frame_{i:02}.png"), &m.to_png_bytes()?)?;
    }
    w.put("union_mask.png", &signals.union.to_png_bytes()?)?;
    let pyramid_dir = out_dir.join("mask_pyramid");
    for name in signals.pyramid.save(&pyramid_dir)? {
        let bytes = read_bytes(&pyramid_dir.join(&name))?;
        w.files
            .insert(format!("mask_pyramid/{name}"), sha256_hex(&bytes));
    }
    for (s, v) in signals.control.iter().enumerate() {
        w.put(&format!("plucker_fused/scale_{s}.otsr"), &v.to_otsr_bytes()?)?;
    }
    if let (Some(latent), Some(p)) = (&signals.swl, &config.options.swl) {
        w.put("swl.otsr", &latent.volume.to_otsr_bytes()?)?;
        let prov = SwlManifest {
            seed: p.seed,
            d0: p.d0,
            channels: p.channels,
            downsample: p.downsample,
            poses: "poses_obj.json".into(),
            masks: "warped_masks".into(),
        };
        let json = serde_json::to_string_pretty(&prov).expect("swl manifest serializes");
        w.put("swl.json", json.as_bytes())?;
    }
    let manifest = BundleManifest {
        config: config.clone(),
        inputs: inputs_hashes,
        files: w.files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("bundle manifest serializes");
    write_bytes(&out_dir.join("manifest.json"), json.as_bytes())?;
    Ok(ControlBundle {
        dir: out_dir.to_path_buf(),
        manifest,
        signals,
    })
}

/// Load the inputs named by `config`, compute every signal and write the bundle.
pub fn run(config: &RunConfig, out_dir: impl AsRef<Path>) -> Result<ControlBundle> {
    let threshold = config.options.mask_threshold;
    let image = load_image(&config.image)?;
    let depth = load_depth(&config.depth)?;
    let mask = load_mask(&config.mask, threshold)?;
    let inputs = Inputs::new(image, depth, mask)?;
    let guidance = load_guidance(&config.guidance)?;

    let mut hashes = BTreeMap::new();
    hashes.insert("image".to_string(), sha256_hex(&read_bytes(&config.image)?));
    hashes.insert("depth".to_string(), sha256_hex(&read_bytes(&config.depth)?));
    if !config.depth.to_string_lossy().is_empty() {
        let sidecar = tensor_io::depth_sidecar_path(&config.depth);
        if sidecar.exists() {
            hashes.insert("depth_range".to_string(), sha256_hex(&read_bytes(&sidecar)?));
        }
    }
    hashes.insert("mask".to_string(), sha256_hex(&read_bytes(&config.mask)?));
    match &config.guidance {
        GuidanceSource::Trajectory2d { path }
        | GuidanceSource::Trajectory3d { path }
        | GuidanceSource::Poses { path } => {
            hashes.insert("guidance".to_string(), sha256_hex(&read_bytes(path)?));
        }
        GuidanceSource::Preset { .. } => {}
    }

    let signals = compute(&inputs, &guidance, &config.options)?;
    write_bundle(signals, config, hashes, out_dir.as_ref())
}
