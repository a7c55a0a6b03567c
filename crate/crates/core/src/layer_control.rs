//! Object/background layer separation: union of warped masks, the scale-wise
//! dilated mask pyramid, masked fusion of per-scale volumes and background
//! pose modes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{plucker_volume, CameraPose, PluckerOptions, PoseSequence};
use crate::error::{ensure, Error, Result};
use crate::scalar::Real;
use crate::tensor_io::{self, Mask, Tensor};

pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_KERNEL: usize = 3;

/// Pixelwise OR of equally sized masks.
pub fn union_mask(masks: &[Mask]) -> Result<Mask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::Validation("union of zero masks".into()))?;
    let mut out = first.data().to_vec();
    for m in &masks[1..] {
        ensure!(
            m.same_dims(first),
            Shape,
            "mask dims {}x{} vs {}x{}",
            m.width(),
            m.height(),
            first.width(),
            first.height()
        );
        for (o, &v) in out.iter_mut().zip(m.data()) {
            *o |= v;
        }
    }
    Mask::new(first.width(), first.height(), out)
}

/// Binary dilation with a centered `kernel x kernel` square.
pub fn dilate(m: &Mask, kernel: usize) -> Result<Mask> {
    ensure!(
        kernel % 2 == 1,
        Validation,
        "dilation kernel must be odd, got {kernel}"
    );
    let r = kernel / 2;
    let (w, h) = (m.width(), m.height());
    if r == 0 {
        return Ok(m.clone());
    }
    // separable: horizontal then vertical running max
    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = (lo..=hi).any(|xx| m.get(xx, y)) as u8;
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|yy| rows[yy * w + x] != 0) as u8;
        }
    }
    Mask::new(w, h, out)
}

/// 2x2 max pooling; odd edges pool over the pixels present.
pub fn maxpool2(m: &Mask) -> Mask {
    let (w, h) = (m.width().div_ceil(2), m.height().div_ceil(2));
    Mask::from_fn(w, h, |x, y| {
        let xs = 2 * x..(2 * x + 2).min(m.width());
        let ys = 2 * y..(2 * y + 2).min(m.height());
        ys.flat_map(|yy| xs.clone().map(move |xx| (xx, yy)))
            .any(|(xx, yy)| m.get(xx, yy))
    })
}

/// Per-scale object masks, level `s` at `ceil(H/2^s) x ceil(W/2^s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPyramid {
    levels: Vec<Mask>,
    kernel: usize,
}

#[derive(Serialize, Deserialize)]
struct PyramidManifest {
    levels: usize,
    kernel: usize,
    files: Vec<String>,
}

impl MaskPyramid {
    pub fn levels(&self) -> &[Mask] {
        &self.levels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Writes `level_<s>.png` per level plus `manifest.json`.
    /// Returns the written file names, manifest last.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<String>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.levels.len());
        for (s, level) in self.levels.iter().enumerate() {
            let name = format!("level_{s}.png");
            tensor_io::save_mask(level, dir.join(&name))?;
            files.push(name);
        }
        let manifest = PyramidManifest {
            levels: self.levels.len(),
            kernel: self.kernel,
            files: files.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        tensor_io::write_bytes(&dir.join("manifest.json"), json.as_bytes())?;
        files.push("manifest.json".into());
        Ok(files)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let raw = tensor_io::read_bytes(&dir.join("manifest.json"))?;
        let manifest: PyramidManifest = serde_json::from_slice(&raw)
            .map_err(|e| Error::Format(format!("pyramid manifest: {e}")))?;
        ensure!(
            manifest.files.len() == manifest.levels && manifest.levels >= 1,
            Format,
            "pyramid manifest lists {} files for {} levels",
            manifest.files.len(),
            manifest.levels
        );
        let levels = manifest
            .files
            .iter()
            .map(|f| tensor_io::load_mask(dir.join(f), tensor_io::DEFAULT_MASK_THRESHOLD))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            levels,
            kernel: manifest.kernel,
        })
    }
}

/// Level 0 dilates the union mask; each further level max-pools the previous
/// level by 2 and dilates again.
pub fn mask_pyramid(union: &Mask, levels: usize, kernel: usize) -> Result<MaskPyramid> {
    ensure!(levels >= 1, Validation, "pyramid needs at least one level");
    let mut out = Vec::with_capacity(levels);
    out.push(dilate(union, kernel)?);
    for s in 1..levels {
        let pooled = maxpool2(&out[s - 1]);
        out.push(dilate(&pooled, kernel)?);
    }
    Ok(MaskPyramid {
        levels: out,
        kernel,
    })
}

/// `f = f_obj ⊙ m + f_bg ⊙ (1 − m)` on `[N, C, h, w]` volumes.
pub fn fuse_volumes(f_obj: &Tensor, f_bg: &Tensor, level_mask: &Mask) -> Result<Tensor> {
    f_obj.expect_rank(4, "object volume")?;
    ensure!(
        f_obj.shape() == f_bg.shape(),
        Shape,
        "object volume {:?} vs background volume {:?}",
        f_obj.shape(),
        f_bg.shape()
    );
    let (h, w) = (f_obj.shape()[2], f_obj.shape()[3]);
    ensure!(
        level_mask.width() == w && level_mask.height() == h,
        Shape,
        "mask {}x{} vs volume {}x{}",
        level_mask.width(),
        level_mask.height(),
        w,
        h
    );
    let plane = w * h;
    let m = level_mask.data();
    let data = f_obj
        .data()
        .iter()
        .zip(f_bg.data())
        .enumerate()
        .map(|(i, (&o, &b))| if m[i % plane] != 0 { o } else { b })
        .collect();
    Tensor::new(f_obj.shape().to_vec(), data)
}

/// How the background layer moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundMode {
    /// `[I|0]` on every frame.
    #[default]
    Static,
    /// Translation opposite to the object's.
    Reversed,
    /// No background control: fused against a zero volume.
    None,
}

impl FromStr for BackgroundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Self::Static),
            "reversed" => Ok(Self::Reversed),
            "none" => Ok(Self::None),
            other => Err(Error::Validation(format!("unknown background mode '{other}'"))),
        }
    }
}

impl fmt::Display for BackgroundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Static => "static",
            Self::Reversed => "reversed",
            Self::None => "none",
        })
    }
}

/// Background poses for `mode`; `None` means the background gets no pose.
pub fn background_poses<T: Real>(
    mode: BackgroundMode,
    obj: &PoseSequence<T>,
) -> Result<Option<PoseSequence<T>>> {
    match mode {
        BackgroundMode::Static => Ok(Some(PoseSequence::new(
            obj.intrinsics,
            vec![CameraPose::identity(); obj.len()],
        )?)),
        BackgroundMode::Reversed => {
            ensure!(
                obj.frames().iter().all(|p| p.has_identity_rotation()),
                Unsupported,
                "reversed background requires translation-only object poses"
            );
            let frames = obj
                .frames()
                .iter()
                .map(|p| {
                    let t = p.translation();
                    CameraPose::from_translation([-t[0], -t[1], -t[2]])
                })
                .collect();
            Ok(Some(PoseSequence::new(obj.intrinsics, frames)?))
        }
        BackgroundMode::None => Ok(None),
    }
}

/// Fused Plücker volume per pyramid scale. Scale `s` uses intrinsics divided
/// by `2^s` on the level-`s` grid.
pub fn build_control_volume<T: Real>(
    obj: &PoseSequence<T>,
    bg_mode: BackgroundMode,
    pyramid: &MaskPyramid,
    width: usize,
    height: usize,
    opts: PluckerOptions,
) -> Result<Vec<Tensor>> {
    let base = &pyramid.levels()[0];
    ensure!(
        base.width() == width && base.height() == height,
        Shape,
        "pyramid level 0 is {}x{} but frame is {}x{}",
        base.width(),
        base.height(),
        width,
        height
    );
    let bg = background_poses(bg_mode, obj)?;
    pyramid
        .levels()
        .par_iter()
        .enumerate()
        .map(|(s, level)| {
            let factor = T::from_usize_lossy(1usize << s);
            let scale_poses = |p: &PoseSequence<T>| {
                PoseSequence::new(p.intrinsics.downscaled(factor), p.frames().to_vec())
            };
            let (w, h) = (level.width(), level.height());
            let f_obj = plucker_volume(&scale_poses(obj)?, w, h, opts)?;
            let f_bg = match &bg {
                Some(b) => plucker_volume(&scale_poses(b)?, w, h, opts)?,
                None => Tensor::zeros(f_obj.shape().to_vec()),
            };
            fuse_volumes(&f_obj, &f_bg, level)
        })
        .collect()
}
