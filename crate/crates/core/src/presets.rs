//! Hand-authored pose sequences: zoom, pan and orbit.
//!
//! Signs follow the object-motion convention used for trajectory-derived
//! poses: the world point stays fixed and the camera translation equals the
//! object's camera-space displacement. `PanRight` therefore has positive
//! `t_x` and moves the object toward +x in the image, which is the opposite
//! of what "panning the camera right" usually means.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::{linalg, rotation_y, CameraPose, Intrinsics, PoseSequence};
use crate::error::{ensure, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    ZoomIn,
    ZoomOut,
    PanLeft,
    PanRight,
    Orbit,
}

impl FromStr for PresetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zoom_in" => Ok(Self::ZoomIn),
            "zoom_out" => Ok(Self::ZoomOut),
            "pan_left" => Ok(Self::PanLeft),
            "pan_right" => Ok(Self::PanRight),
            "orbit" => Ok(Self::Orbit),
            other => Err(Error::Validation(format!("unknown preset kind '{other}'"))),
        }
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ZoomIn => "zoom_in",
            Self::ZoomOut => "zoom_out",
            Self::PanLeft => "pan_left",
            Self::PanRight => "pan_right",
            Self::Orbit => "orbit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetSpec {
    pub kind: PresetKind,
    /// Scene units for zoom/pan, degrees for orbit.
    pub magnitude: f64,
    pub frames: usize,
    /// Depth of the orbit pivot on the optical axis.
    #[serde(default = "default_pivot")]
    pub pivot_depth: f64,
}

fn default_pivot() -> f64 {
    1.0
}

impl PresetSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.frames >= 2, Validation, "preset needs at least 2 frames");
        ensure!(
            self.magnitude.is_finite(),
            Validation,
            "preset magnitude must be finite"
        );
        if self.kind == PresetKind::Orbit {
            ensure!(
                self.pivot_depth > 0.0 && self.pivot_depth.is_finite(),
                Validation,
                "orbit pivot depth must be positive"
            );
        }
        Ok(())
    }
}

/// Linear per-frame schedule: frame `i` applies `α = i / (N − 1)` of the
/// magnitude, so the last frame hits it exactly.
pub fn preset_poses<T: Real>(spec: &PresetSpec, k: &Intrinsics<T>) -> Result<PoseSequence<T>> {
    spec.validate()?;
    let mag = T::lit(spec.magnitude);
    let last = spec.frames - 1;
    let frames = (0..spec.frames)
        .map(|i| {
            let step = if i == last {
                mag
            } else {
                mag * T::from_usize_lossy(i) / T::from_usize_lossy(last)
            };
            let z = T::zero();
            match spec.kind {
                PresetKind::ZoomIn => Ok(CameraPose::from_translation([z, z, -step])),
                PresetKind::ZoomOut => Ok(CameraPose::from_translation([z, z, step])),
                PresetKind::PanRight => Ok(CameraPose::from_translation([step, z, z])),
                PresetKind::PanLeft => Ok(CameraPose::from_translation([-step, z, z])),
                PresetKind::Orbit => {
                    let r = rotation_y(step);
                    let pivot = [z, z, T::lit(spec.pivot_depth)];
                    let t = linalg::sub(&pivot, &linalg::mat_vec(&r, &pivot));
                    CameraPose::new(r, t)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    PoseSequence::new(*k, frames)
}
