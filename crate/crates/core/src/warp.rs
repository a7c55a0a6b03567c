//! Depth-based forward warping (point splatting with a z-buffer).
//!
//! Each source pixel is unprojected with its depth under the source pose,
//! moved into the destination camera, projected and rounded to the nearest
//! pixel. When several sources land on one destination the smallest
//! destination z wins, ties going to the smaller row-major source index, so
//! the result does not depend on evaluation order. Holes stay invalid.

use rayon::prelude::*;

use crate::camera::{CameraPose, Intrinsics, PoseSequence};
use crate::error::{ensure, Result};
use crate::scalar::Real;
use crate::tensor_io::{DepthMap, Mask, Tensor};

/// Warped grid plus the pixels that received a splat.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    /// Same `[C, H, W]` shape as the input; zero where `validity` is 0.
    pub warped: Tensor,
    pub validity: Mask,
}

/// Threshold applied when turning a warped mask back into a binary mask.
pub const MASK_REBINARIZE: f32 = 0.5;

/// Marks a source pixel that lands nowhere.
const NO_TARGET: u32 = u32::MAX;

/// `round()` with ties away from zero for `v > -0.5`, without a libm call.
#[inline]
fn round_nonneg<T: Real>(v: T) -> Option<usize> {
    let i = v.to_i64()?;
    let frac = v - T::from_i64(i)?;
    let r = if frac >= T::lit(0.5) { i + 1 } else { i };
    usize::try_from(r).ok()
}

/// For every source pixel, its destination pixel index and camera depth, or
/// [`NO_TARGET`] when it lands behind the camera, outside the frame, or has
/// no depth.
fn splat_targets<T: Real>(
    depth: &DepthMap,
    src: &CameraPose<T>,
    dst: &CameraPose<T>,
    k: &Intrinsics<T>,
) -> Vec<(u32, T)> {
    let (w, h) = (depth.width(), depth.height());
    let (wf, hf) = (T::from_usize_lossy(w), T::from_usize_lossy(h));
    let half = T::lit(0.5);
    // pure translations skip the two matrix products; the result is the same
    // bit for bit since multiplying by an identity rotation is exact
    let translate_only = src.has_identity_rotation() && dst.has_identity_rotation();
    let (ts, td) = (*src.translation(), *dst.translation());
    let mut out = vec![(NO_TARGET, T::zero()); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let yf = T::from_usize_lossy(y);
        let depths = &depth.data()[y * w..(y + 1) * w];
        for (x, (slot, &dv)) in row.iter_mut().zip(depths).enumerate() {
            let d = T::from_f32_lossy(dv);
            if !(d > T::zero()) {
                continue;
            }
            let xf = T::from_usize_lossy(x);
            let cam = [d * (xf - k.cx) / k.fx, d * (yf - k.cy) / k.fy, d];
            let c = if translate_only {
                [
                    cam[0] - ts[0] + td[0],
                    cam[1] - ts[1] + td[1],
                    cam[2] - ts[2] + td[2],
                ]
            } else {
                dst.world_to_camera(&src.camera_to_world(&cam))
            };
            if !(c[2] > T::zero()) {
                continue;
            }
            let u = k.fx * c[0] / c[2] + k.cx;
            let v = k.fy * c[1] / c[2] + k.cy;
            // nearest pixel (ties away from zero) is in frame iff the
            // coordinate is in (-0.5, size - 0.5)
            if !(u > -half && u < wf - half && v > -half && v < hf - half) {
                continue;
            }
            let (Some(ui), Some(vi)) = (round_nonneg(u), round_nonneg(v)) else {
                continue;
            };
            *slot = ((vi.min(h - 1) * w + ui.min(w - 1)) as u32, c[2]);
        }
    });
    out
}

/// Winning source index per destination pixel ([`NO_TARGET`] for holes).
fn zbuffer<T: Real>(targets: &[(u32, T)], pixels: usize) -> Vec<u32> {
    let mut best_z = vec![T::zero(); pixels];
    let mut best_src = vec![NO_TARGET; pixels];
    // sources arrive in increasing index order, so keeping the incumbent on
    // equal depth gives ties to the smaller source index
    for (src, &(dst, z)) in targets.iter().enumerate() {
        if dst == NO_TARGET {
            continue;
        }
        let d = dst as usize;
        if best_src[d] == NO_TARGET || z < best_z[d] {
            best_z[d] = z;
            best_src[d] = src as u32;
        }
    }
    best_src
}

/// Forward-warp a `[C, H, W]` grid from `src` to `dst`.
pub fn forward_warp<T: Real>(
    grid: &Tensor,
    depth: &DepthMap,
    src: &CameraPose<T>,
    dst: &CameraPose<T>,
    k: &Intrinsics<T>,
) -> Result<WarpResult> {
    grid.expect_rank(3, "warp grid")?;
    let (c, h, w) = (grid.shape()[0], grid.shape()[1], grid.shape()[2]);
    ensure!(
        depth.width() == w && depth.height() == h,
        Shape,
        "depth is {}x{} but grid is {}x{}",
        depth.width(),
        depth.height(),
        w,
        h
    );
    let plane = w * h;
    ensure!(plane < NO_TARGET as usize, Shape, "grid too large: {w}x{h}");
    let winners = zbuffer(&splat_targets(depth, src, dst, k), plane);
    let mut out = vec![0f32; grid.len()];
    let mut valid = vec![0u8; plane];
    let data = grid.data();
    for (dst_idx, &win) in winners.iter().enumerate() {
        if win != NO_TARGET {
            let src_idx = win as usize;
            valid[dst_idx] = 1;
            for ch in 0..c {
                out[ch * plane + dst_idx] = data[ch * plane + src_idx];
            }
        }
    }
    Ok(WarpResult {
        warped: Tensor::new(vec![c, h, w], out)?,
        validity: Mask::new(w, h, valid)?,
    })
}

pub fn mask_to_grid(m: &Mask) -> Tensor {
    Tensor::new(
        vec![1, m.height(), m.width()],
        m.data().iter().map(|&v| v as f32).collect(),
    )
    .expect("mask dims are consistent")
}

/// Warp the frame-0 object mask to every frame of `poses`, re-binarized.
pub fn warp_mask_sequence<T: Real>(
    m0: &Mask,
    depth: &DepthMap,
    poses: &PoseSequence<T>,
) -> Result<Vec<Mask>> {
    let grid = mask_to_grid(m0);
    let src = poses.frames()[0];
    let k = poses.intrinsics;
    poses
        .frames()
        .par_iter()
        .map(|dst| {
            let r = forward_warp(&grid, depth, &src, dst, &k)?;
            let data = r
                .warped
                .data()
                .iter()
                .map(|&v| (v >= MASK_REBINARIZE) as u8)
                .collect();
            Mask::new(m0.width(), m0.height(), data)
        })
        .collect()
}
