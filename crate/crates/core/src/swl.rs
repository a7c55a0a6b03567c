//! Shared warping latent: seeded noise whose object-region, low-frequency
//! content is the frame-0 noise warped along the object poses.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::camera::PoseSequence;
use crate::error::{ensure, Error, Result};
use crate::scalar::Real;
use crate::tensor_io::{DepthMap, Mask, Tensor};
use crate::warp::forward_warp;

pub const DEFAULT_CUTOFF: f64 = 0.25;
pub const DEFAULT_CHANNELS: usize = 4;
pub const DEFAULT_DOWNSAMPLE: usize = 8;

/// Noise volume `[N, C, h, w]` plus the seed it descends from.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVolume {
    pub volume: Tensor,
    pub seed: u64,
}

/// i.i.d. standard normal samples from ChaCha20 seeded with `seed`.
pub fn seeded_noise(seed: u64, n: usize, c: usize, h: usize, w: usize) -> Result<LatentVolume> {
    ensure!(
        n >= 1 && c >= 1 && h >= 1 && w >= 1,
        Validation,
        "latent dims must be >= 1, got [{n}, {c}, {h}, {w}]"
    );
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * c * h * w)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Ok(LatentVolume {
        volume: Tensor::new(vec![n, c, h, w], data)?,
        seed,
    })
}

/// Frame `i` of a `[N, ...]` tensor as its own tensor.
pub fn frame(t: &Tensor, i: usize) -> Result<Tensor> {
    ensure!(t.rank() >= 1 && i < t.shape()[0], Shape, "frame {i} out of range");
    let per: usize = t.shape()[1..].iter().product();
    Tensor::new(t.shape()[1..].to_vec(), t.data()[i * per..(i + 1) * per].to_vec())
}

/// Warp the frame-0 noise `[C, h, w]` to every pose; poses must carry
/// latent-grid intrinsics and `depth` must be at latent resolution.
pub fn warp_noise<T: Real>(
    z0: &Tensor,
    depth: &DepthMap,
    poses: &PoseSequence<T>,
) -> Result<(Tensor, Vec<Mask>)> {
    z0.expect_rank(3, "frame-0 noise")?;
    let src = poses.frames()[0];
    let k = poses.intrinsics;
    let frames = poses
        .frames()
        .par_iter()
        .map(|dst| forward_warp(z0, depth, &src, dst, &k))
        .collect::<Result<Vec<_>>>()?;
    let mut shape = vec![frames.len()];
    shape.extend_from_slice(z0.shape());
    let mut data = Vec::with_capacity(shape.iter().product());
    let mut validity = Vec::with_capacity(frames.len());
    for f in frames {
        data.extend_from_slice(f.warped.data());
        validity.push(f.validity);
    }
    Ok((Tensor::new(shape, data)?, validity))
}

/// `z_L = M ⊙ z_w + (1 − M) ⊙ z` per frame, with `M = mask ∧ validity`.
pub fn blend_masked(
    z: &Tensor,
    z_w: &Tensor,
    masks: &[Mask],
    validity: &[Mask],
) -> Result<Tensor> {
    z.expect_rank(4, "latent")?;
    ensure!(
        z.shape() == z_w.shape(),
        Shape,
        "latent {:?} vs warped latent {:?}",
        z.shape(),
        z_w.shape()
    );
    let [n, c, h, w] = [z.shape()[0], z.shape()[1], z.shape()[2], z.shape()[3]];
    ensure!(
        masks.len() == n && validity.len() == n,
        Shape,
        "{n} frames but {} masks and {} validity maps",
        masks.len(),
        validity.len()
    );
    let plane = h * w;
    let mut out = z.data().to_vec();
    for i in 0..n {
        let gate = masks[i].and(&validity[i])?;
        ensure!(
            gate.width() == w && gate.height() == h,
            Shape,
            "mask {}x{} vs latent {}x{}",
            gate.width(),
            gate.height(),
            w,
            h
        );
        for ch in 0..c {
            let base = (i * c + ch) * plane;
            for (p, &g) in gate.data().iter().enumerate() {
                if g != 0 {
                    out[base + p] = z_w.data()[base + p];
                }
            }
        }
    }
    Tensor::new(z.shape().to_vec(), out)
}

/// DC-centered Gaussian `H = exp(−|f|² / (2·d0²))` over (frame, y, x), each
/// axis normalized to `[−1, 1]`. Shape `[N, 1, h, w]`, `H(DC) = 1`.
pub fn gaussian_lowpass(n: usize, h: usize, w: usize, d0: f64) -> Result<Tensor> {
    ensure!(d0 > 0.0 && d0.is_finite(), Validation, "cutoff must be positive, got {d0}");
    ensure!(n >= 1 && h >= 1 && w >= 1, Validation, "filter dims must be >= 1");
    let axis = |i: usize, len: usize| 2.0 * (i as f64 - (len / 2) as f64) / len as f64;
    let mut data = Vec::with_capacity(n * h * w);
    for t in 0..n {
        let ft = axis(t, n);
        for y in 0..h {
            let fy = axis(y, h);
            for x in 0..w {
                let fx = axis(x, w);
                let r2 = ft * ft + fy * fy + fx * fx;
                data.push((-r2 / (2.0 * d0 * d0)).exp() as f32);
            }
        }
    }
    Tensor::new(vec![n, 1, h, w], data)
}

/// Plans for a 3D transform over `[n, h, w]`.
struct Fft3<T: Real> {
    dims: [usize; 3],
    plans: [Arc<dyn Fft<T>>; 3],
}

impl<T: Real> Fft3<T> {
    fn new(dims: [usize; 3], inverse: bool) -> Self {
        let mut planner = FftPlanner::new();
        let mut plan = |len| {
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        };
        let plans = [plan(dims[0]), plan(dims[1]), plan(dims[2])];
        Self { dims, plans }
    }

    fn process(&self, buf: &mut [Complex<T>]) {
        let [n, h, w] = self.dims;
        // x axis: contiguous rows
        for row in buf.chunks_exact_mut(w) {
            self.plans[2].process(row);
        }
        // y axis
        let mut line = vec![Complex::new(T::zero(), T::zero()); h.max(n)];
        for t in 0..n {
            for x in 0..w {
                for y in 0..h {
                    line[y] = buf[(t * h + y) * w + x];
                }
                self.plans[1].process(&mut line[..h]);
                for y in 0..h {
                    buf[(t * h + y) * w + x] = line[y];
                }
            }
        }
        // frame axis
        for y in 0..h {
            for x in 0..w {
                for t in 0..n {
                    line[t] = buf[(t * h + y) * w + x];
                }
                self.plans[0].process(&mut line[..n]);
                for t in 0..n {
                    buf[(t * h + y) * w + x] = line[t];
                }
            }
        }
    }
}

/// Index into a DC-centered axis for unshifted frequency index `k`.
#[inline]
fn centered(k: usize, len: usize) -> usize {
    (k + len / 2) % len
}

fn channel<T: Real>(t: &Tensor, ch: usize) -> Vec<Complex<T>> {
    let [n, c, h, w] = [t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]];
    let plane = h * w;
    let mut out = Vec::with_capacity(n * plane);
    for i in 0..n {
        let base = (i * c + ch) * plane;
        out.extend(
            t.data()[base..base + plane]
                .iter()
                .map(|&v| Complex::new(T::from_f32_lossy(v), T::zero())),
        );
    }
    out
}

/// `ẑ = IFFT3(FFT3(z_L) ⊙ H + FFT3(z) ⊙ (1 − H))`, per channel over
/// (frame, y, x), real part kept. Fails if the discarded imaginary part
/// exceeds `max(1e-6, 1e3·ε)` in absolute value.
pub fn lowpass_blend<T: Real>(zl: &Tensor, z: &Tensor, filt: &Tensor) -> Result<Tensor> {
    zl.expect_rank(4, "blended latent")?;
    ensure!(
        zl.shape() == z.shape(),
        Shape,
        "blended latent {:?} vs latent {:?}",
        zl.shape(),
        z.shape()
    );
    let [n, c, h, w] = [z.shape()[0], z.shape()[1], z.shape()[2], z.shape()[3]];
    ensure!(
        filt.shape() == [n, 1, h, w],
        Shape,
        "filter {:?} does not match latent {:?}",
        filt.shape(),
        z.shape()
    );
    if zl == z {
        return Ok(z.clone());
    }
    let forward = Fft3::<T>::new([n, h, w], false);
    let inverse = Fft3::<T>::new([n, h, w], true);
    let scale = T::one() / T::from_usize_lossy(n * h * w);
    let tol = T::lit(1e-6).max(T::epsilon() * T::lit(1e3));
    let hd = filt.data();

    let channels = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut a = channel::<T>(zl, ch);
            let mut b = channel::<T>(z, ch);
            forward.process(&mut a);
            forward.process(&mut b);
            for t in 0..n {
                let ts = centered(t, n);
                for y in 0..h {
                    let ys = centered(y, h);
                    for x in 0..w {
                        let xs = centered(x, w);
                        let hv = T::from_f32_lossy(hd[(ts * h + ys) * w + xs]);
                        let i = (t * h + y) * w + x;
                        a[i] = a[i] * hv + b[i] * (T::one() - hv);
                    }
                }
            }
            inverse.process(&mut a);
            let mut worst = T::zero();
            let real: Vec<f32> = a
                .iter()
                .map(|v| {
                    worst = worst.max((v.im * scale).abs());
                    (v.re * scale).to_f32_lossy()
                })
                .collect();
            if worst > tol {
                return Err(Error::Validation(format!(
                    "inverse transform left imaginary residue {worst} on channel {ch}"
                )));
            }
            Ok(real)
        })
        .collect::<Result<Vec<_>>>()?;

    let plane = h * w;
    let mut out = vec![0f32; z.len()];
    for (ch, vals) in channels.iter().enumerate() {
        for i in 0..n {
            let dst = (i * c + ch) * plane;
            out[dst..dst + plane].copy_from_slice(&vals[i * plane..(i + 1) * plane]);
        }
    }
    Tensor::new(z.shape().to_vec(), out)
}

/// Max-pool a full-resolution mask by `factor` (any covered pixel sets the cell).
pub fn downsample_mask(m: &Mask, factor: usize) -> Mask {
    if factor <= 1 {
        return m.clone();
    }
    let (w, h) = (m.width().div_ceil(factor), m.height().div_ceil(factor));
    Mask::from_fn(w, h, |bx, by| {
        (by * factor..((by + 1) * factor).min(m.height())).any(|y| {
            (bx * factor..((bx + 1) * factor).min(m.width())).any(|x| m.get(x, y))
        })
    })
}

/// Latent layout and filter cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwlParams {
    pub seed: u64,
    pub channels: usize,
    /// Full-resolution pixels per latent cell along each axis.
    pub downsample: usize,
    /// Gaussian cutoff in normalized frequency.
    pub d0: f64,
}

impl Default for SwlParams {
    fn default() -> Self {
        Self {
            seed: 0,
            channels: DEFAULT_CHANNELS,
            downsample: DEFAULT_DOWNSAMPLE,
            d0: DEFAULT_CUTOFF,
        }
    }
}

/// Intermediate volumes of [`make_swl`], kept for inspection and tests.
#[derive(Debug, Clone)]
pub struct SwlStages {
    pub noise: LatentVolume,
    pub warped: Tensor,
    pub validity: Vec<Mask>,
    pub latent_masks: Vec<Mask>,
    pub blended: Tensor,
    pub filter: Tensor,
    pub result: LatentVolume,
}

/// Full-resolution depth, poses and warped masks in; latent `ẑ` out.
pub fn make_swl<T: Real>(
    params: &SwlParams,
    depth: &DepthMap,
    poses: &PoseSequence<T>,
    masks: &[Mask],
) -> Result<LatentVolume> {
    Ok(make_swl_stages(params, depth, poses, masks)?.result)
}

pub fn make_swl_stages<T: Real>(
    params: &SwlParams,
    depth: &DepthMap,
    poses: &PoseSequence<T>,
    masks: &[Mask],
) -> Result<SwlStages> {
    ensure!(params.downsample >= 1, Validation, "downsample must be >= 1");
    let n = poses.len();
    ensure!(
        masks.len() == n,
        Shape,
        "{n} poses but {} masks",
        masks.len()
    );
    for m in masks {
        ensure!(
            m.width() == depth.width() && m.height() == depth.height(),
            Shape,
            "mask {}x{} vs depth {}x{}",
            m.width(),
            m.height(),
            depth.width(),
            depth.height()
        );
    }
    let f = params.downsample;
    let latent_depth = depth.avg_pool(f)?;
    let (h, w) = (latent_depth.height(), latent_depth.width());
    let latent_poses = PoseSequence::new(
        poses.intrinsics.downscaled(T::from_usize_lossy(f)),
        poses.frames().to_vec(),
    )?;

    let noise = seeded_noise(params.seed, n, params.channels, h, w)?;
    let z0 = frame(&noise.volume, 0)?;
    let (warped, validity) = warp_noise(&z0, &latent_depth, &latent_poses)?;
    let latent_masks: Vec<Mask> = masks.iter().map(|m| downsample_mask(m, f)).collect();
    let blended = blend_masked(&noise.volume, &warped, &latent_masks, &validity)?;
    let filter = gaussian_lowpass(n, h, w, params.d0)?;
    let result = lowpass_blend::<T>(&blended, &noise.volume, &filter)?;
    Ok(SwlStages {
        result: LatentVolume {
            volume: result,
            seed: params.seed,
        },
        noise,
        warped,
        validity,
        latent_masks,
        blended,
        filter,
    })
}
