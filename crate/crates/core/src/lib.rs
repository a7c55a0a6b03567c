//! Control-signal toolkit for object-motion video generation: trajectory
//! lifting, camera geometry, forward warping, layered Plücker control,
//! shared warping latents and the ObjMC metric.
//!
//! Geometry is generic over [`Real`] (`f32` or `f64`); the `*64` and `*32`
//! aliases below pin the common choices. Rasters and tensors are always `f32`.

pub mod camera;
pub mod error;
pub mod layer_control;
pub mod metrics;
pub mod pipeline;
pub mod presets;
pub mod scalar;
pub mod swl;
pub mod tensor_io;
pub mod trajectory;
pub mod warp;

pub use camera::{
    default_intrinsics, plucker_ray, plucker_volume, project, trajectory_to_poses, unproject,
    CameraPose, Intrinsics, PluckerOptions, Point3, PoseSequence,
};
pub use error::{Error, Result};
pub use layer_control::{
    build_control_volume, fuse_volumes, mask_pyramid, union_mask, BackgroundMode, MaskPyramid,
};
pub use metrics::{objmc, objmc_batch, ObjMcReport};
pub use pipeline::{run, Guidance, GuidanceSource, RunConfig, RunOptions};
pub use presets::{preset_poses, PresetKind, PresetSpec};
pub use scalar::Real;
pub use swl::{make_swl, LatentVolume, SwlParams};
pub use tensor_io::{DepthMap, Image, Mask, Tensor};
pub use trajectory::{lift, smooth_depths, SmoothingConfig, Trajectory2D, Trajectory3D};
pub use warp::{forward_warp, warp_mask_sequence, WarpResult};

pub type Intrinsics64 = Intrinsics<f64>;
pub type Intrinsics32 = Intrinsics<f32>;
pub type CameraPose64 = CameraPose<f64>;
pub type CameraPose32 = CameraPose<f32>;
pub type PoseSequence64 = PoseSequence<f64>;
pub type PoseSequence32 = PoseSequence<f32>;
pub type Trajectory2D64 = Trajectory2D<f64>;
pub type Trajectory2D32 = Trajectory2D<f32>;
pub type Trajectory3D64 = Trajectory3D<f64>;
pub type Trajectory3D32 = Trajectory3D<f32>;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "OBJCTRL_THREADS";

/// Run `f` on a dedicated pool of `threads` workers (all cores when `None`).
///
/// Results do not depend on the thread count: every parallel stage writes
/// disjoint outputs and reduces in a fixed order.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    match builder.build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Thread cap from [`THREADS_ENV`]; `None` when unset or not a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}
