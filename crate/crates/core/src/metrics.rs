//! ObjMC: mean per-frame Euclidean distance between a target trajectory and
//! the trajectory tracked in a generated video. Raw pixels, lower is better.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::scalar::Real;
use crate::tensor_io::read_text;
use crate::trajectory::{resample, Trajectory2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjMcReport {
    pub per_frame: Vec<f64>,
    pub mean: f64,
    pub frames_compared: usize,
}

pub fn objmc<T: Real>(target: &Trajectory2D<T>, tracked: &Trajectory2D<T>) -> Result<ObjMcReport> {
    ensure!(
        target.len() == tracked.len(),
        Validation,
        "target has {} frames, tracked has {}",
        target.len(),
        tracked.len()
    );
    let per_frame: Vec<f64> = target
        .points()
        .iter()
        .zip(tracked.points())
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]).to_f64_lossy())
        .collect();
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(ObjMcReport {
        frames_compared: per_frame.len(),
        per_frame,
        mean,
    })
}

/// Like [`objmc`], first resampling `tracked` to the target's length.
pub fn objmc_resampled<T: Real>(
    target: &Trajectory2D<T>,
    tracked: &Trajectory2D<T>,
) -> Result<ObjMcReport> {
    if target.len() == tracked.len() || target.len() < 2 {
        return objmc(target, tracked);
    }
    objmc(target, &resample(tracked, target.len())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub target: PathBuf,
    pub tracked: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub target: PathBuf,
    pub tracked: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ObjMcReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub pairs: Vec<PairOutcome>,
    /// Unweighted mean of the per-pair means over pairs that succeeded.
    pub mean: f64,
}

fn load_traj(path: &Path) -> Result<Trajectory2D<f64>> {
    Trajectory2D::from_json(&read_text(path)?)
}

/// Scores every pair; unreadable pairs are reported and skipped.
pub fn objmc_batch(pairs: &[TrajectoryPair]) -> Result<BatchReport> {
    ensure!(!pairs.is_empty(), Validation, "empty trajectory pair list");
    let outcomes: Vec<PairOutcome> = pairs
        .iter()
        .map(|p| {
            let result = load_traj(&p.target)
                .and_then(|a| load_traj(&p.tracked).map(|b| (a, b)))
                .and_then(|(a, b)| objmc_resampled(&a, &b));
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            PairOutcome {
                target: p.target.clone(),
                tracked: p.tracked.clone(),
                report,
                error,
            }
        })
        .collect();
    let means: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.report.as_ref().map(|r| r.mean))
        .collect();
    ensure!(!means.is_empty(), Validation, "no trajectory pair could be scored");
    Ok(BatchReport {
        mean: means.iter().sum::<f64>() / means.len() as f64,
        pairs: outcomes,
    })
}
