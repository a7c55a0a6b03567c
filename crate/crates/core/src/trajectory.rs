//! Lifting a drawn 2D stroke to a per-frame 3D trajectory using a depth map.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scalar::Real;
use crate::tensor_io::DepthMap;

/// Default gradient-std threshold for the depth reset rule.
pub const DEFAULT_THETA: f64 = 0.2;
/// Default number of generated frames.
pub const DEFAULT_FRAMES: usize = 14;

/// Ordered pixel positions `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory2D<T> {
    points: Vec<[T; 2]>,
}

impl<T: Real> Trajectory2D<T> {
    pub fn new(points: Vec<[T; 2]>) -> Result<Self> {
        ensure!(!points.is_empty(), Validation, "trajectory needs at least one point");
        ensure!(
            points.iter().flatten().all(|v| v.is_finite()),
            Validation,
            "trajectory coordinates must be finite"
        );
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[T; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fails unless every point lies in `[0, W) x [0, H)`.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
        for (i, &[x, y]) in self.points.iter().enumerate() {
            ensure!(
                x >= T::zero() && x < w && y >= T::zero() && y < h,
                Domain,
                "trajectory point {i} ({x}, {y}) lies outside the {width}x{height} frame"
            );
        }
        Ok(())
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            points: self.points.iter().map(|&[x, y]| [x + dx, y + dy]).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory json serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: Self =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("trajectory json: {e}")))?;
        Self::new(raw.points)
    }
}

/// Ordered `(x, y, depth)` samples, one per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory3D<T> {
    points: Vec<[T; 3]>,
}

impl<T: Real> Trajectory3D<T> {
    pub fn new(points: Vec<[T; 3]>) -> Result<Self> {
        ensure!(!points.is_empty(), Validation, "trajectory needs at least one point");
        ensure!(
            points.iter().flatten().all(|v| v.is_finite()),
            Validation,
            "trajectory coordinates must be finite"
        );
        if let Some(i) = points.iter().position(|p| p[2] <= T::zero()) {
            return Err(Error::Domain(format!(
                "trajectory depth at point {i} is {}, must be positive",
                points[i][2]
            )));
        }
        Ok(Self { points })
    }

    pub fn from_parts(xy: &Trajectory2D<T>, depths: &[T]) -> Result<Self> {
        ensure!(
            xy.len() == depths.len(),
            Shape,
            "{} points but {} depths",
            xy.len(),
            depths.len()
        );
        Self::new(
            xy.points()
                .iter()
                .zip(depths)
                .map(|(&[x, y], &d)| [x, y, d])
                .collect(),
        )
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xy(&self) -> Trajectory2D<T> {
        Trajectory2D {
            points: self.points.iter().map(|&[x, y, _]| [x, y]).collect(),
        }
    }

    pub fn depths(&self) -> Vec<T> {
        self.points.iter().map(|p| p[2]).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory json serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: Self =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("trajectory json: {e}")))?;
        Self::new(raw.points)
    }
}

/// Depth reset rule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SmoothingConfig<T> {
    /// Threshold on the population std of consecutive depth differences.
    pub theta: T,
    /// Measure the differences on depths divided by a reference maximum.
    pub normalize: bool,
}

impl<T: Real> Default for SmoothingConfig<T> {
    fn default() -> Self {
        Self {
            theta: T::lit(DEFAULT_THETA),
            normalize: true,
        }
    }
}

impl<T: Real> SmoothingConfig<T> {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.theta > T::zero() && self.theta.is_finite(),
            Validation,
            "theta must be positive, got {}",
            self.theta
        );
        Ok(())
    }
}

/// Resample a stroke to exactly `n` points evenly spaced in arc length.
/// Endpoints are kept exactly; a stroke with zero length yields `n` copies of
/// its first point.
pub fn resample<T: Real>(traj: &Trajectory2D<T>, n: usize) -> Result<Trajectory2D<T>> {
    ensure!(n >= 2, Validation, "resample needs n >= 2, got {n}");
    let pts = traj.points();
    let first = pts[0];
    let mut cumulative = Vec::with_capacity(pts.len());
    cumulative.push(T::zero());
    for w in pts.windows(2) {
        let seg = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        let last = *cumulative.last().unwrap();
        cumulative.push(last + seg);
    }
    let total = *cumulative.last().unwrap();
    if total.is_zero() {
        return Trajectory2D::new(vec![first; n]);
    }
    let last_pt = *pts.last().unwrap();
    let denom = T::from_usize_lossy(n - 1);
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for i in 0..n {
        if i == 0 {
            out.push(first);
            continue;
        }
        if i == n - 1 {
            out.push(last_pt);
            continue;
        }
        let target = total * T::from_usize_lossy(i) / denom;
        while seg + 1 < pts.len() - 1 && cumulative[seg + 1] < target {
            seg += 1;
        }
        // skip zero-length segments so the interpolation denominator is nonzero
        while seg + 1 < pts.len() - 1 && cumulative[seg + 1] == cumulative[seg] {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let (a, b) = (pts[seg], pts[seg + 1]);
        if len.is_zero() {
            out.push(a);
            continue;
        }
        let off = target - cumulative[seg];
        out.push([
            a[0] + (b[0] - a[0]) * off / len,
            a[1] + (b[1] - a[1]) * off / len,
        ]);
    }
    Trajectory2D::new(out)
}

/// Nearest integer pixel of a continuous in-bounds coordinate.
#[inline]
pub fn nearest_pixel<T: Real>(x: T, y: T, width: usize, height: usize) -> (usize, usize) {
    let xi = x.round().to_usize().unwrap_or(0).min(width - 1);
    let yi = y.round().to_usize().unwrap_or(0).min(height - 1);
    (xi, yi)
}

/// Depth at the nearest pixel of every trajectory point.
pub fn sample_depth<T: Real>(traj: &Trajectory2D<T>, depth: &DepthMap) -> Result<Vec<T>> {
    traj.check_bounds(depth.width(), depth.height())?;
    Ok(traj
        .points()
        .iter()
        .map(|&[x, y]| {
            let (xi, yi) = nearest_pixel(x, y, depth.width(), depth.height());
            T::from_f32_lossy(depth.get(xi, yi))
        })
        .collect())
}

/// Population standard deviation of consecutive differences.
pub fn gradient_std<T: Real>(ds: &[T]) -> T {
    if ds.len() < 2 {
        return T::zero();
    }
    let grads: Vec<T> = ds.windows(2).map(|w| w[1] - w[0]).collect();
    let n = T::from_usize_lossy(grads.len());
    let mean = grads.iter().fold(T::zero(), |a, &g| a + g) / n;
    let var = grads
        .iter()
        .fold(T::zero(), |a, &g| a + (g - mean) * (g - mean))
        / n;
    var.sqrt()
}

/// Depth reset rule with normalization by the list's own maximum.
pub fn smooth_depths<T: Real>(ds: &[T], cfg: &SmoothingConfig<T>) -> Result<Vec<T>> {
    let reference = ds.iter().copied().fold(T::zero(), T::max);
    smooth_depths_with_reference(ds, cfg, reference)
}

/// Depth reset rule: if the std of consecutive differences exceeds `theta`,
/// every depth becomes the first depth; otherwise the list is returned as is.
/// With `cfg.normalize` the differences are measured on `d / reference_max`.
pub fn smooth_depths_with_reference<T: Real>(
    ds: &[T],
    cfg: &SmoothingConfig<T>,
    reference_max: T,
) -> Result<Vec<T>> {
    cfg.validate()?;
    if let Some(d) = ds.iter().find(|d| !(**d > T::zero()) || !d.is_finite()) {
        return Err(Error::Domain(format!("depths must be positive, found {d}")));
    }
    if ds.len() < 2 {
        return Ok(ds.to_vec());
    }
    let std = if cfg.normalize {
        ensure!(
            reference_max > T::zero(),
            Domain,
            "normalization reference must be positive"
        );
        let scaled: Vec<T> = ds.iter().map(|&d| d / reference_max).collect();
        gradient_std(&scaled)
    } else {
        gradient_std(ds)
    };
    if std > cfg.theta {
        Ok(vec![ds[0]; ds.len()])
    } else {
        Ok(ds.to_vec())
    }
}

/// Resample to `n` frames, look up depths and apply the reset rule
/// (normalized by the depth map's maximum).
pub fn lift<T: Real>(
    traj: &Trajectory2D<T>,
    depth: &DepthMap,
    n: usize,
    cfg: &SmoothingConfig<T>,
) -> Result<Trajectory3D<T>> {
    traj.check_bounds(depth.width(), depth.height())?;
    let xy = resample(traj, n)?;
    let raw = sample_depth(&xy, depth)?;
    let reference = T::from_f32_lossy(depth.max());
    let ds = smooth_depths_with_reference(&raw, cfg, reference)?;
    Trajectory3D::from_parts(&xy, &ds)
}
