//! Pinhole intrinsics, `[R|t]` extrinsics, pixel/camera transforms, the
//! trajectory-to-pose conversion and per-pixel Plücker embeddings.
//!
//! Pixel coordinates are continuous with the origin at the top-left corner,
//! x to the right and y down; pixel centers sit at integer coordinates.
//! Extrinsics map world points into the camera frame: `c = R·p + t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scalar::Real;
use crate::tensor_io::Tensor;
use crate::trajectory::Trajectory3D;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

/// Tolerance on `RᵀR = I` and `det R = 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

pub(crate) mod linalg {
    use super::{Mat3, Vec3};
    use crate::scalar::Real;

    pub fn identity<T: Real>() -> Mat3<T> {
        let (o, z) = (T::one(), T::zero());
        [[o, z, z], [z, o, z], [z, z, o]]
    }

    pub fn mat_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn mat_t_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
        [
            m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn add<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    pub fn sub<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    pub fn norm<T: Real>(a: &Vec3<T>) -> T {
        (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
    }

    pub fn det<T: Real>(m: &Mat3<T>) -> T {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Pinhole intrinsics `K = [[fx,0,cx],[0,fy,cy],[0,0,1]]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Result<Self> {
        ensure!(
            fx > T::zero() && fy > T::zero(),
            Validation,
            "focal lengths must be positive, got fx={fx} fy={fy}"
        );
        ensure!(
            cx.is_finite() && cy.is_finite(),
            Validation,
            "principal point must be finite"
        );
        Ok(Self { fx, fy, cx, cy })
    }

    /// Rough intrinsics from the frame size alone: `f = max(W, H)`, principal
    /// point at the frame center.
    pub fn from_frame_size(width: usize, height: usize) -> Result<Self> {
        ensure!(
            width >= 1 && height >= 1,
            Validation,
            "frame size must be at least 1x1"
        );
        let f = T::from_usize_lossy(width.max(height));
        let two = T::lit(2.0);
        Self::new(
            f,
            f,
            T::from_usize_lossy(width) / two,
            T::from_usize_lossy(height) / two,
        )
    }

    /// Intrinsics for a grid downsampled by `factor` (all four terms divided).
    pub fn downscaled(&self, factor: T) -> Self {
        Self {
            fx: self.fx / factor,
            fy: self.fy / factor,
            cx: self.cx / factor,
            cy: self.cy / factor,
        }
    }

    /// `K⁻¹·(x, y, 1)ᵀ`.
    #[inline]
    pub fn inverse_ray(&self, x: T, y: T) -> Vec3<T> {
        [(x - self.cx) / self.fx, (y - self.cy) / self.fy, T::one()]
    }
}

pub fn default_intrinsics<T: Real>(width: usize, height: usize) -> Result<Intrinsics<T>> {
    Intrinsics::from_frame_size(width, height)
}

/// World-to-camera extrinsics `[R|t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose<T> {
    rotation: Mat3<T>,
    translation: Vec3<T>,
}

impl<T: Real> CameraPose<T> {
    /// Builds a pose, rejecting matrices that are not proper rotations.
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        ensure!(
            translation.iter().all(|v| v.is_finite()),
            Validation,
            "translation must be finite"
        );
        let tol = T::lit(ROTATION_TOLERANCE);
        for i in 0..3 {
            for j in 0..3 {
                let dot = (0..3).fold(T::zero(), |acc, k| acc + rotation[k][i] * rotation[k][j]);
                let want = if i == j { T::one() } else { T::zero() };
                ensure!(
                    (dot - want).abs() <= tol,
                    Validation,
                    "rotation is not orthonormal: (RᵀR)[{i}][{j}] = {dot}"
                );
            }
        }
        let det = linalg::det(&rotation);
        ensure!(
            (det - T::one()).abs() <= tol,
            Validation,
            "rotation determinant is {det}, expected 1"
        );
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: linalg::identity(),
            translation: [T::zero(); 3],
        }
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self {
            rotation: linalg::identity(),
            translation: t,
        }
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3<T> {
        &self.translation
    }

    pub fn has_identity_rotation(&self) -> bool {
        self.rotation == linalg::identity()
    }

    pub fn is_identity(&self) -> bool {
        self.has_identity_rotation() && self.translation.iter().all(|v| v.is_zero())
    }

    /// Camera center in world coordinates, `-Rᵀt`.
    pub fn center(&self) -> Vec3<T> {
        let c = linalg::mat_t_vec(&self.rotation, &self.translation);
        [-c[0], -c[1], -c[2]]
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vec3<T>) -> Vec3<T> {
        linalg::add(&linalg::mat_vec(&self.rotation, p), &self.translation)
    }

    #[inline]
    pub fn camera_to_world(&self, c: &Vec3<T>) -> Vec3<T> {
        linalg::mat_t_vec(&self.rotation, &linalg::sub(c, &self.translation))
    }
}

/// Rotation by `degrees` about the y axis.
pub fn rotation_y<T: Real>(degrees: T) -> Mat3<T> {
    let (s, c) = degrees.to_radians().sin_cos();
    let (o, z) = (T::one(), T::zero());
    [[c, z, s], [z, o, z], [-s, z, c]]
}

/// Shared intrinsics plus one pose per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence<T> {
    pub intrinsics: Intrinsics<T>,
    frames: Vec<CameraPose<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct PoseFrameJson<T> {
    #[serde(rename = "R")]
    r: [T; 9],
    t: [T; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct PoseFileJson<T> {
    fx: T,
    fy: T,
    cx: T,
    cy: T,
    frames: Vec<PoseFrameJson<T>>,
}

impl<T: Real> PoseSequence<T> {
    pub fn new(intrinsics: Intrinsics<T>, frames: Vec<CameraPose<T>>) -> Result<Self> {
        ensure!(!frames.is_empty(), Validation, "pose sequence needs at least one frame");
        Ok(Self { intrinsics, frames })
    }

    pub fn frames(&self) -> &[CameraPose<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Serialize to the pose JSON document
    /// `{"fx","fy","cx","cy","frames":[{"R":[9],"t":[3]}]}`.
    pub fn to_json(&self) -> String {
        let k = &self.intrinsics;
        let doc = PoseFileJson {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            frames: self
                .frames
                .iter()
                .map(|p| {
                    let r = p.rotation;
                    PoseFrameJson {
                        r: [
                            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0],
                            r[2][1], r[2][2],
                        ],
                        t: p.translation,
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("pose json serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: PoseFileJson<T> =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("pose json: {e}")))?;
        let k = Intrinsics::new(doc.fx, doc.fy, doc.cx, doc.cy)?;
        let frames = doc
            .frames
            .into_iter()
            .map(|f| {
                let r = f.r;
                CameraPose::new(
                    [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
                    f.t,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(k, frames)
    }
}

/// A 3D point; which frame it lives in is given by the producing function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> Vec3<T> {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: Vec3<T>) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Pixel plus depth to camera coordinates: `x = d·(px−cx)/fx`, `y = d·(py−cy)/fy`, `z = d`.
pub fn unproject<T: Real>(px: T, py: T, depth: T, k: &Intrinsics<T>) -> Result<Point3<T>> {
    ensure!(depth > T::zero(), Domain, "depth must be positive, got {depth}");
    Ok(Point3::new(
        depth * (px - k.cx) / k.fx,
        depth * (py - k.cy) / k.fy,
        depth,
    ))
}

/// Camera coordinates to pixel: `px = fx·x/z + cx`, `py = fy·y/z + cy`.
pub fn project<T: Real>(p: &Point3<T>, k: &Intrinsics<T>) -> Result<(T, T)> {
    ensure!(p.z > T::zero(), Domain, "point is behind the camera (z = {})", p.z);
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

pub fn world_to_camera<T: Real>(p: &Point3<T>, pose: &CameraPose<T>) -> Point3<T> {
    Point3::from_array(pose.world_to_camera(&p.to_array()))
}

/// Models object motion as camera motion. Frame 0 is the canonical camera
/// space, every trajectory point is the same world point `C⁰`, rotation is
/// fixed to identity and `tⁱ = Cⁱ − C⁰`.
pub fn trajectory_to_poses<T: Real>(
    traj: &Trajectory3D<T>,
    k: &Intrinsics<T>,
) -> Result<PoseSequence<T>> {
    let cams = traj
        .points()
        .iter()
        .map(|&[x, y, d]| unproject(x, y, d, k))
        .collect::<Result<Vec<_>>>()?;
    let origin = cams[0];
    let frames = cams
        .iter()
        .map(|c| CameraPose::from_translation([c.x - origin.x, c.y - origin.y, c.z - origin.z]))
        .collect();
    PoseSequence::new(*k, frames)
}

/// Switches for the ray direction used in the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluckerOptions {
    /// Direction is `R·K⁻¹·u + t` when set, `R·K⁻¹·u` otherwise.
    pub add_translation: bool,
    /// Unit-normalize the direction before forming the moment.
    pub normalize: bool,
}

impl Default for PluckerOptions {
    fn default() -> Self {
        Self {
            add_translation: true,
            normalize: false,
        }
    }
}

/// `(o × d, d)` for pixel `(x, y)`, with `o = t`.
#[inline]
pub fn plucker_ray<T: Real>(
    pose: &CameraPose<T>,
    k: &Intrinsics<T>,
    x: T,
    y: T,
    opts: PluckerOptions,
) -> [T; 6] {
    let t = pose.translation;
    let mut d = linalg::mat_vec(&pose.rotation, &k.inverse_ray(x, y));
    if opts.add_translation {
        d = linalg::add(&d, &t);
    }
    if opts.normalize {
        let n = linalg::norm(&d);
        if n > T::zero() {
            d = [d[0] / n, d[1] / n, d[2] / n];
        }
    }
    let m = linalg::cross(&t, &d);
    [m[0], m[1], m[2], d[0], d[1], d[2]]
}

/// Dense `[N, 6, H, W]` embedding volume, one frame per pose.
pub fn plucker_volume<T: Real>(
    poses: &PoseSequence<T>,
    width: usize,
    height: usize,
    opts: PluckerOptions,
) -> Result<Tensor> {
    ensure!(
        width >= 1 && height >= 1,
        Validation,
        "plucker grid must be at least 1x1"
    );
    let plane = width * height;
    let k = poses.intrinsics;
    let frames: Vec<Vec<f32>> = poses
        .frames()
        .par_iter()
        .map(|pose| {
            let mut buf = vec![0f32; 6 * plane];
            for y in 0..height {
                for x in 0..width {
                    let ray = plucker_ray(
                        pose,
                        &k,
                        T::from_usize_lossy(x),
                        T::from_usize_lossy(y),
                        opts,
                    );
                    let idx = y * width + x;
                    for (c, v) in ray.iter().enumerate() {
                        buf[c * plane + idx] = v.to_f32_lossy();
                    }
                }
            }
            buf
        })
        .collect();
    Tensor::new(
        vec![poses.len(), 6, height, width],
        frames.into_iter().flatten().collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k(fx: f64, fy: f64, cx: f64, cy: f64) -> Intrinsics<f64> {
        Intrinsics::new(fx, fy, cx, cy).unwrap()
    }

    #[test]
    fn default_intrinsics_rule() {
        let a: Intrinsics<f64> = default_intrinsics(576, 320).unwrap();
        assert_eq!(a, k(576.0, 576.0, 288.0, 160.0));
        let b: Intrinsics<f64> = default_intrinsics(2, 2).unwrap();
        assert_eq!(b, k(2.0, 2.0, 1.0, 1.0));
        let c: Intrinsics<f64> = default_intrinsics(100, 50).unwrap();
        assert_eq!(c, k(100.0, 100.0, 50.0, 25.0));
        assert!(default_intrinsics::<f64>(0, 5).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn unproject_examples() {
        let kk = k(100.0, 100.0, 5.0, 5.0);
        assert_eq!(unproject(5.0, 5.0, 3.0, &kk).unwrap(), Point3::new(0.0, 0.0, 3.0));
        let p = unproject(10.0, 0.0, 1.0, &k(100.0, 100.0, 0.0, 0.0)).unwrap();
        assert_eq!(p, Point3::new(0.1, 0.0, 1.0));
        let p = unproject(10.0, 20.0, 2.0, &kk).unwrap();
        assert_abs_diff_eq!(p.x, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.3, epsilon = 1e-15);
        assert_eq!(p.z, 2.0);
        assert!(matches!(unproject(1.0, 1.0, 0.0, &kk), Err(Error::Domain(_))));
        assert!(unproject(1.0, 1.0, -1.0, &kk).is_err());
    }

    #[test]
    fn project_examples() {
        let kk = k(100.0, 100.0, 5.0, 5.0);
        assert_eq!(project(&Point3::new(0.0, 0.0, 7.0), &kk).unwrap(), (5.0, 5.0));
        let (x, y) = project(&Point3::new(0.1, 0.0, 1.0), &k(100.0, 100.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(x, 10.0, epsilon = 1e-12);
        assert_eq!(y, 0.0);
        assert_eq!(project(&Point3::new(1.0, 1.0, 2.0), &kk).unwrap(), (55.0, 55.0));
        assert!(project(&Point3::new(0.0, 0.0, 0.0), &kk).is_err());
        assert!(project(&Point3::new(0.0, 0.0, -1.0), &kk).is_err());
    }

    #[test]
    fn world_to_camera_examples() {
        let p = Point3::new(0.3, -0.2, 4.0);
        assert_eq!(world_to_camera(&p, &CameraPose::identity()), p);
        let pose = CameraPose::from_translation([1.0, 2.0, 3.0]);
        assert_eq!(
            world_to_camera(&Point3::new(0.0, 0.0, 0.0), &pose),
            Point3::new(1.0, 2.0, 3.0)
        );
        let pose = CameraPose::new(rotation_y(90.0), [0.0; 3]).unwrap();
        let c = world_to_camera(&Point3::new(0.0, 0.0, 1.0), &pose);
        assert_abs_diff_eq!(c.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pose_rejects_non_rotation() {
        let mut r = linalg::identity::<f64>();
        r[0][0] = 1.1;
        assert!(CameraPose::new(r, [0.0; 3]).is_err());
        let reflect = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraPose::new(reflect, [0.0; 3]).is_err());
        assert!(CameraPose::new(rotation_y(33.0), [0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn trajectory_to_poses_examples() {
        let kk = k(100.0, 100.0, 0.0, 0.0);
        let still = Trajectory3D::new(vec![[3.0, 4.0, 2.0]; 5]).unwrap();
        let seq = trajectory_to_poses(&still, &kk).unwrap();
        assert!(seq.frames().iter().all(|p| p.is_identity()));

        let t = Trajectory3D::new(vec![[0.0, 0.0, 1.0], [10.0, 0.0, 1.0]]).unwrap();
        let seq = trajectory_to_poses(&t, &kk).unwrap();
        assert_eq!(seq.frames()[1].translation(), &[0.1, 0.0, 0.0]);
        assert!(seq.frames()[0].is_identity());

        let t = Trajectory3D::new(vec![[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]).unwrap();
        let seq = trajectory_to_poses(&t, &kk).unwrap();
        assert_eq!(seq.frames()[1].translation(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn plucker_examples() {
        let opts = PluckerOptions::default();
        let unit = k(1.0, 1.0, 0.0, 0.0);
        let id = CameraPose::identity();
        assert_eq!(plucker_ray(&id, &unit, 0.0, 0.0, opts), [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let shifted = CameraPose::from_translation([1.0, 0.0, 0.0]);
        assert_eq!(
            plucker_ray(&shifted, &unit, 0.0, 0.0, opts),
            [0.0, -1.0, 0.0, 1.0, 0.0, 1.0]
        );
        let kk = k(100.0, 100.0, 5.0, 5.0);
        assert_eq!(plucker_ray(&id, &kk, 5.0, 5.0, opts), [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn plucker_flags() {
        let unit = k(1.0, 1.0, 0.0, 0.0);
        let shifted = CameraPose::from_translation([1.0, 0.0, 0.0]);
        let conventional = PluckerOptions {
            add_translation: false,
            normalize: false,
        };
        assert_eq!(
            plucker_ray(&shifted, &unit, 0.0, 0.0, conventional),
            [0.0, -1.0, 0.0, 0.0, 0.0, 1.0]
        );
        let unit_dir = PluckerOptions {
            add_translation: true,
            normalize: true,
        };
        let r = plucker_ray(&shifted, &unit, 0.0, 0.0, unit_dir);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(r[3], h, epsilon = 1e-15);
        assert_abs_diff_eq!(r[5], h, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], -h, epsilon = 1e-15);
    }

    #[test]
    fn plucker_volume_layout() {
        let kk = k(2.0, 2.0, 1.0, 1.0);
        let seq = PoseSequence::new(
            kk,
            vec![CameraPose::identity(), CameraPose::from_translation([0.0, 0.5, 0.0])],
        )
        .unwrap();
        let v = plucker_volume(&seq, 3, 2, PluckerOptions::default()).unwrap();
        assert_eq!(v.shape(), &[2, 6, 2, 3]);
        let plane = 6;
        // frame 1, d_z channel is always 1 + t_z = 1
        assert!(v.data()[6 * plane + 5 * plane..7 * plane + 5 * plane]
            .iter()
            .all(|&x| x == 1.0));
        // frame 1, pixel (x=2, y=0): d = ((2-1)/2, (0-1)/2 + 0.5, 1) = (0.5, 0, 1)
        let at = |c: usize| v.data()[6 * plane + c * plane + 2];
        let want = plucker_ray(
            &seq.frames()[1],
            &kk,
            2.0,
            0.0,
            PluckerOptions::default(),
        );
        for c in 0..6 {
            assert_eq!(at(c), want[c] as f32);
        }
        assert_eq!(want[3..], [0.5, 0.0, 1.0]);
    }

    #[test]
    fn pose_json_roundtrip() {
        let seq = PoseSequence::new(
            k(576.0, 576.0, 288.0, 160.0),
            vec![
                CameraPose::identity(),
                CameraPose::new(rotation_y(30.0), [0.25, -1.0, 3.0]).unwrap(),
            ],
        )
        .unwrap();
        let s = seq.to_json();
        assert!(s.contains("\"R\""));
        assert_eq!(PoseSequence::<f64>::from_json(&s).unwrap(), seq);
        assert!(PoseSequence::<f64>::from_json(r#"{"fx":1,"fy":1,"cx":0,"cy":0,"frames":[]}"#)
            .is_err());
    }

    #[test]
    fn scalar_generic_f32() {
        let kk = Intrinsics::<f32>::new(100.0, 100.0, 0.0, 0.0).unwrap();
        let t = Trajectory3D::new(vec![[0.0f32, 0.0, 1.0], [10.0, 0.0, 1.0]]).unwrap();
        let seq = trajectory_to_poses(&t, &kk).unwrap();
        assert_abs_diff_eq!(seq.frames()[1].translation()[0], 0.1f32, epsilon = 1e-7);
    }

    proptest! {
        #[test]
        fn project_unproject_roundtrip(
            px in -50.0f64..700.0, py in -50.0f64..400.0, d in 0.01f64..100.0,
            fx in 10.0f64..2000.0, fy in 10.0f64..2000.0,
            cx in 0.0f64..600.0, cy in 0.0f64..400.0,
        ) {
            let kk = k(fx, fy, cx, cy);
            let (x, y) = project(&unproject(px, py, d, &kk).unwrap(), &kk).unwrap();
            prop_assert!((x - px).abs() < 1e-9 && (y - py).abs() < 1e-9);
        }

        #[test]
        fn world_camera_inverse(
            deg in -180.0f64..180.0, tx in -5.0f64..5.0, tz in -5.0f64..5.0,
            p in prop::array::uniform3(-10.0f64..10.0),
        ) {
            let pose = CameraPose::new(rotation_y(deg), [tx, 0.5, tz]).unwrap();
            let back = pose.camera_to_world(&pose.world_to_camera(&p));
            for i in 0..3 {
                prop_assert!((back[i] - p[i]).abs() < 1e-12);
            }
        }
    }
}
