//! Global motion features: rigid palm pose via Kabsch alignment, spherical
//! translation with distance-adaptive amplitude discretization, and the
//! offset/dynamic pose differences built on top of them.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3, SVD};
use thiserror::Error;

use crate::features::FeatureError;
use crate::skeleton::{palm_radius, HandSkeleton, JointLayout, Point3, SkeletonSequence};
use crate::temporal::offset_and_dynamic;

pub const POSE_DIMS: usize = 6;
pub const DEFAULT_LAGS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point set is degenerate (centered rank < 2)")]
    DegenerateInput,
    #[error("point sets differ in size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Canonical palm template (wrist, palm, five finger bases) with the palm
/// joint at the origin and the palm normal along +z.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePalm {
    points: [Point3; 7],
}

impl ReferencePalm {
    pub fn new(points: [Point3; 7]) -> Result<Self, GeometryError> {
        if centered_rank(&points) < 2 {
            return Err(GeometryError::DegenerateInput);
        }
        Ok(Self { points })
    }

    /// Wrist 8 cm below the palm; finger bases on a 4 cm arc at
    /// −40°, −20°, 0°, 20°, 40° from +y (thumb first).
    pub fn canonical() -> Self {
        let mut points = [Point3::zeros(); 7];
        points[0] = Point3::new(0.0, -0.08, 0.0);
        for (k, deg) in [-40.0f64, -20.0, 0.0, 20.0, 40.0].iter().enumerate() {
            let a = deg.to_radians();
            points[2 + k] = Point3::new(0.04 * a.sin(), 0.04 * a.cos(), 0.0);
        }
        Self::new(points).expect("canonical palm is non-degenerate")
    }

    pub fn points(&self) -> &[Point3; 7] {
        &self.points
    }

    pub fn palm(&self) -> Point3 {
        self.points[1]
    }

    pub fn finger_base(&self, finger: usize) -> Point3 {
        self.points[2 + finger]
    }

    /// Palm normal; the template faces +z.
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::z()
    }

    /// Unit direction from the palm joint to a finger base, projected into the palm plane.
    pub fn rest_direction(&self, finger: usize) -> Vector3<f64> {
        let n = self.normal();
        let d = self.finger_base(finger) - self.palm();
        (d - n * d.dot(&n)).normalize()
    }
}

impl Default for ReferencePalm {
    fn default() -> Self {
        Self::canonical()
    }
}

/// `x ↦ rotation · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

fn centered_rank(points: &[Point3]) -> usize {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Point3>() / n;
    let scatter = points
        .iter()
        .map(|p| {
            let q = p - centroid;
            q * q.transpose()
        })
        .sum::<Matrix3<f64>>();
    let mut ev: Vec<f64> = SymmetricEigen::new(scatter).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 {
        0
    } else if ev[1] <= 1e-18 * ev[0] {
        1
    } else if ev[2] <= 1e-18 * ev[0] {
        2
    } else {
        3
    }
}

/// Least-squares rigid transform taking `reference` onto `points`:
/// minimizes `Σ ‖R·refᵢ + t − pᵢ‖²` with `det R = +1`.
pub fn kabsch_align(points: &[Point3], reference: &[Point3]) -> Result<RigidTransform, GeometryError> {
    if points.len() != reference.len() {
        return Err(GeometryError::SizeMismatch(points.len(), reference.len()));
    }
    if points.len() < 3 || centered_rank(points) < 2 || centered_rank(reference) < 2 {
        return Err(GeometryError::DegenerateInput);
    }
    let n = points.len() as f64;
    let c_ref = reference.iter().sum::<Point3>() / n;
    let c_pts = points.iter().sum::<Point3>() / n;
    let h = reference
        .iter()
        .zip(points)
        .map(|(r, p)| (r - c_ref) * (p - c_pts).transpose())
        .sum::<Matrix3<f64>>();
    let svd = SVD::new(h, true, true);
    let u = svd.u.ok_or(GeometryError::DegenerateInput)?;
    let v = svd.v_t.ok_or(GeometryError::DegenerateInput)?.transpose();
    // SVD does not sort singular values; the sign correction belongs on the smallest.
    let smallest = svd.singular_values.imin();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        correction[(smallest, smallest)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: c_pts - rotation * c_ref,
    })
}

/// Euler-angle convention used for `(r_x, r_y, r_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EulerConvention {
    /// Intrinsic x-y'-z'': `R = Rx(r_x)·Ry(r_y)·Rz(r_z)`.
    #[default]
    Xyz,
    /// Intrinsic z-y'-x'': `R = Rz(r_z)·Ry(r_y)·Rx(r_x)`.
    Zyx,
}

impl std::str::FromStr for EulerConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "xyz" => Ok(Self::Xyz),
            "zyx" => Ok(Self::Zyx),
            other => Err(format!("unknown euler convention '{other}' (expected xyz or zyx)")),
        }
    }
}

impl std::fmt::Display for EulerConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Xyz => "xyz",
            Self::Zyx => "zyx",
        })
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn euler_to_rotation(angles: [f64; 3], convention: EulerConvention) -> Matrix3<f64> {
    let [rx, ry, rz] = angles;
    match convention {
        EulerConvention::Xyz => rot_x(rx) * rot_y(ry) * rot_z(rz),
        EulerConvention::Zyx => rot_z(rz) * rot_y(ry) * rot_x(rx),
    }
}

const GIMBAL_EPS: f64 = 1e-9;

fn atan2_half_open(y: f64, x: f64) -> f64 {
    let a = y.atan2(x);
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Decomposes a proper rotation into `[r_x, r_y, r_z]`. Near gimbal lock the
/// last-applied axis angle is set to zero.
pub fn rotation_to_euler(
    r: &Matrix3<f64>,
    convention: EulerConvention,
) -> Result<[f64; 3], GeometryError> {
    let ortho = r.transpose() * r - Matrix3::identity();
    if ortho.amax() > 1e-6 || r.determinant() < 0.0 {
        return Err(GeometryError::NotARotation);
    }
    let angles = match convention {
        EulerConvention::Xyz => {
            let s = r[(0, 2)].clamp(-1.0, 1.0);
            let ry = s.asin();
            if s.abs() > 1.0 - GIMBAL_EPS {
                [atan2_half_open(r[(2, 1)], r[(1, 1)]), ry, 0.0]
            } else {
                [
                    atan2_half_open(-r[(1, 2)], r[(2, 2)]),
                    ry,
                    atan2_half_open(-r[(0, 1)], r[(0, 0)]),
                ]
            }
        }
        EulerConvention::Zyx => {
            let s = (-r[(2, 0)]).clamp(-1.0, 1.0);
            let ry = s.asin();
            if s.abs() > 1.0 - GIMBAL_EPS {
                [atan2_half_open(-r[(1, 2)], r[(1, 1)]), ry, 0.0]
            } else {
                [
                    atan2_half_open(r[(2, 1)], r[(2, 2)]),
                    ry,
                    atan2_half_open(r[(1, 0)], r[(0, 0)]),
                ]
            }
        }
    };
    Ok(angles)
}

/// `(ρ, θ, φ)`: radius, polar angle from +z, azimuth `atan2(y, x)`.
pub fn cartesian_to_spherical(v: &Vector3<f64>) -> (f64, f64, f64) {
    let rho = v.norm();
    if rho == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let theta = (v.z / rho).clamp(-1.0, 1.0).acos();
    let phi = atan2_half_open(v.y, v.x);
    (rho, theta, phi)
}

/// Thresholds for distance-adaptive discretization of the translation radius.
#[derive(Debug, Clone, PartialEq)]
pub struct DadConfig {
    sigma: f64,
    thresholds: Vec<f64>,
}

impl DadConfig {
    pub fn new(bins: usize, sigma: f64) -> Result<Self, GeometryError> {
        Ok(Self {
            sigma,
            thresholds: dad_thresholds(bins, sigma)?,
        })
    }

    pub fn bins(&self) -> usize {
        self.thresholds.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

/// `∫₀^x exp(−u²/2σ²) du` by composite Simpson.
fn gaussian_mass(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let intervals = 2 * ((x / sigma * 256.0).ceil() as usize).max(32);
    let h = x / intervals as f64;
    let g = |u: f64| (-(u * u) / (2.0 * sigma * sigma)).exp();
    let mut acc = g(0.0) + g(x);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(k as f64 * h);
    }
    acc * h / 3.0
}

/// Equal-Gaussian-mass thresholds `η₁ < … < η_M = σ`: each `ηᵢ` carries
/// `i/M` of the kernel mass on `[0, σ]`. Solved by bisection to `1e-9·σ`.
pub fn dad_thresholds(bins: usize, sigma: f64) -> Result<Vec<f64>, GeometryError> {
    if bins < 1 {
        return Err(GeometryError::InvalidConfig("bin count must be at least 1".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(GeometryError::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let total = gaussian_mass(sigma, sigma);
    let tol = 1e-9 * sigma;
    let mut out = Vec::with_capacity(bins);
    for i in 1..bins {
        let target = total * i as f64 / bins as f64;
        let (mut lo, mut hi) = (out.last().copied().unwrap_or(0.0), sigma);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if gaussian_mass(mid, sigma) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out.push(sigma);
    Ok(out)
}

/// 1-based bin: the smallest `i` with `rho ≤ ηᵢ`, clamped to `M`.
pub fn discretize_rho(rho: f64, config: &DadConfig) -> usize {
    config
        .thresholds
        .iter()
        .position(|&eta| rho <= eta)
        .map_or(config.bins(), |i| i + 1)
}

/// Where the translation radius is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TranslationOrigin {
    /// Displacement of the palm pose from its first-frame position.
    #[default]
    FirstFrame,
    /// Raw world/camera coordinates.
    Camera,
}

impl std::str::FromStr for TranslationOrigin {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "first_frame" => Ok(Self::FirstFrame),
            "camera" => Ok(Self::Camera),
            other => Err(format!(
                "unknown translation origin '{other}' (expected first_frame or camera)"
            )),
        }
    }
}

impl std::fmt::Display for TranslationOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FirstFrame => "first_frame",
            Self::Camera => "camera",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    pub bins: usize,
    /// σ = sigma_scale × palm radius of the first frame.
    pub sigma_scale: f64,
    pub lags: Vec<usize>,
    pub euler: EulerConvention,
    pub translation_origin: TranslationOrigin,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            bins: 5,
            sigma_scale: 1.5,
            lags: DEFAULT_LAGS.to_vec(),
            euler: EulerConvention::Xyz,
            translation_origin: TranslationOrigin::FirstFrame,
        }
    }
}

impl GlobalConfig {
    pub fn dims(&self) -> usize {
        POSE_DIMS * (2 + self.lags.len())
    }
}

/// Rigid palm pose of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalPose {
    /// `(r_x, r_y, r_z)` radians.
    pub rotation: [f64; 3],
    /// `(ρ, θ, φ)`.
    pub translation_spherical: (f64, f64, f64),
}

/// Kabsch pose of the palm joints of `frame` against `reference`.
pub fn palm_transform(
    frame: &HandSkeleton,
    layout: &JointLayout,
    reference: &ReferencePalm,
) -> Result<RigidTransform, GeometryError> {
    kabsch_align(&frame.palm_points(layout), reference.points())
}

/// Per-frame global feature `[Φ, Φ_op, Φ_dp...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeatureFrame {
    /// `[ρ_bin, θ, φ, r_x, r_y, r_z]`.
    pub phi: [f64; POSE_DIMS],
    pub phi_op: [f64; POSE_DIMS],
    /// One entry per lag.
    pub phi_dp: Vec<[f64; POSE_DIMS]>,
}

impl GlobalFeatureFrame {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(POSE_DIMS * (2 + self.phi_dp.len()));
        out.extend_from_slice(&self.phi);
        out.extend_from_slice(&self.phi_op);
        for d in &self.phi_dp {
            out.extend_from_slice(d);
        }
        out
    }
}

const PHI_ANGULAR: [bool; POSE_DIMS] = [false, true, true, true, true, true];

pub fn global_features(
    seq: &SkeletonSequence,
    layout: &JointLayout,
    reference: &ReferencePalm,
    config: &GlobalConfig,
) -> Result<Vec<GlobalFeatureFrame>, FeatureError> {
    let first = seq.frames.first().ok_or(FeatureError::EmptySequence)?;
    let radius = palm_radius(first, layout)?;
    let dad = DadConfig::new(config.bins, config.sigma_scale * radius)
        .map_err(|e| FeatureError::Geometry { frame: 0, source: e })?;

    let transforms = seq
        .frames
        .iter()
        .enumerate()
        .map(|(frame, f)| {
            palm_transform(f, layout, reference).map_err(|e| FeatureError::Geometry { frame, source: e })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let origin = match config.translation_origin {
        TranslationOrigin::FirstFrame => transforms[0].translation,
        TranslationOrigin::Camera => Vector3::zeros(),
    };

    let phis = transforms
        .iter()
        .enumerate()
        .map(|(frame, tf)| {
            let [rx, ry, rz] = rotation_to_euler(&tf.rotation, config.euler)
                .map_err(|e| FeatureError::Geometry { frame, source: e })?;
            let (rho, theta, phi) = cartesian_to_spherical(&(tf.translation - origin));
            Ok([discretize_rho(rho, &dad) as f64, theta, phi, rx, ry, rz])
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;

    Ok(offset_and_dynamic(&phis, &config.lags, &PHI_ANGULAR)
        .into_iter()
        .zip(phis)
        .map(|((phi_op, phi_dp), phi)| GlobalFeatureFrame { phi, phi_op, phi_dp })
        .collect())
}
