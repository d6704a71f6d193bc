//! Finger motion features: 20 joint angles from closed-form inverse
//! kinematics in the hand-local frame, plus offset and dynamic poses.

use nalgebra::Vector3;

use crate::features::FeatureError;
use crate::global_motion::{palm_transform, GeometryError, ReferencePalm, RigidTransform};
use crate::skeleton::{HandSkeleton, JointLayout, SkeletonSequence, FINGER_COUNT};
use crate::temporal::offset_and_dynamic;

pub const DOF_PER_FINGER: usize = 4;
pub const FINGER_DOFS: usize = FINGER_COUNT * DOF_PER_FINGER;
pub const DOF_NAMES: [&str; DOF_PER_FINGER] = ["mcp_flex", "mcp_abd", "pip", "dip"];

/// Index of the MCP flexion slot within a finger's four angles.
pub const MCP_FLEX: usize = 0;
pub const MCP_ABD: usize = 1;
pub const PIP: usize = 2;
pub const DIP: usize = 3;

/// Bone segments of a finger chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Proximal,
    Middle,
    Distal,
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Proximal => "proximal",
            Self::Middle => "middle",
            Self::Distal => "distal",
        })
    }
}

/// Per finger (thumb, index, middle, ring, pinky): MCP flexion, MCP
/// abduction, PIP flexion, DIP flexion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FingerAngles(pub [f64; FINGER_DOFS]);

impl FingerAngles {
    pub fn get(&self, finger: usize, dof: usize) -> f64 {
        self.0[finger * DOF_PER_FINGER + dof]
    }

    pub fn set(&mut self, finger: usize, dof: usize, value: f64) {
        self.0[finger * DOF_PER_FINGER + dof] = value;
    }

    pub fn finger(&self, finger: usize) -> [f64; DOF_PER_FINGER] {
        let s = finger * DOF_PER_FINGER;
        [self.0[s], self.0[s + 1], self.0[s + 2], self.0[s + 3]]
    }
}

/// Per-finger axes in the hand-local frame: rest direction `d`, palm normal
/// `n` and lateral axis `l = n × d`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FingerAxes {
    pub d: Vector3<f64>,
    pub n: Vector3<f64>,
    pub l: Vector3<f64>,
}

impl FingerAxes {
    pub fn new(reference: &ReferencePalm, finger: usize) -> Self {
        let d = reference.rest_direction(finger);
        let n = reference.normal();
        Self { d, n, l: n.cross(&d) }
    }

    /// In-palm-plane heading after abduction.
    pub fn heading(&self, abduction: f64) -> Vector3<f64> {
        let (s, c) = abduction.sin_cos();
        self.d * c + self.l * s
    }

    /// Unit bone direction at cumulative flexion `elevation` along `heading`.
    pub fn bone(&self, heading: &Vector3<f64>, elevation: f64) -> Vector3<f64> {
        let (s, c) = elevation.sin_cos();
        heading * c + self.n * s
    }
}

/// World → hand-local transform: inverse of the palm's Kabsch pose, so the
/// palm sits at the origin facing +z.
pub fn hand_local_frame(
    frame: &HandSkeleton,
    layout: &JointLayout,
    reference: &ReferencePalm,
) -> Result<RigidTransform, GeometryError> {
    Ok(palm_transform(frame, layout, reference)?.inverse())
}

pub fn to_local(
    frame: &HandSkeleton,
    layout: &JointLayout,
    reference: &ReferencePalm,
) -> Result<HandSkeleton, GeometryError> {
    let tf = hand_local_frame(frame, layout, reference)?;
    Ok(frame.transformed(|p| tf.apply(p)))
}

fn signed_angle(a: &Vector3<f64>, b: &Vector3<f64>, axis: &Vector3<f64>) -> f64 {
    a.cross(b).dot(axis).atan2(a.dot(b))
}

/// Error raised for a single frame; the caller attaches the frame index.
#[derive(Debug, Clone, PartialEq)]
pub enum IkError {
    Geometry(GeometryError),
    ZeroLengthBone { finger: usize, segment: Segment },
}

impl From<GeometryError> for IkError {
    fn from(e: GeometryError) -> Self {
        Self::Geometry(e)
    }
}

impl std::fmt::Display for IkError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Geometry(e) => write!(f, "{e}"),
            Self::ZeroLengthBone { finger, segment } => {
                write!(f, "zero-length {segment} bone on finger {finger}")
            }
        }
    }
}

impl std::error::Error for IkError {}

/// Joint angles of one frame. Bone lengths are ignored; only directions in
/// the hand-local frame matter.
pub fn inverse_kinematics(
    frame: &HandSkeleton,
    layout: &JointLayout,
    reference: &ReferencePalm,
) -> Result<FingerAngles, IkError> {
    let local = to_local(frame, layout, reference)?;
    let mut angles = FingerAngles::default();
    for (k, joints) in layout.fingers().iter().enumerate() {
        let axes = FingerAxes::new(reference, k);
        let [base, pip, dip, tip] = joints.as_array().map(|i| local.joint(i));
        let bone = |from: Vector3<f64>, to: Vector3<f64>, segment| {
            let v = to - from;
            let len = v.norm();
            if len <= f64::EPSILON {
                Err(IkError::ZeroLengthBone { finger: k, segment })
            } else {
                Ok(v / len)
            }
        };
        let u1 = bone(base, pip, Segment::Proximal)?;
        let u2 = bone(pip, dip, Segment::Middle)?;
        let u3 = bone(dip, tip, Segment::Distal)?;

        let along = u1.dot(&axes.d);
        let side = u1.dot(&axes.l);
        let up = u1.dot(&axes.n);
        let abduction = side.atan2(along);
        let flexion = up.atan2(along.hypot(side));

        let heading = axes.heading(abduction);
        let flex_axis = heading.cross(&axes.n);
        angles.set(k, MCP_FLEX, flexion);
        angles.set(k, MCP_ABD, abduction);
        angles.set(k, PIP, signed_angle(&u1, &u2, &flex_axis));
        angles.set(k, DIP, signed_angle(&u2, &u3, &flex_axis));
    }
    Ok(angles)
}

/// Per-frame finger feature `[Θ, Θ_op, Θ_dp...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerFeatureFrame {
    pub theta: [f64; FINGER_DOFS],
    pub theta_op: [f64; FINGER_DOFS],
    pub theta_dp: Vec<[f64; FINGER_DOFS]>,
}

impl FingerFeatureFrame {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(FINGER_DOFS * (2 + self.theta_dp.len()));
        out.extend_from_slice(&self.theta);
        out.extend_from_slice(&self.theta_op);
        for d in &self.theta_dp {
            out.extend_from_slice(d);
        }
        out
    }
}

pub fn finger_dims(lags: &[usize]) -> usize {
    FINGER_DOFS * (2 + lags.len())
}

pub fn finger_features(
    seq: &SkeletonSequence,
    layout: &JointLayout,
    reference: &ReferencePalm,
    lags: &[usize],
) -> Result<Vec<FingerFeatureFrame>, FeatureError> {
    if seq.frames.is_empty() {
        return Err(FeatureError::EmptySequence);
    }
    let thetas = seq
        .frames
        .iter()
        .enumerate()
        .map(|(frame, f)| {
            inverse_kinematics(f, layout, reference)
                .map(|a| a.0)
                .map_err(|e| FeatureError::from_ik(frame, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(offset_and_dynamic(&thetas, lags, &[true; FINGER_DOFS])
        .into_iter()
        .zip(thetas)
        .map(|((theta_op, theta_dp), theta)| FingerFeatureFrame {
            theta,
            theta_op,
            theta_dp,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{forward_kinematics, GlobalPoseParams, HandTemplate};

    #[test]
    fn canonical_pose_has_identity_local_frame() {
        let template = HandTemplate::default();
        let layout = JointLayout::dhg();
        let tf = hand_local_frame(&template.rest_pose(), &layout, &ReferencePalm::canonical()).unwrap();
        assert!((tf.rotation - nalgebra::Matrix3::identity()).amax() < 1e-12);
        assert!(tf.translation.norm() < 1e-12);
    }

    #[test]
    fn rest_pose_gives_zero_angles() {
        let template = HandTemplate::default();
        let a = inverse_kinematics(&template.rest_pose(), &JointLayout::dhg(), &ReferencePalm::canonical())
            .unwrap();
        assert!(a.0.iter().all(|v| v.abs() < 1e-9), "{a:?}");
    }

    #[test]
    fn single_pip_flexion_is_isolated() {
        let template = HandTemplate::default();
        let mut angles = FingerAngles::default();
        angles.set(1, PIP, std::f64::consts::FRAC_PI_2);
        let frame = forward_kinematics(&template, &GlobalPoseParams::identity(), &angles);
        let a = inverse_kinematics(&frame, &JointLayout::dhg(), &ReferencePalm::canonical()).unwrap();
        for (i, v) in a.0.iter().enumerate() {
            let expected = if i == DOF_PER_FINGER + PIP {
                std::f64::consts::FRAC_PI_2
            } else {
                0.0
            };
            assert!((v - expected).abs() < 1e-9, "slot {i}: {v}");
        }
    }

    #[test]
    fn zero_length_bone_reported() {
        let layout = JointLayout::dhg();
        let mut frame = HandTemplate::default().rest_pose();
        let f = layout.fingers()[3];
        frame.positions[f.dip] = frame.positions[f.pip];
        let err = inverse_kinematics(&frame, &layout, &ReferencePalm::canonical()).unwrap_err();
        assert_eq!(
            err,
            IkError::ZeroLengthBone {
                finger: 3,
                segment: Segment::Middle
            }
        );
    }
}
