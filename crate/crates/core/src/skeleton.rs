//! Hand skeleton data types, joint layout and the skeleton-branch preprocessing.

use nalgebra::Vector3;
use thiserror::Error;

pub type Point3 = Vector3<f64>;

pub const FINGER_COUNT: usize = 5;
pub const FINGER_NAMES: [&str; FINGER_COUNT] = ["thumb", "index", "middle", "ring", "pinky"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("frame {frame}: expected {expected} joints, found {found}")]
    WrongJointCount {
        frame: usize,
        found: usize,
        expected: usize,
    },
    #[error("frame {frame}: joint {joint} has a non-finite coordinate")]
    NonFiniteCoordinate { frame: usize, joint: usize },
    #[error("palm is degenerate: every finger base coincides with the palm joint")]
    DegeneratePalm,
    #[error("sequence has zero amplitude around the first-frame palm")]
    ZeroAmplitude,
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("invalid joint layout: {0}")]
    InvalidLayout(String),
    #[error("invalid gesture label: {0}")]
    InvalidLabel(String),
}

/// Joint indices of one finger chain, from the knuckle outwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FingerJoints {
    pub base: usize,
    pub pip: usize,
    pub dip: usize,
    pub tip: usize,
}

impl FingerJoints {
    pub fn as_array(&self) -> [usize; 4] {
        [self.base, self.pip, self.dip, self.tip]
    }
}

/// Maps semantic joints onto indices of a flat joint array.
///
/// Fingers are ordered thumb, index, middle, ring, pinky.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointLayout {
    joint_count: usize,
    wrist: usize,
    palm: usize,
    fingers: [FingerJoints; FINGER_COUNT],
}

impl JointLayout {
    pub fn new(
        joint_count: usize,
        wrist: usize,
        palm: usize,
        fingers: [FingerJoints; FINGER_COUNT],
    ) -> Result<Self, SkeletonError> {
        if joint_count == 0 {
            return Err(SkeletonError::InvalidLayout("joint_count must be positive".into()));
        }
        let mut seen = vec![false; joint_count];
        let all = [wrist, palm]
            .into_iter()
            .chain(fingers.iter().flat_map(|f| f.as_array()));
        for idx in all {
            if idx >= joint_count {
                return Err(SkeletonError::InvalidLayout(format!(
                    "joint index {idx} out of range for {joint_count} joints"
                )));
            }
            if seen[idx] {
                return Err(SkeletonError::InvalidLayout(format!("joint index {idx} used twice")));
            }
            seen[idx] = true;
        }
        if joint_count == 22 && seen.iter().any(|s| !s) {
            return Err(SkeletonError::InvalidLayout(
                "a 22-joint layout must account for every joint".into(),
            ));
        }
        Ok(Self {
            joint_count,
            wrist,
            palm,
            fingers,
        })
    }

    /// The 22-joint DHG-14/28 layout: wrist, palm, then base/PIP/DIP/tip for
    /// thumb, index, middle, ring and pinky.
    pub fn dhg() -> Self {
        let finger = |k: usize| FingerJoints {
            base: 2 + 4 * k,
            pip: 3 + 4 * k,
            dip: 4 + 4 * k,
            tip: 5 + 4 * k,
        };
        Self::new(22, 0, 1, [finger(0), finger(1), finger(2), finger(3), finger(4)])
            .expect("DHG layout is valid")
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn wrist(&self) -> usize {
        self.wrist
    }

    pub fn palm(&self) -> usize {
        self.palm
    }

    pub fn fingers(&self) -> &[FingerJoints; FINGER_COUNT] {
        &self.fingers
    }

    /// Wrist, palm and the five finger bases, in that order.
    pub fn palm_joints(&self) -> [usize; 7] {
        let f = &self.fingers;
        [
            self.wrist, self.palm, f[0].base, f[1].base, f[2].base, f[3].base, f[4].base,
        ]
    }
}

impl Default for JointLayout {
    fn default() -> Self {
        Self::dhg()
    }
}

/// One frame: joint positions in meters, world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HandSkeleton {
    pub positions: Vec<Point3>,
}

impl HandSkeleton {
    pub fn new(positions: Vec<Point3>) -> Self {
        Self { positions }
    }

    pub fn from_flat(values: &[f64]) -> Self {
        let positions = values
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        Self { positions }
    }

    pub fn joint(&self, index: usize) -> Point3 {
        self.positions[index]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Palm-plane joints (wrist, palm, finger bases) in layout order.
    pub fn palm_points(&self, layout: &JointLayout) -> [Point3; 7] {
        layout.palm_joints().map(|i| self.positions[i])
    }

    pub fn transformed(&self, f: impl FnMut(&Point3) -> Point3) -> Self {
        Self {
            positions: self.positions.iter().map(f).collect(),
        }
    }
}

/// 14 gestures × 2 finger configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GestureLabel {
    gesture_14: u8,
    finger_config: u8,
}

impl GestureLabel {
    pub fn new(gesture_14: u8, finger_config: u8) -> Result<Self, SkeletonError> {
        if !(1..=14).contains(&gesture_14) {
            return Err(SkeletonError::InvalidLabel(format!("gesture {gesture_14} not in 1..=14")));
        }
        if !(1..=2).contains(&finger_config) {
            return Err(SkeletonError::InvalidLabel(format!(
                "finger configuration {finger_config} not in 1..=2"
            )));
        }
        Ok(Self {
            gesture_14,
            finger_config,
        })
    }

    pub fn from_gesture_28(label: u8) -> Result<Self, SkeletonError> {
        if !(1..=28).contains(&label) {
            return Err(SkeletonError::InvalidLabel(format!("label {label} not in 1..=28")));
        }
        Self::new((label - 1) / 2 + 1, (label - 1) % 2 + 1)
    }

    pub fn gesture_14(&self) -> u8 {
        self.gesture_14
    }

    pub fn finger_config(&self) -> u8 {
        self.finger_config
    }

    /// `2·(gesture − 1) + finger`, in 1..=28.
    pub fn gesture_28(&self) -> u8 {
        2 * (self.gesture_14 - 1) + self.finger_config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SequenceMeta {
    pub subject: u32,
    pub gesture: u32,
    pub finger: u32,
    pub trial: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Vec<HandSkeleton>,
    pub meta: SequenceMeta,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<HandSkeleton>, meta: SequenceMeta) -> Self {
        Self { frames, meta }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Checks joint counts and finiteness; reports the first offending frame (0-based).
pub fn validate_sequence(
    seq: SkeletonSequence,
    layout: &JointLayout,
) -> Result<SkeletonSequence, SkeletonError> {
    if seq.frames.is_empty() {
        return Err(SkeletonError::EmptySequence);
    }
    for (frame, skel) in seq.frames.iter().enumerate() {
        if skel.len() != layout.joint_count() {
            return Err(SkeletonError::WrongJointCount {
                frame,
                found: skel.len(),
                expected: layout.joint_count(),
            });
        }
        if let Some(joint) = skel
            .positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(SkeletonError::NonFiniteCoordinate { frame, joint });
        }
    }
    Ok(seq)
}

/// Mean distance from the palm joint to the five finger bases.
pub fn palm_radius(frame: &HandSkeleton, layout: &JointLayout) -> Result<f64, SkeletonError> {
    let palm = frame.joint(layout.palm());
    let total: f64 = layout
        .fingers()
        .iter()
        .map(|f| (frame.joint(f.base) - palm).norm())
        .sum();
    let radius = total / FINGER_COUNT as f64;
    if radius > 0.0 {
        Ok(radius)
    } else {
        Err(SkeletonError::DegeneratePalm)
    }
}

/// Skeleton-branch input: positions relative to the first-frame palm, scaled
/// so the largest joint norm over the whole sequence is 1, flattened to
/// `x y z` per joint.
pub fn normalize_skeleton_branch(
    seq: &SkeletonSequence,
    layout: &JointLayout,
) -> Result<Vec<Vec<f64>>, SkeletonError> {
    let first = seq.frames.first().ok_or(SkeletonError::EmptySequence)?;
    let origin = first.joint(layout.palm());
    let amplitude = seq
        .frames
        .iter()
        .flat_map(|f| f.positions.iter())
        .map(|p| (p - origin).norm())
        .fold(0.0_f64, f64::max);
    if amplitude <= 0.0 {
        return Err(SkeletonError::ZeroAmplitude);
    }
    Ok(seq
        .frames
        .iter()
        .map(|f| {
            f.positions
                .iter()
                .flat_map(|p| {
                    let q = (p - origin) / amplitude;
                    [q.x, q.y, q.z]
                })
                .collect()
        })
        .collect())
}
