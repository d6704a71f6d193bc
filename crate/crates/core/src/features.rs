//! The three per-frame input streams of the classifier.

use thiserror::Error;

use crate::finger_motion::{finger_dims, finger_features, IkError, Segment};
use crate::global_motion::{global_features, GeometryError, GlobalConfig, ReferencePalm};
use crate::skeleton::{
    normalize_skeleton_branch, JointLayout, SequenceMeta, SkeletonError, SkeletonSequence,
};
use crate::tensor::Tensor2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("sequence has no frames")]
    EmptySequence,
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error("frame {frame}: {source}")]
    Geometry { frame: usize, source: GeometryError },
    #[error("frame {frame}: zero-length {segment} bone on finger {finger}")]
    ZeroLengthBone {
        frame: usize,
        finger: usize,
        segment: Segment,
    },
}

impl FeatureError {
    pub(crate) fn from_ik(frame: usize, e: IkError) -> Self {
        match e {
            IkError::Geometry(source) => Self::Geometry { frame, source },
            IkError::ZeroLengthBone { finger, segment } => Self::ZeroLengthBone {
                frame,
                finger,
                segment,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Global,
    Finger,
    Skeleton,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [Self::Global, Self::Finger, Self::Skeleton];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::Finger => "finger",
            Self::Skeleton => "skeleton",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "global" => Ok(Self::Global),
            "finger" => Ok(Self::Finger),
            "skeleton" => Ok(Self::Skeleton),
            other => Err(format!(
                "unknown feature kind '{other}' (expected global, finger or skeleton)"
            )),
        }
    }
}

/// Everything needed to turn a skeleton sequence into feature streams.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extractor {
    pub layout: JointLayout,
    pub reference: ReferencePalm,
    pub global: GlobalConfig,
}

impl Extractor {
    pub fn dims(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::Global => self.global.dims(),
            FeatureKind::Finger => finger_dims(&self.global.lags),
            FeatureKind::Skeleton => 3 * self.layout.joint_count(),
        }
    }

    pub fn extract(&self, seq: &SkeletonSequence, kind: FeatureKind) -> Result<Tensor2, FeatureError> {
        let rows: Vec<Vec<f64>> = match kind {
            FeatureKind::Global => global_features(seq, &self.layout, &self.reference, &self.global)?
                .iter()
                .map(|f| f.to_vec())
                .collect(),
            FeatureKind::Finger => {
                finger_features(seq, &self.layout, &self.reference, &self.global.lags)?
                    .iter()
                    .map(|f| f.to_vec())
                    .collect()
            }
            FeatureKind::Skeleton => normalize_skeleton_branch(seq, &self.layout)?,
        };
        Ok(Tensor2::from_rows(&rows).expect("feature rows have a fixed width"))
    }

    pub fn extract_all(&self, seq: &SkeletonSequence) -> Result<SequenceFeatures, FeatureError> {
        Ok(SequenceFeatures {
            meta: seq.meta,
            global: self.extract(seq, FeatureKind::Global)?,
            finger: self.extract(seq, FeatureKind::Finger)?,
            skeleton: self.extract(seq, FeatureKind::Skeleton)?,
        })
    }
}

/// Global, finger and skeleton streams of one sequence, each `T × dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    pub meta: SequenceMeta,
    pub global: Tensor2,
    pub finger: Tensor2,
    pub skeleton: Tensor2,
}

impl SequenceFeatures {
    pub fn stream(&self, kind: FeatureKind) -> &Tensor2 {
        match kind {
            FeatureKind::Global => &self.global,
            FeatureKind::Finger => &self.finger,
            FeatureKind::Skeleton => &self.skeleton,
        }
    }

    pub fn frames(&self) -> usize {
        self.skeleton.rows()
    }
}
