//! Skeleton-based dynamic hand gesture recognition.
//!
//! Pipeline: skeleton sequences ([`skeleton`], [`dataset`]) are turned into
//! three per-frame streams ([`features`]): global motion ([`global_motion`]),
//! finger motion ([`finger_motion`]) and the normalized skeleton itself. A
//! three-branch bidirectional LSTM ([`network`]) classifies them, and
//! [`evaluation`] runs leave-one-subject-out cross-validation. [`synth`]
//! provides a forward-kinematics hand model and synthetic datasets.

pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod finger_motion;
pub mod global_motion;
pub mod network;
pub mod seed;
pub mod skeleton;
pub mod synth;
pub mod temporal;
pub mod tensor;
