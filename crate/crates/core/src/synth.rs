//! Forward-kinematics hand model and a parametric synthetic gesture generator.
//!
//! The hand model shares its axes with the inverse kinematics in
//! [`crate::finger_motion`], so `IK(FK(θ)) = θ` holds exactly up to rounding.
//!
//! Gesture scripts are plain text:
//!
//! ```text
//! [grab]
//! gesture = 1
//! finger = 1
//! frames = 24..32
//! tz = 0:0 1:-0.06
//! *.mcp_flex = 0:0 0.6:0.9 1:0.9
//! ```
//!
//! Global curves (`rx ry rz tx ty tz`) are offsets from the subject's start
//! pose; finger curves (`<finger>.<dof>`, `*` for all fingers) are absolute
//! joint angles. Each curve is a list of `time:value` control points with
//! time normalized to `[0, 1]`, interpolated linearly.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::{entry_path, format_skeleton_text};
use crate::finger_motion::{FingerAngles, FingerAxes, DOF_NAMES, DOF_PER_FINGER, FINGER_DOFS};
use crate::global_motion::{euler_to_rotation, EulerConvention, ReferencePalm};
use crate::seed::derive_seed;
use crate::skeleton::{HandSkeleton, JointLayout, Point3, SequenceMeta, SkeletonSequence, FINGER_COUNT, FINGER_NAMES};

pub const ANGLE_LIMIT: f64 = 1.2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Rest-pose hand: the reference palm scaled by `scale`, with straight
/// fingers extending from each base along its rest direction.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTemplate {
    pub layout: JointLayout,
    pub reference: ReferencePalm,
    /// Proximal, middle, distal bone lengths per finger, in meters.
    pub bone_lengths: [[f64; 3]; FINGER_COUNT],
    pub scale: f64,
}

impl Default for HandTemplate {
    fn default() -> Self {
        Self {
            layout: JointLayout::dhg(),
            reference: ReferencePalm::canonical(),
            bone_lengths: [
                [0.035, 0.030, 0.025],
                [0.040, 0.025, 0.020],
                [0.045, 0.028, 0.022],
                [0.042, 0.026, 0.020],
                [0.032, 0.020, 0.018],
            ],
            scale: 1.0,
        }
    }
}

impl HandTemplate {
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            scale: self.scale * scale,
            ..self.clone()
        }
    }

    pub fn rest_pose(&self) -> HandSkeleton {
        forward_kinematics(self, &GlobalPoseParams::identity(), &FingerAngles::default())
    }
}

/// World pose applied after the finger chains are placed in the local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalPoseParams {
    pub rotation: [f64; 3],
    pub translation: Vector3<f64>,
    pub euler: EulerConvention,
}

impl GlobalPoseParams {
    pub fn identity() -> Self {
        Self {
            rotation: [0.0; 3],
            translation: Vector3::zeros(),
            euler: EulerConvention::Xyz,
        }
    }

    pub fn new(rotation: [f64; 3], translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            euler: EulerConvention::Xyz,
        }
    }
}

pub fn forward_kinematics(
    template: &HandTemplate,
    pose: &GlobalPoseParams,
    angles: &FingerAngles,
) -> HandSkeleton {
    let layout = &template.layout;
    let reference = &template.reference;
    let s = template.scale;
    let mut local = vec![Point3::zeros(); layout.joint_count()];
    local[layout.wrist()] = reference.points()[0] * s;
    local[layout.palm()] = reference.palm() * s;
    for (k, joints) in layout.fingers().iter().enumerate() {
        let axes = FingerAxes::new(reference, k);
        let [flex, abd, pip, dip] = angles.finger(k);
        let heading = axes.heading(abd);
        let base = reference.finger_base(k) * s;
        let [l1, l2, l3] = template.bone_lengths[k].map(|l| l * s);
        let p1 = base + axes.bone(&heading, flex) * l1;
        let p2 = p1 + axes.bone(&heading, flex + pip) * l2;
        let p3 = p2 + axes.bone(&heading, flex + pip + dip) * l3;
        local[joints.base] = base;
        local[joints.pip] = p1;
        local[joints.dip] = p2;
        local[joints.tip] = p3;
    }
    let rot = euler_to_rotation(pose.rotation, pose.euler);
    HandSkeleton::new(local.iter().map(|p| rot * p + pose.translation).collect())
}

/// Piecewise-linear curve over normalized time; constant outside the control points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curve {
    points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn new(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { points }
    }

    pub fn constant(v: f64) -> Self {
        Self::new(vec![(0.0, v)])
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn eval(&self, u: f64) -> f64 {
        let pts = &self.points;
        match pts.len() {
            0 => 0.0,
            _ if u <= pts[0].0 => pts[0].1,
            n if u >= pts[n - 1].0 => pts[n - 1].1,
            _ => {
                let i = pts.partition_point(|p| p.0 <= u);
                let (t0, v0) = pts[i - 1];
                let (t1, v1) = pts[i];
                if t1 == t0 {
                    v1
                } else {
                    v0 + (v1 - v0) * (u - t0) / (t1 - t0)
                }
            }
        }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

pub const GLOBAL_CURVE_NAMES: [&str; 6] = ["rx", "ry", "rz", "tx", "ty", "tz"];

#[derive(Debug, Clone, PartialEq)]
pub struct GestureScript {
    pub name: String,
    pub gesture: u32,
    pub finger: u32,
    /// Inclusive frame-count range before speed scaling.
    pub frames: (usize, usize),
    /// rx, ry, rz (radians) and tx, ty, tz (meters), relative to the start pose.
    pub global: [Curve; 6],
    pub fingers: [Curve; FINGER_DOFS],
}

impl GestureScript {
    pub fn new(name: &str, gesture: u32, finger: u32) -> Self {
        Self {
            name: name.to_string(),
            gesture,
            finger,
            frames: (24, 32),
            global: Default::default(),
            fingers: std::array::from_fn(|_| Curve::default()),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.frames.0 < 2 || self.frames.0 > self.frames.1 {
            return Err(format!("{}: invalid frame range {:?}", self.name, self.frames));
        }
        if self.gesture == 0 || self.finger == 0 {
            return Err(format!("{}: gesture and finger ids are 1-based", self.name));
        }
        for c in &self.fingers {
            if c.values().any(|v| v.abs() > ANGLE_LIMIT) {
                return Err(format!(
                    "{}: finger angle control points must lie within ±{ANGLE_LIMIT} rad",
                    self.name
                ));
            }
        }
        Ok(())
    }
}

fn parse_curve(value: &str) -> Result<Curve, String> {
    let points = value
        .split_whitespace()
        .map(|tok| {
            let (t, v) = tok
                .split_once(':')
                .ok_or_else(|| format!("control point '{tok}' is not time:value"))?;
            let t: f64 = t.parse().map_err(|_| format!("bad time in '{tok}'"))?;
            let v: f64 = v.parse().map_err(|_| format!("bad value in '{tok}'"))?;
            Ok((t, v))
        })
        .collect::<Result<Vec<_>, String>>()?;
    if points.is_empty() {
        return Err("curve has no control points".into());
    }
    Ok(Curve::new(points))
}

/// Parses `[name]` sections of `key = value` lines; `#` starts a comment.
pub fn parse_scripts(text: &str) -> Result<Vec<GestureScript>, SynthError> {
    let mut scripts: Vec<GestureScript> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| SynthError::Script { line: i + 1, message };
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            scripts.push(GestureScript::new(name.trim(), 0, 1));
            continue;
        }
        let script = scripts
            .last_mut()
            .ok_or_else(|| err("key outside of a [script] section".into()))?;
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
        match key {
            "gesture" | "finger" => {
                let v: u32 = value.parse().map_err(|_| err(format!("bad {key} id '{value}'")))?;
                if key == "gesture" {
                    script.gesture = v;
                } else {
                    script.finger = v;
                }
            }
            "frames" => {
                let (lo, hi) = value.split_once("..").unwrap_or((value, value));
                let lo: usize = lo.trim().parse().map_err(|_| err(format!("bad frames '{value}'")))?;
                let hi: usize = hi.trim().parse().map_err(|_| err(format!("bad frames '{value}'")))?;
                script.frames = (lo, hi);
            }
            _ => {
                let curve = parse_curve(value).map_err(err)?;
                if let Some(g) = GLOBAL_CURVE_NAMES.iter().position(|n| *n == key) {
                    script.global[g] = curve;
                } else {
                    let (finger, dof) = key
                        .split_once('.')
                        .ok_or_else(|| err(format!("unknown key '{key}'")))?;
                    let dof = DOF_NAMES
                        .iter()
                        .position(|n| *n == dof)
                        .ok_or_else(|| err(format!("unknown degree of freedom '{dof}'")))?;
                    let fingers: Vec<usize> = if finger == "*" {
                        (0..FINGER_COUNT).collect()
                    } else {
                        vec![FINGER_NAMES
                            .iter()
                            .position(|n| *n == finger)
                            .ok_or_else(|| err(format!("unknown finger '{finger}'")))?]
                    };
                    for f in fingers {
                        script.fingers[f * DOF_PER_FINGER + dof] = curve.clone();
                    }
                }
            }
        }
    }
    for s in &scripts {
        s.validate().map_err(SynthError::InvalidConfig)?;
    }
    Ok(scripts)
}

/// Six archetypes: two finger-dominant gestures that differ mainly in
/// translation amplitude (grab vs pinch), a rotation, a swipe, a shake and a
/// mixed finger/global gesture. Gesture ids follow DHG numbering.
pub const BUILTIN_SCRIPTS: &str = "\
[grab]
gesture = 1
frames = 24..32
tz = 0:0 0.7:-0.06 1:-0.06
ty = 0:0 0.7:0.01 1:0.01
*.mcp_flex = 0:0.05 0.2:0.05 0.7:0.9 1:0.9
*.pip = 0:0.05 0.2:0.05 0.7:1.1 1:1.1
*.dip = 0:0.05 0.2:0.05 0.7:0.7 1:0.7
thumb.mcp_abd = 0:0 0.7:0.3 1:0.3

[tap]
gesture = 2
frames = 22..30
tz = 0:0 0.4:-0.03 0.7:0 1:0
ry = 0:0 0.4:0.2 0.7:0 1:0
index.mcp_flex = 0:0 0.4:0.9 0.7:0 1:0
index.pip = 0:0 0.4:0.5 0.7:0 1:0
middle.mcp_flex = 0:0.6 1:0.6
middle.pip = 0:1.0 1:1.0
ring.mcp_flex = 0:0.6 1:0.6
ring.pip = 0:1.0 1:1.0
pinky.mcp_flex = 0:0.6 1:0.6
pinky.pip = 0:1.0 1:1.0

[pinch]
gesture = 4
frames = 24..32
tz = 0:0 0.7:-0.015 1:-0.015
thumb.mcp_flex = 0:0.05 0.2:0.05 0.7:0.8 1:0.8
thumb.mcp_abd = 0:0 0.7:0.4 1:0.4
thumb.pip = 0:0.05 0.2:0.05 0.7:0.6 1:0.6
index.mcp_flex = 0:0.05 0.2:0.05 0.7:0.9 1:0.9
index.pip = 0:0.05 0.2:0.05 0.7:1.0 1:1.0
index.dip = 0:0.05 0.2:0.05 0.7:0.6 1:0.6
middle.mcp_flex = 0:0.05 0.7:0.5 1:0.5
ring.mcp_flex = 0:0.05 0.7:0.5 1:0.5
pinky.mcp_flex = 0:0.05 0.7:0.5 1:0.5

[rotation_cw]
gesture = 5
frames = 24..34
rz = 0:0 0.15:0 0.85:-1.0 1:-1.0
*.mcp_flex = 0:0.3 1:0.3
*.pip = 0:0.3 1:0.3

[swipe_right]
gesture = 7
frames = 20..28
tx = 0:0 0.1:0 0.8:0.15 1:0.15
ty = 0:0 0.5:0.01 1:0

[shake]
gesture = 14
frames = 26..34
rz = 0:0 0.15:0.35 0.3:-0.35 0.45:0.35 0.6:-0.35 0.75:0.35 0.9:0 1:0
tx = 0:0 0.15:0.015 0.3:-0.015 0.45:0.015 0.6:-0.015 0.75:0.015 0.9:0 1:0
";

pub fn builtin_scripts() -> Vec<GestureScript> {
    parse_scripts(BUILTIN_SCRIPTS).expect("built-in scripts parse")
}

/// Subject- and trial-level variation of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub template: HandTemplate,
    /// Joint-position noise standard deviation, meters.
    pub noise: f64,
    /// Subjects scale gesture amplitude uniformly within `1 ± amplitude_spread`.
    pub amplitude_spread: f64,
    /// Subjects scale speed uniformly within `1 ± speed_spread`.
    pub speed_spread: f64,
    pub hand_scale_spread: f64,
    /// Trial-to-trial amplitude jitter.
    pub trial_jitter: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            template: HandTemplate::default(),
            noise: 1e-3,
            amplitude_spread: 0.25,
            speed_spread: 0.2,
            hand_scale_spread: 0.1,
            trial_jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SubjectStyle {
    amplitude: f64,
    speed: f64,
    hand_scale: f64,
    base_rotation: [f64; 3],
    base_position: Vector3<f64>,
}

impl SubjectStyle {
    fn sample(rng: &mut impl Rng, opts: &SynthOptions) -> Self {
        let spread = |rng: &mut dyn rand::RngCore, s: f64| {
            if s > 0.0 {
                1.0 + rng.random_range(-s..s)
            } else {
                1.0
            }
        };
        Self {
            amplitude: spread(rng, opts.amplitude_spread),
            speed: spread(rng, opts.speed_spread),
            hand_scale: spread(rng, opts.hand_scale_spread),
            base_rotation: [
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            ],
            base_position: Vector3::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(0.4..0.6),
            ),
        }
    }
}

fn synthesize(
    script: &GestureScript,
    style: &SubjectStyle,
    opts: &SynthOptions,
    meta: SequenceMeta,
    rng: &mut impl Rng,
) -> SkeletonSequence {
    let (lo, hi) = script.frames;
    let nominal = rng.random_range(lo..=hi) as f64 / style.speed;
    let frames = (nominal.round() as usize).max(2);
    let amp = style.amplitude
        * if opts.trial_jitter > 0.0 {
            1.0 + rng.random_range(-opts.trial_jitter..opts.trial_jitter)
        } else {
            1.0
        };
    let start_jitter: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
    let template = opts.template.scaled(style.hand_scale);
    let base_rot = euler_to_rotation(
        std::array::from_fn(|k| style.base_rotation[k] + start_jitter[k]),
        EulerConvention::Xyz,
    );
    let noise = Normal::new(0.0, opts.noise.max(0.0)).expect("finite noise level");

    let out = (0..frames)
        .map(|i| {
            let u = i as f64 / (frames - 1) as f64;
            let g: [f64; 6] = std::array::from_fn(|k| amp * script.global[k].eval(u));
            let local_rot = euler_to_rotation([g[0], g[1], g[2]], EulerConvention::Xyz);
            let rot = base_rot * local_rot;
            let rotation = crate::global_motion::rotation_to_euler(&rot, EulerConvention::Xyz)
                .expect("product of rotations is a rotation");
            let translation = style.base_position + base_rot * Vector3::new(g[3], g[4], g[5]);
            let mut angles = FingerAngles::default();
            for (slot, curve) in script.fingers.iter().enumerate() {
                angles.0[slot] = (amp * curve.eval(u)).clamp(-ANGLE_LIMIT, ANGLE_LIMIT);
            }
            let skel = forward_kinematics(&template, &GlobalPoseParams::new(rotation, translation), &angles);
            if opts.noise > 0.0 {
                skel.transformed(|p| {
                    p + Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng))
                })
            } else {
                skel
            }
        })
        .collect();
    SkeletonSequence::new(out, meta)
}

/// `scripts × subjects × trials` sequences, ordered by (gesture, finger,
/// subject, trial). Subject `s` draws one style used for all of its trials.
pub fn generate_dataset(
    scripts: &[GestureScript],
    subjects: u32,
    trials: u32,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Vec<SkeletonSequence>, SynthError> {
    let labels: BTreeSet<(u32, u32)> = scripts.iter().map(|s| (s.gesture, s.finger)).collect();
    if labels.len() < 2 {
        return Err(SynthError::InvalidConfig("need at least two distinct scripts".into()));
    }
    if labels.len() != scripts.len() {
        return Err(SynthError::InvalidConfig(
            "scripts must have distinct (gesture, finger) labels".into(),
        ));
    }
    if subjects == 0 || trials == 0 {
        return Err(SynthError::InvalidConfig("subjects and trials must be positive".into()));
    }
    for s in scripts {
        s.validate().map_err(SynthError::InvalidConfig)?;
    }
    let styles: Vec<SubjectStyle> = (1..=subjects)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0, s as u64]));
            SubjectStyle::sample(&mut rng, opts)
        })
        .collect();

    let mut ordered: Vec<&GestureScript> = scripts.iter().collect();
    ordered.sort_by_key(|s| (s.gesture, s.finger));
    let mut out = Vec::with_capacity(scripts.len() * (subjects * trials) as usize);
    for script in ordered {
        for subject in 1..=subjects {
            for trial in 1..=trials {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    seed,
                    &[1, script.gesture as u64, script.finger as u64, subject as u64, trial as u64],
                ));
                let meta = SequenceMeta {
                    subject,
                    gesture: script.gesture,
                    finger: script.finger,
                    trial,
                };
                out.push(synthesize(script, &styles[subject as usize - 1], opts, meta, &mut rng));
            }
        }
    }
    Ok(out)
}

/// Writes sequences in the DHG directory layout under `root`.
pub fn export_dhg_tree(sequences: &[SkeletonSequence], root: &Path) -> Result<(), SynthError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(root).map_err(io(root))?;
    for seq in sequences {
        let path = root.join(entry_path(&seq.meta));
        let dir = path.parent().expect("entry path has a parent");
        fs::create_dir_all(dir).map_err(io(dir))?;
        fs::write(&path, format_skeleton_text(seq)).map_err(io(&path))?;
    }
    Ok(())
}
