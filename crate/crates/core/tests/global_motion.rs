use gesture_core::features::FeatureError;
use gesture_core::finger_motion::FingerAngles;
use gesture_core::global_motion::*;
use gesture_core::skeleton::{JointLayout, SequenceMeta, SkeletonSequence};
use gesture_core::synth::{forward_kinematics, GlobalPoseParams, HandTemplate};
use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

fn rotation(axis: (f64, f64, f64), angle: f64) -> Matrix3<f64> {
    let v = Vector3::new(axis.0, axis.1, axis.2);
    let v = if v.norm() < 1e-3 { Vector3::z() } else { v };
    *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(v), angle).matrix()
}

fn meta() -> SequenceMeta {
    SequenceMeta { subject: 1, gesture: 1, finger: 1, trial: 1 }
}

fn sequence(poses: &[GlobalPoseParams]) -> SkeletonSequence {
    let t = HandTemplate::default();
    let frames = poses
        .iter()
        .map(|p| forward_kinematics(&t, p, &FingerAngles::default()))
        .collect();
    SkeletonSequence::new(frames, meta())
}

/// Gaussian mass on `[0, x]` by the trapezoid rule.
fn trapezoid_mass(x: f64, sigma: f64, steps: usize) -> f64 {
    let h = x / steps as f64;
    let g = |u: f64| (-u * u / (2.0 * sigma * sigma)).exp();
    let inner: f64 = (1..steps).map(|k| g(k as f64 * h)).sum();
    h * (0.5 * (g(0.0) + g(x)) + inner)
}

#[test]
fn dad_thresholds_match_trapezoid_oracle() {
    for (bins, sigma) in [(5, 1.0), (3, 0.06), (8, 2.5)] {
        let eta = dad_thresholds(bins, sigma).unwrap();
        assert_eq!(eta.len(), bins);
        assert_eq!(eta[bins - 1], sigma);
        let total = trapezoid_mass(sigma, sigma, 200_000);
        for (i, &e) in eta.iter().enumerate() {
            let target = (i + 1) as f64 / bins as f64;
            let frac = trapezoid_mass(e, sigma, 200_000) / total;
            assert!((frac - target).abs() < 1e-7, "bins {bins} i {i}: {frac} vs {target}");
        }
    }
    assert!(dad_thresholds(0, 1.0).is_err());
    assert!(dad_thresholds(5, 0.0).is_err());
}

#[test]
fn rho_half_sigma_lands_in_third_bin() {
    let cfg = DadConfig::new(5, 1.0).unwrap();
    assert_eq!(discretize_rho(0.5, &cfg), 3);
    assert_eq!(discretize_rho(0.0, &cfg), 1);
    assert_eq!(discretize_rho(10.0, &cfg), 5);
}

#[test]
fn static_sequence_has_zero_offset_and_dynamic_pose() {
    let pose = GlobalPoseParams::new([0.3, -0.2, 0.9], Vector3::new(0.1, 0.2, 0.5));
    let seq = sequence(&vec![pose; 14]);
    let feats = global_features(&seq, &JointLayout::dhg(), &ReferencePalm::canonical(), &GlobalConfig::default()).unwrap();
    assert_eq!(feats.len(), 14);
    for f in &feats {
        assert_eq!(f.to_vec().len(), 30);
        assert!(f.phi_op.iter().all(|v| v.abs() < 1e-12));
        assert!(f.phi_dp.iter().flatten().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn steady_z_rotation_gives_lag_five_difference() {
    let poses: Vec<_> = (0..20)
        .map(|t| GlobalPoseParams::new([0.0, 0.0, 0.01 * t as f64], Vector3::new(0.0, 0.0, 0.4)))
        .collect();
    let feats = global_features(&sequence(&poses), &JointLayout::dhg(), &ReferencePalm::canonical(), &GlobalConfig::default()).unwrap();
    for (t, f) in feats.iter().enumerate() {
        let expected_lag5 = 0.01 * t.min(5) as f64;
        assert!((f.phi_dp[1][5] - expected_lag5).abs() < 1e-9, "t {t}");
        assert!((f.phi_dp[0][5] - if t > 0 { 0.01 } else { 0.0 }).abs() < 1e-9);
        assert!((f.phi_op[5] - 0.01 * t as f64).abs() < 1e-9);
    }
    assert_eq!(feats[0].phi_op, [0.0; 6]);
}

#[test]
fn degenerate_frame_reported_with_index() {
    let pose = GlobalPoseParams::identity();
    let mut seq = sequence(&vec![pose; 4]);
    let palm = seq.frames[2].joint(1);
    let layout = JointLayout::dhg();
    seq.frames[2] = seq.frames[2].transformed(|_| palm);
    match global_features(&seq, &layout, &ReferencePalm::canonical(), &GlobalConfig::default()) {
        Err(FeatureError::Geometry { frame: 2, source: GeometryError::DegenerateInput }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kabsch_recovers_planted_rigid_motion(
        axis in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        angle in -3.1..3.1f64,
        t in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
    ) {
        let r = rotation(axis, angle);
        let shift = Vector3::new(t.0, t.1, t.2);
        let reference = ReferencePalm::canonical();
        let pts: Vec<_> = reference.points().iter().map(|p| r * p + shift).collect();
        let tf = kabsch_align(&pts, reference.points()).unwrap();
        prop_assert!((tf.rotation - r).norm() < 1e-9);
        prop_assert!((tf.translation - shift).norm() < 1e-9);
        prop_assert!((tf.rotation.determinant() - 1.0).abs() < 1e-9);
        prop_assert!((tf.rotation.transpose() * tf.rotation - Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn kabsch_output_is_always_a_proper_rotation(
        noise in proptest::collection::vec(-0.05..0.05f64, 21),
    ) {
        let reference = ReferencePalm::canonical();
        let pts: Vec<_> = reference
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| p + Vector3::new(noise[3 * i], noise[3 * i + 1], noise[3 * i + 2]))
            .collect();
        if let Ok(tf) = kabsch_align(&pts, reference.points()) {
            prop_assert!((tf.rotation.determinant() - 1.0).abs() < 1e-9);
            prop_assert!((tf.rotation.transpose() * tf.rotation - Matrix3::identity()).amax() < 1e-9);
        }
    }

    #[test]
    fn euler_roundtrip_away_from_gimbal_lock(
        rx in -3.14..3.14f64,
        ry in -1.47..1.47f64,
        rz in -3.14..3.14f64,
        zyx in any::<bool>(),
    ) {
        let conv = if zyx { EulerConvention::Zyx } else { EulerConvention::Xyz };
        let back = rotation_to_euler(&euler_to_rotation([rx, ry, rz], conv), conv).unwrap();
        for (a, b) in back.iter().zip([rx, ry, rz]) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dad_thresholds_increase_with_equal_mass(bins in 1usize..12, sigma in 0.001..5.0f64) {
        let eta = dad_thresholds(bins, sigma).unwrap();
        prop_assert_eq!(eta[bins - 1], sigma);
        prop_assert!(eta[0] > 0.0);
        prop_assert!(eta.windows(2).all(|w| w[0] < w[1]));
        let total = trapezoid_mass(sigma, sigma, 20_000);
        let per_bin = total / bins as f64;
        let mut prev = 0.0;
        for &e in &eta {
            let m = trapezoid_mass(e, sigma, 20_000);
            prop_assert!(((m - prev) - per_bin).abs() / per_bin < 1e-6);
            prev = m;
        }
    }

    #[test]
    fn discretize_is_monotone(a in 0.0..3.0f64, b in 0.0..3.0f64, bins in 1usize..9, sigma in 0.1..2.0f64) {
        let cfg = DadConfig::new(bins, sigma).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (bl, bh) = (discretize_rho(lo, &cfg), discretize_rho(hi, &cfg));
        prop_assert!(bl <= bh);
        prop_assert!((1..=bins).contains(&bl) && (1..=bins).contains(&bh));
    }

    #[test]
    fn spherical_ranges(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
        let (rho, theta, phi) = cartesian_to_spherical(&Vector3::new(x, y, z));
        prop_assert!(rho >= 0.0);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&theta));
        prop_assert!(phi > -std::f64::consts::PI && phi <= std::f64::consts::PI);
        let back = Vector3::new(rho * theta.sin() * phi.cos(), rho * theta.sin() * phi.sin(), rho * theta.cos());
        prop_assert!((back - Vector3::new(x, y, z)).norm() < 1e-9);
    }

    #[test]
    fn camera_mode_phi_depends_only_on_the_frame(
        rots in proptest::collection::vec((-0.8..0.8f64, -0.8..0.8f64, -0.8..0.8f64), 3..12),
        cut in 1usize..3,
    ) {
        let poses: Vec<_> = rots
            .iter()
            .enumerate()
            .map(|(k, r)| GlobalPoseParams::new([r.0, r.1, r.2], Vector3::new(0.01 * k as f64, 0.02, 0.03)))
            .collect();
        let cfg = GlobalConfig { translation_origin: TranslationOrigin::Camera, ..GlobalConfig::default() };
        let layout = JointLayout::dhg();
        let reference = ReferencePalm::canonical();
        let full = global_features(&sequence(&poses), &layout, &reference, &cfg).unwrap();
        let tail = global_features(&sequence(&poses[cut..]), &layout, &reference, &cfg).unwrap();
        for (a, b) in full[cut..].iter().zip(&tail) {
            for (x, y) in a.phi.iter().zip(&b.phi) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert_eq!(a.to_vec().len(), 30);
        }
    }
}
