//! Offset-pose and dynamic-pose differencing shared by the motion features.

use std::f64::consts::PI;

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps −π to π already; guard the rounding case where w lands on −π.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Per-frame pose differences: `offset[t] = pose[t] − pose[0]` and, for each
/// lag `s`, `pose[t] − pose[max(t − s, 0)]`. Components flagged in `angular`
/// are wrapped to `(−π, π]`.
pub(crate) fn offset_and_dynamic<const N: usize>(
    poses: &[[f64; N]],
    lags: &[usize],
    angular: &[bool; N],
) -> Vec<([f64; N], Vec<[f64; N]>)> {
    let diff = |a: &[f64; N], b: &[f64; N]| -> [f64; N] {
        std::array::from_fn(|k| {
            let d = a[k] - b[k];
            if angular[k] {
                wrap_angle(d)
            } else {
                d
            }
        })
    };
    poses
        .iter()
        .enumerate()
        .map(|(t, pose)| {
            let offset = diff(pose, &poses[0]);
            let dynamic = lags
                .iter()
                .map(|&s| diff(pose, &poses[t.saturating_sub(s)]))
                .collect();
            (offset, dynamic)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn lag_clamps_to_first_frame() {
        let poses: Vec<[f64; 1]> = (0..4).map(|t| [t as f64]).collect();
        let out = offset_and_dynamic(&poses, &[1, 5], &[false]);
        assert_eq!(out[0].0, [0.0]);
        assert_eq!(out[3].0, [3.0]);
        assert_eq!(out[3].1, vec![[1.0], [3.0]]);
        assert_eq!(out[0].1, vec![[0.0], [0.0]]);
    }

    proptest! {
        #[test]
        fn wrap_range_and_congruence(a in -100.0..100.0f64) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            let k = ((a - w) / (2.0 * PI)).round();
            prop_assert!((a - w - k * 2.0 * PI).abs() < 1e-9);
        }
    }
}
