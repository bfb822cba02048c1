use std::f64::consts::{PI, TAU};

use fer_core::features::{geometric_features, GEOMETRIC_DIMS};
use fer_core::geometry::{
    eye_centers, mirror_index, pose_normalize, roll_normalize, yaw_normalize, LandmarkSet, Point2,
    LANDMARK_COUNT,
};
use fer_core::synthetic::neutral_template;
use proptest::prelude::*;

fn arb_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-500.0..500.0f64, -500.0..500.0f64), LANDMARK_COUNT)
}

fn to_set(raw: &[(f64, f64)]) -> LandmarkSet {
    let pts: Vec<Point2> = raw.iter().map(|&(x, y)| Point2::new(x, y)).collect();
    LandmarkSet::from_slice(&pts).unwrap()
}

/// Arbitrary point clouds with distinguishable eye centers.
fn arb_landmarks() -> impl Strategy<Value = LandmarkSet> {
    arb_points()
        .prop_map(|raw| to_set(&raw))
        .prop_filter("eye centers too close", |lm| lm.inter_ocular_distance() > 1.0)
}

/// Face-shaped sets: the neutral template with per-point noise, so that no
/// contour segment collapses after normalization.
fn arb_face() -> impl Strategy<Value = LandmarkSet> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), LANDMARK_COUNT).prop_map(|noise| {
        let base = neutral_template();
        let mut it = noise.into_iter();
        base.map(|p| {
            let (dx, dy) = it.next().unwrap();
            Point2::new(p.x + dx, p.y + dy)
        })
        .unwrap()
    })
}

fn similarity(lm: &LandmarkSet, theta: f64, scale: f64, tx: f64, ty: f64) -> LandmarkSet {
    let (s, c) = theta.sin_cos();
    lm.map(|p| Point2::new(scale * (c * p.x - s * p.y) + tx, scale * (s * p.x + c * p.y) + ty))
        .unwrap()
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn max_point_gap(a: &LandmarkSet, b: &LandmarkSet) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| (p.x - q.x).abs().max((p.y - q.y).abs()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn roll_levels_eye_centers(lm in arb_landmarks()) {
        let d = lm.inter_ocular_distance();
        let (rolled, pose) = roll_normalize(&lm).unwrap();
        let (r, l) = eye_centers(&rolled);
        prop_assert!((r.y - l.y).abs() < 1e-9 * d);
        prop_assert!(l.x > r.x);
        prop_assert!(pose.alpha.abs() <= PI);
    }

    #[test]
    fn roll_is_rigid(lm in arb_landmarks()) {
        let (rolled, _) = roll_normalize(&lm).unwrap();
        for (i, j) in [(0, 16), (36, 45), (8, 27), (48, 54), (3, 60)] {
            let before = lm.get(i).distance(lm.get(j));
            let after = rolled.get(i).distance(rolled.get(j));
            prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
        }
    }

    #[test]
    fn roll_is_idempotent(lm in arb_landmarks()) {
        let (once, _) = roll_normalize(&lm).unwrap();
        let (twice, pose) = roll_normalize(&once).unwrap();
        prop_assert!(pose.alpha.abs() < 1e-12);
        prop_assert!(max_point_gap(&once, &twice) < 1e-9);
    }

    #[test]
    fn yaw_output_is_symmetric(lm in arb_landmarks(), axis in -500.0..500.0f64) {
        let out = yaw_normalize(&lm, axis);
        for i in 0..LANDMARK_COUNT {
            let m = mirror_index(i).unwrap();
            let (p, q) = (out.get(i), out.get(m));
            prop_assert_eq!(p.y, q.y);
            // Offsets are exact negations; only re-adding the axis rounds.
            let ulps = 4.0 * f64::EPSILON * (axis.abs() + p.x.abs() + q.x.abs());
            prop_assert!(((p.x - axis) + (q.x - axis)).abs() <= ulps);
        }
    }

    #[test]
    fn yaw_is_idempotent(lm in arb_landmarks(), axis in -500.0..500.0f64) {
        let once = yaw_normalize(&lm, axis);
        let twice = yaw_normalize(&once, axis);
        prop_assert!(max_point_gap(&once, &twice) < 1e-9);
    }

    #[test]
    fn pose_normalization_is_idempotent(lm in arb_landmarks()) {
        let once = pose_normalize(&lm).unwrap();
        let twice = pose_normalize(&once).unwrap();
        prop_assert!(max_point_gap(&once, &twice) < 1e-9);
    }

    #[test]
    fn geometric_features_ignore_rotation_and_scale(
        face in arb_face(),
        theta in -PI..PI,
        scale in 0.2..5.0f64,
        tx in -300.0..300.0f64,
        ty in -300.0..300.0f64,
    ) {
        let base = geometric_features(&pose_normalize(&face).unwrap()).unwrap();
        let moved = similarity(&face, theta, scale, tx, ty);
        let feats = geometric_features(&pose_normalize(&moved).unwrap()).unwrap();
        prop_assert_eq!(feats.len(), GEOMETRIC_DIMS);
        for (a, b) in base.iter().zip(&feats) {
            prop_assert!(angle_gap(*a, *b) < 1e-9, "{} vs {}", a, b);
        }
    }
}

#[test]
fn symmetric_face_has_horizontal_lip_line() {
    let lm = pose_normalize(&neutral_template()).unwrap();
    // 60 -> 64 of the inner upper lip, symmetric about the axis through 62.
    let y60 = lm.get(60).y;
    assert!((y60 - lm.get(64).y).abs() < 1e-12);
    assert!((lm.get(62).x - lm.get(66).x).abs() < 1e-12);
}
