//! Pose normalization of 68-point facial landmarks.
//!
//! Landmarks use the standard 68-point layout (jaw 0-16, brows 17-26, nose
//! 27-35, eyes 36-47, lips 48-67), in image pixel coordinates with `y`
//! growing downward. "Right" and "left" always refer to the subject.
//!
//! Roll is removed by rotating every point about the midpoint of the eye
//! centers until the eye line is horizontal. Yaw is removed by averaging
//! each point with the reflection of its bilateral partner across the
//! vertical line through that midpoint.

use std::ops::Range;

use crate::error::{FerError, Result};

pub const LANDMARK_COUNT: usize = 68;

pub const RIGHT_EYE: Range<usize> = 36..42;
pub const LEFT_EYE: Range<usize> = 42..48;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn midpoint(self, other: Point2) -> Point2 {
        Point2::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

/// Exactly 68 finite landmark points.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: [Point2; LANDMARK_COUNT],
}

impl LandmarkSet {
    pub fn new(points: [Point2; LANDMARK_COUNT]) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(FerError::NonFiniteLandmark(i));
        }
        Ok(Self { points })
    }

    pub fn from_slice(points: &[Point2]) -> Result<Self> {
        let arr: [Point2; LANDMARK_COUNT] = points
            .try_into()
            .map_err(|_| FerError::WrongLandmarkCount(points.len()))?;
        Self::new(arr)
    }

    pub fn points(&self) -> &[Point2; LANDMARK_COUNT] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Point2 {
        self.points[index]
    }

    /// Applies `f` to every point. The result must stay finite.
    pub fn map(&self, mut f: impl FnMut(Point2) -> Point2) -> Result<Self> {
        Self::new(self.points.map(&mut f))
    }

    pub fn inter_ocular_distance(&self) -> f64 {
        let (r, l) = eye_centers(self);
        r.distance(l)
    }
}

/// Roll correction applied by [`roll_normalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNormalization {
    /// Midpoint of the two eye centers.
    pub origin: Point2,
    /// Angle of the right-eye to left-eye vector, in `[-pi, pi]`.
    pub alpha: f64,
}

fn mean(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2::new(sx / n, sy / n)
}

/// Returns `(right_eye_center, left_eye_center)`.
pub fn eye_centers(lm: &LandmarkSet) -> (Point2, Point2) {
    (mean(&lm.points[RIGHT_EYE]), mean(&lm.points[LEFT_EYE]))
}

/// Rotates the landmarks about the eye midpoint so that both eye centers
/// end up on the same horizontal line.
pub fn roll_normalize(lm: &LandmarkSet) -> Result<(LandmarkSet, PoseNormalization)> {
    let (right, left) = eye_centers(lm);
    let (dx, dy) = (left.x - right.x, left.y - right.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(FerError::DegenerateFace);
    }
    let origin = right.midpoint(left);
    let alpha = dy.atan2(dx);
    let (sin, cos) = alpha.sin_cos();
    let rotated = lm.map(|p| {
        let (ox, oy) = (p.x - origin.x, p.y - origin.y);
        Point2::new(
            origin.x + ox * cos + oy * sin,
            origin.y - ox * sin + oy * cos,
        )
    })?;
    Ok((rotated, PoseNormalization { origin, alpha }))
}

/// Bilateral partner of each landmark in the 68-point layout.
const MIRROR: [usize; LANDMARK_COUNT] = [
    // jaw 0-16
    16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0,
    // brows 17-26
    26, 25, 24, 23, 22, 21, 20, 19, 18, 17,
    // nose bridge 27-30, nostrils 31-35
    27, 28, 29, 30, 35, 34, 33, 32, 31,
    // right eye 36-41
    45, 44, 43, 42, 47, 46,
    // left eye 42-47
    39, 38, 37, 36, 41, 40,
    // outer lip 48-59
    54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55,
    // inner lip 60-67
    64, 63, 62, 61, 60, 67, 66, 65,
];

pub fn mirror_index(i: usize) -> Result<usize> {
    MIRROR.get(i).copied().ok_or(FerError::IndexOutOfRange(i))
}

/// Averages each point with the reflection of its mirror partner across
/// `x = origin_x`. The output is exactly bilaterally symmetric.
pub fn yaw_normalize(lm: &LandmarkSet, origin_x: f64) -> LandmarkSet {
    let pts = lm.points();
    let mut out = *pts;
    for (i, &m) in MIRROR.iter().enumerate() {
        // Horizontal offsets from the axis. Partners get exactly negated
        // offsets, which is what keeps the result symmetric.
        let offset = ((pts[i].x - origin_x) - (pts[m].x - origin_x)) / 2.0;
        let y = (pts[i].y + pts[m].y) / 2.0;
        out[i] = Point2::new(origin_x + offset, y);
    }
    LandmarkSet { points: out }
}

/// Reflection across the vertical line `x = origin_x`.
pub fn reflect(p: Point2, origin_x: f64) -> Point2 {
    Point2::new(2.0 * origin_x - p.x, p.y)
}

/// Roll then yaw normalization, as consumed by the geometric features.
pub fn pose_normalize(lm: &LandmarkSet) -> Result<LandmarkSet> {
    let (rolled, pose) = roll_normalize(lm)?;
    Ok(yaw_normalize(&rolled, pose.origin.x))
}
