//! The 32-dimensional feature vector: 27 segment orientations from five
//! landmark polylines of the pose-normalized face, followed by 5 wrinkle
//! densities read from landmark-anchored rectangles of the edge map.

use std::f64::consts::PI;

use crate::error::{FerError, Result};
use crate::geometry::{eye_centers, pose_normalize, LandmarkSet, Point2, LANDMARK_COUNT};
use crate::imaging::{region_density, sobel_horizontal, GrayImage, Rect};

pub const GEOMETRIC_DIMS: usize = 27;
pub const TEXTURE_DIMS: usize = 5;
pub const FEATURE_DIMS: usize = GEOMETRIC_DIMS + TEXTURE_DIMS;

/// A named landmark polyline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSpec {
    pub name: &'static str,
    pub indices: &'static [usize],
}

/// Geometric regions in feature order. The eyebrow and eyelid polylines
/// together form the right eyelid-and-eyebrow region.
pub const REGIONS: [RegionSpec; 6] = [
    RegionSpec {
        name: "right eyebrow",
        indices: &[17, 18, 19, 20, 21],
    },
    RegionSpec {
        name: "right upper eyelid",
        indices: &[36, 37, 38, 39],
    },
    RegionSpec {
        name: "upper outer lip",
        indices: &[48, 49, 50, 51, 52, 53, 54],
    },
    RegionSpec {
        name: "upper inner lip",
        indices: &[60, 61, 62, 63, 64],
    },
    RegionSpec {
        name: "lower inner lip",
        indices: &[60, 67, 66, 65, 64],
    },
    RegionSpec {
        name: "lower outer lip",
        indices: &[48, 59, 58, 57, 56, 55, 54],
    },
];

pub const TEXTURE_REGION_NAMES: [&str; TEXTURE_DIMS] = [
    "between eyes",
    "right of right eye",
    "left of left eye",
    "right cheek",
    "left cheek",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    values: [f64; FEATURE_DIMS],
}

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_DIMS]) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64; FEATURE_DIMS] {
        &self.values
    }

    pub fn geometric(&self) -> &[f64] {
        &self.values[..GEOMETRIC_DIMS]
    }

    pub fn texture(&self) -> &[f64] {
        &self.values[GEOMETRIC_DIMS..]
    }
}

/// Orientation `atan2(dy, dx)` of every consecutive segment of the polyline.
pub fn segment_angles(lm: &LandmarkSet, region: &RegionSpec) -> Result<Vec<f64>> {
    if let Some(&bad) = region.indices.iter().find(|&&i| i >= LANDMARK_COUNT) {
        return Err(FerError::IndexOutOfRange(bad));
    }
    region
        .indices
        .windows(2)
        .map(|pair| {
            let (a, b) = (lm.get(pair[0]), lm.get(pair[1]));
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            if dx == 0.0 && dy == 0.0 {
                return Err(FerError::DegenerateSegment(pair[0], pair[1]));
            }
            Ok(dy.atan2(dx))
        })
        .collect()
}

/// Segment angles of all regions, concatenated. Expects landmarks that have
/// already been through [`pose_normalize`].
pub fn geometric_features(lm: &LandmarkSet) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(GEOMETRIC_DIMS);
    for region in &REGIONS {
        out.extend(segment_angles(lm, region)?);
    }
    debug_assert_eq!(out.len(), GEOMETRIC_DIMS);
    Ok(out)
}

fn centered_rect(center: Point2, w: f64, h: f64) -> Rect {
    Rect::new(
        (center.x - w / 2.0).round() as i64,
        (center.y - h / 2.0).round() as i64,
        w.round().max(0.0) as u64,
        h.round().max(0.0) as u64,
    )
}

/// Wrinkle regions in image coordinates, sized by the inter-ocular distance.
pub fn texture_rois(lm: &LandmarkSet) -> Result<[Rect; TEXTURE_DIMS]> {
    let (right, left) = eye_centers(lm);
    let d = right.distance(left);
    if d == 0.0 {
        return Err(FerError::DegenerateFace);
    }
    let p = |i| lm.get(i);
    let offset = |q: Point2, dx: f64| Point2::new(q.x + dx, q.y);
    Ok([
        centered_rect(p(21).midpoint(p(22)), 0.5 * d, 0.6 * d),
        centered_rect(offset(p(36), -0.35 * d), 0.3 * d, 0.5 * d),
        centered_rect(offset(p(45), 0.35 * d), 0.3 * d, 0.5 * d),
        centered_rect(p(41).midpoint(p(48)), 0.5 * d, 0.5 * d),
        centered_rect(p(46).midpoint(p(54)), 0.5 * d, 0.5 * d),
    ])
}

pub fn texture_features(edges: &GrayImage, lm: &LandmarkSet) -> Result<[f64; TEXTURE_DIMS]> {
    let rois = texture_rois(lm)?;
    let mut out = [0.0; TEXTURE_DIMS];
    for (slot, roi) in out.iter_mut().zip(rois) {
        *slot = region_density(edges, roi)?;
    }
    Ok(out)
}

/// Full pipeline for one face: geometry from the pose-normalized landmarks,
/// texture from the Sobel map of the untouched image and raw landmarks.
pub fn extract(img: &GrayImage, lm: &LandmarkSet) -> Result<FeatureVector> {
    let edges = sobel_horizontal(img)?;
    let texture = texture_features(&edges, lm)?;
    let geometric = geometric_features(&pose_normalize(lm)?)?;

    let mut values = [0.0; FEATURE_DIMS];
    values[..GEOMETRIC_DIMS].copy_from_slice(&geometric);
    values[GEOMETRIC_DIMS..].copy_from_slice(&texture);
    debug_assert!(values[..GEOMETRIC_DIMS].iter().all(|a| a.abs() <= PI));
    Ok(FeatureVector::new(values))
}
