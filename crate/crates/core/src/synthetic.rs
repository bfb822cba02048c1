//! Parameterized synthetic faces for tests, demos and benchmarks.
//!
//! A symmetric 68-point template is deformed per expression (brow height and
//! tilt, eye opening, mouth shape), jittered, placed in the frame with a random
//! similarity transform and rendered as a grayscale face with horizontal
//! wrinkle stripes inside the texture regions.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{write_landmark_file, DEFAULT_LABELS};
use crate::error::{FerError, Result};
use crate::features::{texture_rois, TEXTURE_DIMS};
use crate::geometry::{LandmarkSet, Point2, LANDMARK_COUNT};
use crate::imaging::{clamp_rect, write_pgm, GrayImage};

/// Template inter-ocular distance, in template units.
pub const TEMPLATE_EYE_DISTANCE: f64 = 80.0;

/// Neutral, bilaterally symmetric face. The eye midpoint is the origin,
/// `y` grows downward and eye centers sit at `(-40, 0)` and `(40, 0)`.
pub fn neutral_template() -> LandmarkSet {
    let mut p = [Point2::default(); LANDMARK_COUNT];
    for i in 0..=8 {
        let t = std::f64::consts::PI * i as f64 / 16.0;
        let x = if i == 8 { 0.0 } else { -100.0 * t.cos() };
        p[i] = Point2::new(x, 10.0 + 120.0 * t.sin());
        p[16 - i] = Point2::new(-x, p[i].y);
    }
    for j in 0..5 {
        let x = -80.0 + 15.0 * j as f64;
        let y = -35.0 - 10.0 * (std::f64::consts::PI * j as f64 / 4.0).sin();
        p[17 + j] = Point2::new(x, y);
        p[26 - j] = Point2::new(-x, y);
    }
    for j in 0..4 {
        p[27 + j] = Point2::new(0.0, -10.0 + 16.0 * j as f64);
    }
    for (j, x) in [-20.0, -10.0, 0.0, 10.0, 20.0].into_iter().enumerate() {
        p[31 + j] = Point2::new(x, if j == 2 { 52.0 } else { 50.0 });
    }
    let right_eye = [(-55., 0.), (-45., -7.), (-35., -7.), (-25., 0.), (-35., 7.), (-45., 7.)];
    for (j, (x, y)) in right_eye.into_iter().enumerate() {
        p[36 + j] = Point2::new(x, y);
    }
    // left eye mirrors the right one: 42<-39, 43<-38, 44<-37, 45<-36, 46<-41, 47<-40
    for (l, r) in [(42, 39), (43, 38), (44, 37), (45, 36), (46, 41), (47, 40)] {
        p[l] = Point2::new(-p[r].x, p[r].y);
    }
    let outer = [
        (-35., 80.), (-22., 73.), (-10., 70.), (0., 72.), (10., 70.), (22., 73.),
        (35., 80.), (22., 90.), (10., 94.), (0., 95.), (-10., 94.), (-22., 90.),
    ];
    for (j, (x, y)) in outer.into_iter().enumerate() {
        p[48 + j] = Point2::new(x, y);
    }
    let inner = [
        (-28., 80.), (-10., 77.), (0., 78.), (10., 77.),
        (28., 80.), (10., 84.), (0., 85.), (-10., 84.),
    ];
    for (j, (x, y)) in inner.into_iter().enumerate() {
        p[60 + j] = Point2::new(x, y);
    }
    LandmarkSet::new(p).expect("template is finite")
}

/// Deformation of the neutral template, in template units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Expression {
    /// Upward shift of both brows.
    pub brow_raise: f64,
    /// Extra upward shift of the inner brow ends (negative lowers them).
    pub brow_inner: f64,
    /// Multiplier on the eyelid opening minus one.
    pub eye_open: f64,
    /// Downward shift of the lower lip and jaw.
    pub mouth_open: f64,
    /// Upward shift of the mouth corners (negative pulls them down).
    pub smile: f64,
    /// Upward shift of the central upper lip.
    pub upper_lip_raise: f64,
    /// Horizontal stretch of the mouth, in units.
    pub mouth_width: f64,
    /// Wrinkle stripe strength per texture region, 0 to 1.
    pub wrinkles: [f64; TEXTURE_DIMS],
}

/// Prototype expression for each default label, in label order.
pub fn expression_for(class: usize) -> Option<Expression> {
    let e = match *DEFAULT_LABELS.get(class)? {
        "anger" => Expression {
            brow_raise: -4.0,
            brow_inner: -9.0,
            eye_open: -0.3,
            mouth_width: -6.0,
            smile: -2.0,
            wrinkles: [0.9, 0.1, 0.1, 0.1, 0.1],
            ..Default::default()
        },
        "disgust" => Expression {
            brow_raise: -3.0,
            brow_inner: -4.0,
            eye_open: -0.4,
            upper_lip_raise: 7.0,
            smile: -4.0,
            wrinkles: [0.5, 0.2, 0.2, 0.9, 0.9],
            ..Default::default()
        },
        "fear" => Expression {
            brow_raise: 6.0,
            brow_inner: 6.0,
            eye_open: 0.6,
            mouth_open: 6.0,
            mouth_width: 8.0,
            smile: -3.0,
            wrinkles: [0.0, 0.0, 0.0, 0.0, 0.0],
            ..Default::default()
        },
        "happy" => Expression {
            smile: 9.0,
            mouth_width: 8.0,
            mouth_open: 2.0,
            eye_open: -0.2,
            wrinkles: [0.0, 0.8, 0.8, 0.6, 0.6],
            ..Default::default()
        },
        "neutral" => Expression::default(),
        "sadness" => Expression {
            brow_inner: 7.0,
            smile: -7.0,
            eye_open: -0.15,
            wrinkles: [0.3, 0.0, 0.0, 0.0, 0.0],
            ..Default::default()
        },
        "surprise" => Expression {
            brow_raise: 12.0,
            eye_open: 0.8,
            mouth_open: 18.0,
            mouth_width: -4.0,
            wrinkles: [0.0, 0.0, 0.0, 0.0, 0.0],
            ..Default::default()
        },
        _ => return None,
    };
    Some(e)
}

impl Expression {
    fn scaled(&self, k: f64) -> Expression {
        Expression {
            brow_raise: self.brow_raise * k,
            brow_inner: self.brow_inner * k,
            eye_open: self.eye_open * k,
            mouth_open: self.mouth_open * k,
            smile: self.smile * k,
            upper_lip_raise: self.upper_lip_raise * k,
            mouth_width: self.mouth_width * k,
            wrinkles: self.wrinkles.map(|w| (w * k).clamp(0.0, 1.0)),
        }
    }

    /// Deformed template, still symmetric and centered on the eye midpoint.
    pub fn apply(&self, template: &LandmarkSet) -> LandmarkSet {
        let mut p = *template.points();
        for i in 17..27 {
            // inner ends are 21 and 22; weight 1 there, 0 at the outer ends
            let inner_weight = if i < 22 { (i - 17) as f64 / 4.0 } else { (26 - i) as f64 / 4.0 };
            p[i].y -= self.brow_raise + self.brow_inner * inner_weight;
        }
        for i in 36..48 {
            p[i].y *= 1.0 + self.eye_open;
        }
        for i in 48..68 {
            let q = &mut p[i];
            let side = q.x / 35.0;
            q.x += self.mouth_width / 2.0 * side;
            let corner = side.abs().powi(2);
            q.y -= self.smile * corner;
            let lower = matches!(i, 55..=59 | 65..=67);
            if lower {
                q.y += self.mouth_open * (1.0 - corner);
            }
            let upper = matches!(i, 49..=53 | 61..=63);
            if upper {
                q.y -= self.upper_lip_raise * (1.0 - 0.5 * corner);
            }
        }
        for i in 5..12 {
            let t = 1.0 - ((i as f64 - 8.0) / 4.0).abs();
            p[i].y += self.mouth_open * 0.6 * t;
        }
        LandmarkSet::new(p).expect("finite deformation")
    }
}

/// Placement and noise of one generated face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    /// Uniform per-coordinate landmark noise, in template units.
    pub point_noise: f64,
    /// Expression intensity range `1 ± intensity`.
    pub intensity: f64,
    /// Max absolute roll, radians.
    pub max_roll: f64,
    /// Relative scale range `1 ± scale`.
    pub scale: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            point_noise: 1.2,
            intensity: 0.2,
            max_roll: 0.2,
            scale: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthFace {
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
    pub class: usize,
}

fn draw_line(img: &mut GrayImage, a: Point2, b: Point2, value: u8) {
    let steps = (b.x - a.x).abs().max((b.y - a.y).abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (a.x + (b.x - a.x) * t).round();
        let y = (a.y + (b.y - a.y) * t).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
            img.set(x as usize, y as usize, value);
        }
    }
}

fn draw_polyline(img: &mut GrayImage, lm: &LandmarkSet, idx: &[usize], value: u8) {
    for w in idx.windows(2) {
        draw_line(img, lm.get(w[0]), lm.get(w[1]), value);
    }
}

/// Renders a face: shaded background, facial contours and wrinkle stripes
/// with strength `wrinkles[r]` inside texture region `r`.
pub fn render_face(
    lm: &LandmarkSet,
    wrinkles: &[f64; TEXTURE_DIMS],
    width: usize,
    height: usize,
    rng: &mut impl Rng,
) -> Result<GrayImage> {
    let mut img = GrayImage::from_fn(width, height, |x, _| 130 + (x * 20 / width) as u8)?;
    for v in 0..width * height {
        let (x, y) = (v % width, v / width);
        let n: i16 = rng.random_range(-3..=3);
        let base = i16::from(img.get(x, y));
        img.set(x, y, (base + n).clamp(0, 255) as u8);
    }
    let contours: [&[usize]; 9] = [
        &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16],
        &[17, 18, 19, 20, 21],
        &[22, 23, 24, 25, 26],
        &[27, 28, 29, 30],
        &[31, 32, 33, 34, 35],
        &[36, 37, 38, 39, 40, 41, 36],
        &[42, 43, 44, 45, 46, 47, 42],
        &[48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 48],
        &[60, 61, 62, 63, 64, 65, 66, 67, 60],
    ];
    for c in contours {
        draw_polyline(&mut img, lm, c, 70);
    }
    let rois = texture_rois(lm)?;
    for (roi, &strength) in rois.iter().zip(wrinkles) {
        if strength <= 0.0 {
            continue;
        }
        let r = clamp_rect(*roi, width, height);
        let depth = (strength * 90.0).round() as u8;
        let (x0, y0) = (r.x0 as usize, r.y0 as usize);
        for y in (y0..y0 + r.h as usize).step_by(4) {
            for x in x0..x0 + r.w as usize {
                let v = img.get(x, y).saturating_sub(depth);
                img.set(x, y, v);
            }
        }
    }
    Ok(img)
}

/// One jittered instance of `class`, scaled so the eyes are about
/// `eye_distance` pixels apart and centered in a `width x height` frame.
pub fn generate_face(
    class: usize,
    width: usize,
    height: usize,
    eye_distance: f64,
    jitter: &Jitter,
    rng: &mut impl Rng,
) -> Result<SynthFace> {
    let proto = expression_for(class)
        .ok_or_else(|| FerError::InvalidConfig(format!("no synthetic expression for class {class}")))?;
    let k = 1.0 + rng.random_range(-jitter.intensity..=jitter.intensity);
    let expr = proto.scaled(k);
    let shape = expr.apply(&neutral_template());

    let scale = eye_distance / TEMPLATE_EYE_DISTANCE
        * (1.0 + rng.random_range(-jitter.scale..=jitter.scale));
    let roll = rng.random_range(-jitter.max_roll..=jitter.max_roll);
    let (sin, cos) = roll.sin_cos();
    let cx = width as f64 / 2.0 + rng.random_range(-0.03..=0.03) * width as f64;
    let cy = height as f64 * 0.35 + rng.random_range(-0.03..=0.03) * height as f64;
    let noise = jitter.point_noise;
    let mut pts = *shape.points();
    for p in pts.iter_mut() {
        let x = p.x + rng.random_range(-noise..=noise);
        let y = p.y + rng.random_range(-noise..=noise);
        *p = Point2::new(
            cx + scale * (x * cos - y * sin),
            cy + scale * (x * sin + y * cos),
        );
    }
    let landmarks = LandmarkSet::new(pts)?;
    let image = render_face(&landmarks, &expr.wrinkles, width, height, rng)?;
    Ok(SynthFace {
        image,
        landmarks,
        class,
    })
}

/// Corpus layout options for [`write_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub per_class: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub eye_distance: f64,
    pub jitter: Jitter,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            per_class: 20,
            seed: 0,
            width: 256,
            height: 256,
            eye_distance: 80.0,
            jitter: Jitter::default(),
        }
    }
}

/// Writes `<id>.pgm` and `<id>.lms` per face plus `manifest.csv` into `dir`
/// and returns the manifest path. Every default label gets `per_class`
/// faces.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| FerError::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut manifest = String::from("sample_id,image_path,label\n");
    for (class, label) in DEFAULT_LABELS.iter().enumerate() {
        for i in 0..spec.per_class {
            let face = generate_face(
                class,
                spec.width,
                spec.height,
                spec.eye_distance,
                &spec.jitter,
                &mut rng,
            )?;
            let id = format!("{label}_{i:03}");
            write_pgm(&dir.join(format!("{id}.pgm")), &face.image)?;
            write_landmark_file(&dir.join(format!("{id}.lms")), &face.landmarks)?;
            manifest.push_str(&format!("{id},{id}.pgm,{label}\n"));
        }
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| FerError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{eye_centers, mirror_index, LANDMARK_COUNT};

    #[test]
    fn template_is_symmetric_with_unit_eyes() {
        let t = neutral_template();
        for i in 0..LANDMARK_COUNT {
            let m = mirror_index(i).unwrap();
            assert_eq!(t.get(i).x, -t.get(m).x, "point {i}");
            assert_eq!(t.get(i).y, t.get(m).y, "point {i}");
        }
        let (r, l) = eye_centers(&t);
        assert_eq!((r, l), (Point2::new(-40.0, 0.0), Point2::new(40.0, 0.0)));
    }

    #[test]
    fn every_default_label_has_an_expression() {
        for c in 0..DEFAULT_LABELS.len() {
            let e = expression_for(c).unwrap();
            let shape = e.apply(&neutral_template());
            assert!(shape.points().iter().all(|p| p.is_finite()));
        }
        assert!(expression_for(7).is_none());
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_face(3, 128, 128, 40.0, &Jitter::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = generate_face(3, 128, 128, 40.0, &Jitter::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.landmarks, b.landmarks);
    }
}
