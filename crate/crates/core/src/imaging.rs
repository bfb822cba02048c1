//! Grayscale rasters, the horizontal-edge Sobel operator and the wrinkle
//! density of a rectangular region.
//!
//! Decoding of PNG (via the `image` crate) and binary PGM lives here too,
//! so everything past ingestion works on [`GrayImage`].

use std::io::Write;
use std::path::Path;

use crate::error::{FerError, Result};

/// Row-major 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(FerError::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(FerError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(FerError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }
}

/// Axis-aligned pixel rectangle; `(x0, y0)` is the inclusive top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub w: u64,
    pub h: u64,
}

impl Rect {
    pub const fn new(x0: i64, y0: i64, w: u64, h: u64) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w * self.h
    }
}

/// BT.601 luma, rounded half-up.
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(f64::from);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    (y + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| luma(p)).collect(),
    }
}

/// Absolute response of the Sobel kernel that detects horizontal edges
/// (rows `-1 -2 -1 / 0 0 0 / 1 2 1`), saturated at 255. The outer one-pixel
/// frame is zero.
pub fn sobel_horizontal(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(FerError::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let src = &img.pixels;
    let mut out = vec![0u8; w * h];
    for y in 1..h - 1 {
        let above = &src[(y - 1) * w..y * w];
        let below = &src[(y + 1) * w..(y + 2) * w];
        let row = &mut out[y * w..(y + 1) * w];
        for x in 1..w - 1 {
            let top = i32::from(above[x - 1]) + 2 * i32::from(above[x]) + i32::from(above[x + 1]);
            let bottom =
                i32::from(below[x - 1]) + 2 * i32::from(below[x]) + i32::from(below[x + 1]);
            row[x] = (bottom - top).unsigned_abs().min(255) as u8;
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        pixels: out,
    })
}

/// Intersection of `roi` with `[0, width) x [0, height)`; may be empty.
pub fn clamp_rect(roi: Rect, width: usize, height: usize) -> Rect {
    fn clamp_axis(start: i64, len: u64, limit: usize) -> (i64, u64) {
        let limit = limit as i64;
        let end = start.saturating_add(len.min(i64::MAX as u64) as i64);
        let lo = start.clamp(0, limit);
        let hi = end.clamp(0, limit);
        (lo, (hi - lo).max(0) as u64)
    }
    let (x0, w) = clamp_axis(roi.x0, roi.w, width);
    let (y0, h) = clamp_axis(roi.y0, roi.h, height);
    Rect { x0, y0, w, h }
}

/// Mean of `pixel / 255` over the part of `roi` that lies inside the image.
pub fn region_density(edges: &GrayImage, roi: Rect) -> Result<f64> {
    let r = clamp_rect(roi, edges.width, edges.height);
    if r.area() == 0 {
        return Err(FerError::EmptyRegion);
    }
    let (x0, y0) = (r.x0 as usize, r.y0 as usize);
    let (w, h) = (r.w as usize, r.h as usize);
    let sum: u64 = (y0..y0 + h)
        .map(|y| {
            let start = y * edges.width + x0;
            edges.pixels[start..start + w]
                .iter()
                .map(|&v| u64::from(v))
                .sum::<u64>()
        })
        .sum();
    Ok(sum as f64 / 255.0 / r.area() as f64)
}

/// Decodes a binary (P5) PGM with maxval at most 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |msg: &str| FerError::InvalidImage(format!("pgm: {msg}"));
    let mut pos = 0;
    let mut fields = [0usize; 3];
    let mut magic = false;
    let mut n = 0;
    while n < 3 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?;
        if token.is_empty() {
            return Err(bad("truncated header"));
        }
        if !magic {
            if token != "P5" {
                return Err(bad("not a binary PGM (P5)"));
            }
            magic = true;
            continue;
        }
        fields[n] = token.parse().map_err(|_| bad("non-numeric header field"))?;
        n += 1;
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("truncated header"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM (maxval 1..=255) is supported"));
    }
    let raster = &bytes[pos..];
    if raster.len() < width * height {
        return Err(bad("truncated raster"));
    }
    let raster = &raster[..width * height];
    let pixels = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&v| ((u32::from(v.min(maxval as u8)) * 255 + maxval as u32 / 2) / maxval as u32) as u8)
            .collect()
    };
    GrayImage::new(width, height, pixels)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| FerError::io(path, e))?;
    file.write_all(&encode_pgm(img))
        .map_err(|e| FerError::io(path, e))
}

/// Reads a PGM or PNG file. Color PNGs go through [`to_grayscale`].
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| FerError::io(path, e))?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes);
    }
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| FerError::InvalidImage(format!("{}: {e}", path.display())))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if let image::DynamicImage::ImageLuma8(gray) = decoded {
        return GrayImage::new(w, h, gray.into_raw());
    }
    let rgb = decoded.to_rgb8();
    let pixels = rgb.pixels().map(|p| p.0).collect();
    Ok(to_grayscale(&RgbImage::new(w, h, pixels)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_extremes_and_red() {
        let img = RgbImage::new(2, 1, vec![[255, 255, 255], [0, 0, 0]]).unwrap();
        assert_eq!(to_grayscale(&img).pixels(), &[255, 0]);
        assert_eq!(luma([255, 0, 0]), 76);
    }

    #[test]
    fn grayscale_preserves_gray_triples() {
        for v in 0..=255u8 {
            assert_eq!(luma([v, v, v]), v);
        }
    }

    #[test]
    fn sobel_rejects_tiny_images() {
        let img = GrayImage::filled(2, 5, 0).unwrap();
        assert!(matches!(
            sobel_horizontal(&img),
            Err(FerError::ImageTooSmall { width: 2, height: 5 })
        ));
    }

    #[test]
    fn sobel_constant_is_zero() {
        for v in [0, 17, 255] {
            let img = GrayImage::filled(7, 5, v).unwrap();
            assert!(sobel_horizontal(&img).unwrap().pixels().iter().all(|&p| p == 0));
        }
    }

    #[test]
    fn sobel_step_edges() {
        let horizontal = GrayImage::from_fn(8, 8, |_, y| if y < 4 { 0 } else { 255 }).unwrap();
        let e = sobel_horizontal(&horizontal).unwrap();
        for x in 1..7 {
            assert_eq!(e.get(x, 3), 255);
            assert_eq!(e.get(x, 4), 255);
            assert_eq!(e.get(x, 2), 0);
            assert_eq!(e.get(x, 0), 0);
        }
        let vertical = GrayImage::from_fn(8, 8, |x, _| if x < 4 { 0 } else { 255 }).unwrap();
        let e = sobel_horizontal(&vertical).unwrap();
        assert!(e.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn clamp_cases() {
        let inside = Rect::new(3, 4, 10, 10);
        assert_eq!(clamp_rect(inside, 100, 100), inside);
        assert_eq!(clamp_rect(Rect::new(-5, -5, 10, 10), 100, 100), Rect::new(0, 0, 5, 5));
        assert_eq!(clamp_rect(Rect::new(200, 10, 10, 10), 100, 100).area(), 0);
        assert_eq!(clamp_rect(Rect::new(-50, 10, 10, 10), 100, 100).area(), 0);
    }

    #[test]
    fn density_hand_cases() {
        let zero = GrayImage::filled(10, 10, 0).unwrap();
        let full = GrayImage::filled(10, 10, 255).unwrap();
        let roi = Rect::new(2, 2, 5, 5);
        assert_eq!(region_density(&zero, roi).unwrap(), 0.0);
        assert_eq!(region_density(&full, roi).unwrap(), 1.0);
        let half = GrayImage::new(2, 2, vec![255, 255, 0, 0]).unwrap();
        assert_eq!(region_density(&half, Rect::new(0, 0, 2, 2)).unwrap(), 0.5);
        assert!(matches!(
            region_density(&zero, Rect::new(20, 20, 3, 3)),
            Err(FerError::EmptyRegion)
        ));
    }

    #[test]
    fn pgm_round_trip_and_rejects() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y) as u8).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
        let commented = b"P5\n# made by hand\n2 1\n255\n\x07\x09";
        assert_eq!(decode_pgm(commented).unwrap().pixels(), &[7, 9]);
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\0\0").is_err());
    }
}
