use fer_core::imaging::{region_density, sobel_horizontal, GrayImage, Rect};
use proptest::prelude::*;

/// Straight 3x3 correlation over the interior, no row slicing tricks.
fn reference_sobel(img: &GrayImage) -> Vec<u8> {
    const K: [[i64; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0u8; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = 0i64;
            for (ky, row) in K.iter().enumerate() {
                for (kx, &k) in row.iter().enumerate() {
                    acc += k * i64::from(img.get(x + kx - 1, y + ky - 1));
                }
            }
            out[y * w + x] = acc.abs().min(255) as u8;
        }
    }
    out
}

fn arb_image(min: usize, max: usize) -> impl Strategy<Value = GrayImage> {
    (min..=max, min..=max).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h)
            .prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

fn arb_rect() -> impl Strategy<Value = Rect> {
    (-10i64..40, -10i64..40, 1u64..40, 1u64..40).prop_map(|(x, y, w, h)| Rect::new(x, y, w, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sobel_matches_reference(img in arb_image(3, 64)) {
        let fast = sobel_horizontal(&img).unwrap();
        prop_assert_eq!(fast.pixels(), &reference_sobel(&img)[..]);
    }

    #[test]
    fn density_is_a_fraction(img in arb_image(3, 32), roi in arb_rect()) {
        if let Ok(d) = region_density(&img, roi) {
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn density_grows_with_pixel_values(
        img in arb_image(3, 32),
        roi in arb_rect(),
        px in (0usize..32, 0usize..32),
        bump in 1u8..=255,
    ) {
        let Ok(before) = region_density(&img, roi) else { return Ok(()) };
        let (x, y) = (px.0 % img.width(), px.1 % img.height());
        let mut brighter = img.clone();
        brighter.set(x, y, img.get(x, y).saturating_add(bump));
        let after = region_density(&brighter, roi).unwrap();
        prop_assert!(after >= before);
        let inside = (x as i64) >= roi.x0
            && (x as i64) < roi.x0 + roi.w as i64
            && (y as i64) >= roi.y0
            && (y as i64) < roi.y0 + roi.h as i64;
        if inside && img.get(x, y) < 255 {
            prop_assert!(after > before);
        } else if !inside {
            prop_assert_eq!(after, before);
        }
    }

    #[test]
    fn brightness_offset_leaves_edges_unchanged(img in arb_image(3, 32), offset in 0u8..=100) {
        let base = GrayImage::from_fn(img.width(), img.height(), |x, y| img.get(x, y) / 2).unwrap();
        let lifted =
            GrayImage::from_fn(img.width(), img.height(), |x, y| base.get(x, y) + offset).unwrap();
        prop_assert_eq!(sobel_horizontal(&base).unwrap(), sobel_horizontal(&lifted).unwrap());
    }
}

#[test]
fn density_hand_cases() {
    let roi = Rect::new(0, 0, 4, 4);
    let black = GrayImage::filled(4, 4, 0).unwrap();
    assert_eq!(region_density(&black, roi).unwrap(), 0.0);
    let white = GrayImage::filled(4, 4, 255).unwrap();
    assert_eq!(region_density(&white, roi).unwrap(), 1.0);
    let half = GrayImage::from_fn(4, 4, |x, _| if x < 2 { 255 } else { 0 }).unwrap();
    assert_eq!(region_density(&half, roi).unwrap(), 0.5);
}

#[test]
fn horizontal_stripe_response() {
    // A step from 0 to 100 between rows 4 and 5.
    let img = GrayImage::from_fn(10, 10, |_, y| if y < 5 { 0 } else { 100 }).unwrap();
    let edges = sobel_horizontal(&img).unwrap();
    for x in 1..9 {
        assert_eq!(edges.get(x, 4), 255);
        assert_eq!(edges.get(x, 5), 255);
        assert_eq!(edges.get(x, 3), 0);
        assert_eq!(edges.get(x, 6), 0);
    }
    // A vertical step produces no response.
    let img = GrayImage::from_fn(10, 10, |x, _| if x < 5 { 0 } else { 100 }).unwrap();
    assert!(sobel_horizontal(&img).unwrap().pixels().iter().all(|&v| v == 0));
}
