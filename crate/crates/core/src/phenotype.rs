//! Pixel-space phenotypes of a pose-corrected fruit contour.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::formats::{BoundingBox, ImageBuffer};
use crate::geometry::{self, PolygonMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PixelPhenotype {
    pub width_px: f64,
    pub height_px: f64,
    pub area_px2: f64,
    pub volume_px3: f64,
}

impl PixelPhenotype {
    pub fn new(width_px: f64, height_px: f64, area_px2: f64, volume_px3: f64) -> Self {
        Self {
            width_px,
            height_px,
            area_px2,
            volume_px3,
        }
    }
}

/// Copies the pixels under `bbox` (rounded outward to whole pixels).
/// Returns the crop and the `(x, y)` offset callers subtract from scene coordinates.
pub fn crop_individual(image: &ImageBuffer, bbox: &BoundingBox) -> Result<(ImageBuffer, (usize, usize))> {
    if !(bbox.w > 0.0 && bbox.h > 0.0) || !bbox.within(image.width, image.height) {
        return Err(Error::OutOfBounds(format!(
            "box ({}, {}, {}, {}) outside {}x{} image",
            bbox.x, bbox.y, bbox.w, bbox.h, image.width, image.height
        )));
    }
    let (x0, y0, x1, y1) = bbox.pixel_window();
    let (x1, y1) = (x1.min(image.width), y1.min(image.height));
    let ch = image.channels;
    let mut data = Vec::with_capacity((x1 - x0) * (y1 - y0) * ch);
    for y in y0..y1 {
        let row = (y * image.width + x0) * ch;
        data.extend_from_slice(&image.data[row..row + (x1 - x0) * ch]);
    }
    Ok((ImageBuffer::new(x1 - x0, y1 - y0, ch, data)?, (x0, y0)))
}

/// Volume of the solid obtained by spinning each horizontal chord about the
/// vertical axis, integrated with the midpoint rule at one-pixel rows.
pub fn revolution_volume(poly: &PolygonMask) -> f64 {
    let e = geometry::extents(poly);
    let first = e.min_y.ceil() as i64;
    let last = e.max_y.floor() as i64;
    (first..last)
        .map(|row| {
            let d = geometry::scanline_diameter(poly, row as f64 + 0.5);
            PI * (d / 2.0) * (d / 2.0)
        })
        .sum()
}

pub fn measure(poly: &PolygonMask) -> Result<PixelPhenotype> {
    let e = geometry::extents(poly);
    let width_px = e.width();
    let height_px = e.height();
    let area_px2 = geometry::polygon_area(poly);
    let volume_px3 = revolution_volume(poly);
    if !(width_px > 0.0 && height_px > 0.0 && area_px2 > 0.0 && volume_px3 > 0.0) {
        return Err(Error::InvalidPolygon(format!(
            "degenerate fruit contour (w={width_px}, h={height_px}, a={area_px2}, v={volume_px3})"
        )));
    }
    Ok(PixelPhenotype {
        width_px,
        height_px,
        area_px2,
        volume_px3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ngon(n: usize, r: f64, cx: f64, cy: f64) -> PolygonMask {
        PolygonMask::new(
            (0..n)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    Point::new(cx + r * a.cos(), cy + r * a.sin())
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn cylinder() {
        let rect =
            PolygonMask::from_coords(&[[0.0, 0.0], [10.0, 0.0], [10.0, 20.0], [0.0, 20.0]]).unwrap();
        let p = measure(&rect).unwrap();
        assert_eq!((p.width_px, p.height_px, p.area_px2), (10.0, 20.0, 200.0));
        assert_relative_eq!(p.volume_px3, 20.0 * PI * 25.0, max_relative = 1e-12);
    }

    #[test]
    fn sphere_and_cone_within_discretization_error() {
        let v = measure(&ngon(256, 50.0, 100.0, 100.0)).unwrap().volume_px3;
        let sphere = 4.0 / 3.0 * PI * 50f64.powi(3);
        assert!((v - sphere).abs() / sphere < 0.02, "{v} vs {sphere}");

        let cone = PolygonMask::from_coords(&[[0.0, 0.0], [10.0, 0.0], [5.0, 20.0]]).unwrap();
        let v = measure(&cone).unwrap().volume_px3;
        let exact = PI * 25.0 * 20.0 / 3.0;
        assert!((v - exact).abs() / exact < 0.03, "{v} vs {exact}");
    }

    #[test]
    fn sub_pixel_sliver_is_degenerate() {
        // lies entirely between two row centers
        let sliver =
            PolygonMask::from_coords(&[[0.0, 0.6], [10.0, 0.6], [10.0, 0.9], [0.0, 0.9]]).unwrap();
        assert!(measure(&sliver).is_err());
    }

    fn gray(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::new(w, h, 1, (0..(w * h) as u8).collect()).unwrap()
    }

    #[test]
    fn crop_cases() {
        let img = gray(4, 4);
        let (full, off) = crop_individual(&img, &BoundingBox::new(0.0, 0.0, 4.0, 4.0)).unwrap();
        assert_eq!(full, img);
        assert_eq!(off, (0, 0));
        let (c, off) = crop_individual(&img, &BoundingBox::new(1.0, 1.0, 2.0, 2.0)).unwrap();
        assert_eq!(c.data, vec![5, 6, 9, 10]);
        assert_eq!(off, (1, 1));
        assert!(crop_individual(&img, &BoundingBox::new(3.0, 3.0, 2.0, 2.0)).is_err());
    }

    fn arb_blob() -> impl Strategy<Value = PolygonMask> {
        (prop::collection::vec(0.6f64..1.0, 12), 30.0f64..60.0).prop_map(|(radii, r)| {
            let n = radii.len();
            PolygonMask::new(
                radii
                    .iter()
                    .enumerate()
                    .map(|(k, f)| {
                        let a = 2.0 * PI * k as f64 / n as f64;
                        Point::new(100.0 + r * f * a.cos(), 100.0 + r * f * a.sin())
                    })
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn enclosing_cylinder_bound(p in arb_blob()) {
            let m = measure(&p).unwrap();
            prop_assert!(m.volume_px3 <= PI / 4.0 * m.width_px * m.width_px * m.height_px * (1.0 + 1e-12));
        }

        #[test]
        fn volume_invariant_under_horizontal_translation_and_mirror(p in arb_blob(), dx in -40.0f64..40.0) {
            let v = measure(&p).unwrap().volume_px3;
            let moved = p.translate(dx, 0.0).unwrap();
            prop_assert!((measure(&moved).unwrap().volume_px3 - v).abs() <= 1e-9 * v);
            let mirrored = p.map_vertices(|q| Point::new(-q.x, q.y)).unwrap();
            prop_assert!((measure(&mirrored).unwrap().volume_px3 - v).abs() <= 1e-9 * v);
        }

        #[test]
        fn scale_covariance(p in arb_blob(), s in 1.5f64..3.0) {
            let m = measure(&p).unwrap();
            let scaled = measure(&p.map_vertices(|q| Point::new(q.x * s, q.y * s)).unwrap()).unwrap();
            prop_assert!((scaled.width_px / m.width_px - s).abs() < 1e-9 * s);
            prop_assert!((scaled.height_px / m.height_px - s).abs() < 1e-9 * s);
            prop_assert!((scaled.area_px2 / m.area_px2 / (s * s) - 1.0).abs() < 1e-9);
            prop_assert!((scaled.volume_px3 / m.volume_px3 / (s * s * s) - 1.0).abs() < 0.02);
        }
    }
}
