//! Fruit pose from the body/carpopodium keypoints and rotation to upright.
//!
//! Upright means the carpopodium sits directly above the body on screen. The
//! unsigned angle to screen-up is `theta`; `theta_signed` is positive when the
//! carpopodium leans to the right. Correction rotates by `-theta_signed`
//! about the image center using the convention of [`geometry::rotate_point`].

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::formats::ImageBuffer;
use crate::geometry::{self, Point, PolygonMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointPair {
    pub body: Point,
    pub carpopodium: Option<Point>,
}

impl KeypointPair {
    pub fn new(body: Point, carpopodium: Option<Point>) -> Self {
        Self { body, carpopodium }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoseResult {
    /// Carpopodium minus body, image coordinates.
    pub pose: (f64, f64),
    /// Angle to screen-up, in [0, pi].
    pub theta: f64,
    /// In (-pi, pi]; positive when the carpopodium is right of vertical.
    pub theta_signed: f64,
    pub corrected: bool,
}

pub fn compute_pose(kp: &KeypointPair) -> Result<PoseResult> {
    let carp = kp.carpopodium.ok_or(Error::PoseUnavailable)?;
    let dx = carp.x - kp.body.x;
    let dy = carp.y - kp.body.y;
    let norm = dx.hypot(dy);
    if norm == 0.0 {
        return Err(Error::DegeneratePose);
    }
    // e_y = (0, -1): screen-up
    let theta = (-dy / norm).clamp(-1.0, 1.0).acos();
    let mut theta_signed = dx.atan2(-dy);
    if theta_signed <= -PI {
        theta_signed = PI;
    }
    Ok(PoseResult {
        pose: (dx, dy),
        theta,
        theta_signed,
        corrected: false,
    })
}

/// Output of [`correct_pose`]: the rotated image, polygon and keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub image: ImageBuffer,
    pub polygon: PolygonMask,
    pub keypoints: KeypointPair,
    pub pose: PoseResult,
}

pub fn image_center(image: &ImageBuffer) -> Point {
    Point::new(image.width as f64 / 2.0, image.height as f64 / 2.0)
}

/// Rotates image, polygon and keypoints so the carpopodium is directly above the body.
///
/// The image keeps its size; destination pixels whose source falls outside the
/// input are black. Image samples are bilinear, polygon vertices are exact.
pub fn correct_pose(image: &ImageBuffer, poly: &PolygonMask, kp: &KeypointPair) -> Result<Corrected> {
    let mut pose = compute_pose(kp)?;
    let angle = -pose.theta_signed;
    let center = image_center(image);

    let polygon = geometry::rotate_polygon(poly, center, angle)?;
    let keypoints = KeypointPair {
        body: geometry::rotate_point(kp.body, center, angle),
        carpopodium: kp.carpopodium.map(|c| geometry::rotate_point(c, center, angle)),
    };
    let image = rotate_image(image, angle);
    pose.corrected = true;
    Ok(Corrected {
        image,
        polygon,
        keypoints,
        pose,
    })
}

/// Rotates about the image center by `angle` (same sign convention as
/// [`geometry::rotate_point`]), filling uncovered pixels with black.
pub fn rotate_image(image: &ImageBuffer, angle: f64) -> ImageBuffer {
    if angle == 0.0 {
        return image.clone();
    }
    let (w, h, ch) = (image.width, image.height, image.channels);
    let center = image_center(image);
    let mut out = vec![0u8; image.data.len()];
    for j in 0..h {
        for i in 0..w {
            let dst = Point::new(i as f64 + 0.5, j as f64 + 0.5);
            let src = geometry::rotate_point(dst, center, -angle);
            if src.x < 0.0 || src.y < 0.0 || src.x > w as f64 || src.y > h as f64 {
                continue;
            }
            // continuous coordinates with pixel centers on integers
            let u = src.x - 0.5;
            let v = src.y - 0.5;
            let x0 = u.floor();
            let y0 = v.floor();
            let (fx, fy) = (u - x0, v - y0);
            let clampx = |x: f64| x.clamp(0.0, (w - 1) as f64) as usize;
            let clampy = |y: f64| y.clamp(0.0, (h - 1) as f64) as usize;
            let (xa, xb) = (clampx(x0), clampx(x0 + 1.0));
            let (ya, yb) = (clampy(y0), clampy(y0 + 1.0));
            for c in 0..ch {
                let s = |x: usize, y: usize| image.sample(x, y, c) as f64;
                let top = s(xa, ya) * (1.0 - fx) + s(xb, ya) * fx;
                let bottom = s(xa, yb) * (1.0 - fx) + s(xb, yb) * fx;
                let value = top * (1.0 - fy) + bottom * fy;
                out[(j * w + i) * ch + c] = value.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageBuffer {
        width: w,
        height: h,
        channels: ch,
        data: out,
    }
}
