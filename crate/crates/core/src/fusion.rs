//! Depth-to-scale calibration and pixel/depth fusion.
//!
//! The camera model is a single inverse proportion: at depth `d` cm one
//! centimeter spans `k / d` pixels. A trait measured in pixels with
//! dimension `j` (1 for lengths, 2 for areas, 3 for volumes) converts to
//! centimeters as `P_px / (k / d)^j`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::formats::{BoundingBox, CalibrationSample, DepthMap};
use crate::geometry::{self, PolygonMask};
use crate::phenotype::PixelPhenotype;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationModel {
    /// pixels-per-cm times cm of depth.
    pub k: f64,
    pub n_samples: usize,
    /// RMS of `pixels_per_cm - k / depth`, in pixels per cm.
    pub rms_residual: f64,
}

impl CalibrationModel {
    pub fn from_k(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidInput(format!("k must be > 0, got {k}")));
        }
        Ok(Self {
            k,
            n_samples: 0,
            rms_residual: 0.0,
        })
    }

    pub fn scale_at(&self, depth_cm: f64) -> f64 {
        self.k / depth_cm
    }

    /// Model file body: `k=<value>`.
    pub fn to_model_string(&self) -> String {
        format!("k={}\n", self.k)
    }

    pub fn parse_model(text: &str) -> Result<Self> {
        let line = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .ok_or_else(|| Error::Schema("empty calibration model".into()))?;
        let value = line
            .strip_prefix("k=")
            .ok_or_else(|| Error::Schema(format!("expected `k=<value>`, got `{line}`")))?;
        let k: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("bad k value `{value}`")))?;
        Self::from_k(k)
    }

    pub fn write_model(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_model_string()).map_err(|e| Error::io(path, e))
    }
}

/// Sum of squared pixel-space residuals for a candidate `k`.
pub fn calibration_objective(samples: &[CalibrationSample], k: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let r = s.pixels_per_cm - k / s.depth;
            r * r
        })
        .sum()
}

/// Least squares in pixel space. With `u = 1/depth` the model is linear in
/// `k`, so `k = sum(p*u) / sum(u^2)`.
pub fn fit_calibration(samples: &[CalibrationSample]) -> Result<CalibrationModel> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no calibration samples".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if !(s.depth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample {i}: depth must be > 0, got {}",
                s.depth
            )));
        }
        if !(s.pixels_per_cm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample {i}: pixels_per_cm must be > 0, got {}",
                s.pixels_per_cm
            )));
        }
        num += s.pixels_per_cm / s.depth;
        den += 1.0 / (s.depth * s.depth);
    }
    let k = num / den;
    let rms_residual = (calibration_objective(samples, k) / samples.len() as f64).sqrt();
    Ok(CalibrationModel {
        k,
        n_samples: samples.len(),
        rms_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthMode {
    /// Reading at the box-center pixel.
    #[default]
    Center,
    /// Median of positive readings whose pixel centers fall inside the fruit polygon.
    MaskMedian,
}

impl FromStr for DepthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(DepthMode::Center),
            "mask-median" => Ok(DepthMode::MaskMedian),
            other => Err(Error::InvalidInput(format!(
                "unknown depth mode `{other}` (expected center|mask-median)"
            ))),
        }
    }
}

impl fmt::Display for DepthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DepthMode::Center => "center",
            DepthMode::MaskMedian => "mask-median",
        })
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Depth (cm) for one fruit. `polygon` is required for [`DepthMode::MaskMedian`].
pub fn depth_at(
    depth: &DepthMap,
    bbox: &BoundingBox,
    mode: DepthMode,
    polygon: Option<&PolygonMask>,
) -> Result<f64> {
    if !bbox.within(depth.width, depth.height) {
        return Err(Error::OutOfBounds(format!(
            "box ({}, {}, {}, {}) outside {}x{} depth map",
            bbox.x, bbox.y, bbox.w, bbox.h, depth.width, depth.height
        )));
    }
    match mode {
        DepthMode::Center => {
            let c = bbox.center();
            let x = (c.x.floor() as usize).min(depth.width - 1);
            let y = (c.y.floor() as usize).min(depth.height - 1);
            let v = depth.get(x, y);
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::MissingDepth(format!("no reading at box center ({x}, {y})")))
            }
        }
        DepthMode::MaskMedian => {
            let poly = polygon.ok_or_else(|| {
                Error::InvalidInput("mask-median depth needs the fruit polygon".into())
            })?;
            let mask = geometry::rasterize(poly, depth.width, depth.height).grid;
            let mut readings: Vec<f64> = mask
                .data
                .iter()
                .zip(&depth.data)
                .filter(|(m, d)| **m != 0.0 && **d > 0.0)
                .map(|(_, d)| *d)
                .collect();
            if readings.is_empty() {
                return Err(Error::MissingDepth("no positive readings under the mask".into()));
            }
            readings.sort_by(f64::total_cmp);
            Ok(median_of_sorted(&readings))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricPhenotype {
    pub width_cm: f64,
    pub height_cm: f64,
    pub area_cm2: f64,
    pub volume_cm3: f64,
    pub depth_used_cm: f64,
    pub scale_px_per_cm: f64,
}

pub fn fuse(px: &PixelPhenotype, model: &CalibrationModel, depth_cm: f64) -> Result<MetricPhenotype> {
    if !(depth_cm > 0.0 && depth_cm.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "depth must be > 0, got {depth_cm}"
        )));
    }
    if !(model.k > 0.0) {
        return Err(Error::InvalidInput(format!("k must be > 0, got {}", model.k)));
    }
    let s = model.scale_at(depth_cm);
    Ok(MetricPhenotype {
        width_cm: px.width_px / s,
        height_cm: px.height_px / s,
        area_cm2: px.area_px2 / (s * s),
        volume_cm3: px.volume_px3 / (s * s * s),
        depth_used_cm: depth_cm,
        scale_px_per_cm: s,
    })
}
