//! Evaluation: relative error, box-plot statistics, mean edge error, mask IoU
//! and single-class precision / recall / mAP50.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{self, PolygonMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Trait {
    Width,
    Height,
    Area,
    Volume,
}

impl Trait {
    pub const ALL: [Trait; 4] = [Trait::Width, Trait::Height, Trait::Area, Trait::Volume];

    pub fn name(self) -> &'static str {
        match self {
            Trait::Width => "width",
            Trait::Height => "height",
            Trait::Area => "area",
            Trait::Volume => "volume",
        }
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trait {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Trait::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown trait `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeError {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    /// Signed percent; positive when the prediction is larger.
    pub value: f64,
}

/// Signed relative error in percent.
pub fn relative_error(truth: f64, predicted: f64) -> Result<f64> {
    if !(truth > 0.0) {
        return Err(Error::InvalidInput(format!(
            "ground truth must be > 0, got {truth}"
        )));
    }
    Ok((predicted - truth) / truth * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median and Tukey hinges. For odd `n` the median is excluded from both
/// halves; a single value is its own median and quartiles.
pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("box statistics of an empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("box statistics need finite values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = median_sorted(&v);
    let (q1, q3) = if n == 1 {
        (median, median)
    } else {
        let half = n / 2;
        let lower = &v[..half];
        let upper = &v[n - half..];
        (median_sorted(lower), median_sorted(upper))
    };
    Ok(BoxStats {
        median,
        q1,
        q3,
        min: v[0],
        max: v[n - 1],
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeErrorReport {
    /// Mean normalized distance per (pred, gt) pair, percent.
    pub per_image: Vec<f64>,
    /// Mean of `per_image`, percent.
    pub mee: f64,
    /// Number of pairs.
    pub m: usize,
    /// Boundary samples per predicted mask.
    pub n: usize,
}

pub const DEFAULT_EDGE_SAMPLES: usize = 100;

/// Mean edge error of one pair: sampled predicted-boundary points, distance to
/// the ground-truth contour, divided by the ground-truth bounding-box diagonal.
pub fn edge_error(pred: &PolygonMask, gt: &PolygonMask, n_samples: usize) -> Result<f64> {
    let diag = geometry::extents(gt).diagonal();
    if !(diag > 0.0) {
        return Err(Error::InvalidPolygon("ground-truth contour has no extent".into()));
    }
    let points = geometry::sample_boundary(pred, n_samples)?;
    let total: f64 = points
        .iter()
        .map(|&p| geometry::point_to_polygon_distance(p, gt) / diag)
        .sum();
    Ok(total / n_samples as f64 * 100.0)
}

pub fn mean_edge_error(pairs: &[(PolygonMask, PolygonMask)], n_samples: usize) -> Result<EdgeErrorReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("mean edge error needs at least one pair".into()));
    }
    let per_image = pairs
        .iter()
        .map(|(pred, gt)| edge_error(pred, gt, n_samples))
        .collect::<Result<Vec<_>>>()?;
    let mee = per_image.iter().sum::<f64>() / per_image.len() as f64;
    Ok(EdgeErrorReport {
        m: per_image.len(),
        per_image,
        mee,
        n: n_samples,
    })
}

/// IoU of the two rasterized masks on a `(width, height)` grid; 0 when both are empty.
pub fn mask_iou(a: &PolygonMask, b: &PolygonMask, grid: (usize, usize)) -> f64 {
    let ra = geometry::rasterize(a, grid.0, grid.1).grid;
    let rb = geometry::rasterize(b, grid.0, grid.1).grid;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in ra.data.iter().zip(&rb.data) {
        let (x, y) = (*x != 0.0, *y != 0.0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionEval {
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
}

pub const IOU_THRESHOLD: f64 = 0.5;
pub const CONFIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ScenePolygons {
    pub preds: Vec<(PolygonMask, f64)>,
    pub gts: Vec<PolygonMask>,
    pub grid: (usize, usize),
}

/// Detections of one image reduced to confidences and a pred x gt IoU matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredScene {
    pub confidences: Vec<f64>,
    pub ious: Vec<Vec<f64>>,
    pub n_gt: usize,
}

impl ScoredScene {
    pub fn from_polygons(scene: &ScenePolygons) -> Self {
        Self {
            confidences: scene.preds.iter().map(|p| p.1).collect(),
            ious: scene
                .preds
                .iter()
                .map(|(p, _)| scene.gts.iter().map(|g| mask_iou(p, g, scene.grid)).collect())
                .collect(),
            n_gt: scene.gts.len(),
        }
    }
}

/// Greedy matching in descending confidence: each prediction takes the
/// unmatched ground truth with highest IoU, if that IoU reaches the threshold.
/// Returns `(confidence, is_true_positive)` per prediction.
pub fn match_scene(scene: &ScoredScene, iou_threshold: f64) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..scene.confidences.len()).collect();
    order.sort_by(|&a, &b| scene.confidences[b].total_cmp(&scene.confidences[a]).then(a.cmp(&b)));
    let mut taken = vec![false; scene.n_gt];
    let mut out = Vec::with_capacity(order.len());
    for p in order {
        let best = (0..scene.n_gt)
            .filter(|&g| !taken[g] && scene.ious[p][g] >= iou_threshold)
            .max_by(|&a, &b| scene.ious[p][a].total_cmp(&scene.ious[p][b]).then(b.cmp(&a)));
        if let Some(g) = best {
            taken[g] = true;
        }
        out.push((scene.confidences[p], best.is_some()));
    }
    out
}

/// All-point interpolated area under the precision envelope.
pub fn average_precision(matches: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut sorted = matches.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut recall = vec![0.0];
    let mut precision = vec![1.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, hit) in &sorted {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

pub fn detection_eval_scored(scenes: &[ScoredScene]) -> DetectionEval {
    let mut matches = Vec::new();
    let mut n_gt = 0;
    for s in scenes {
        matches.extend(match_scene(s, IOU_THRESHOLD));
        n_gt += s.n_gt;
    }
    let kept: Vec<_> = matches
        .iter()
        .filter(|m| m.0 >= CONFIDENCE_THRESHOLD)
        .collect();
    let tp = kept.iter().filter(|m| m.1).count();
    let precision = if kept.is_empty() {
        0.0
    } else {
        tp as f64 / kept.len() as f64
    };
    let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
    DetectionEval {
        precision,
        recall,
        map50: average_precision(&matches, n_gt),
        iou_threshold: IOU_THRESHOLD,
        confidence_threshold: CONFIDENCE_THRESHOLD,
    }
}

pub fn detection_eval(scenes: &[ScenePolygons]) -> DetectionEval {
    let scored: Vec<_> = scenes.iter().map(ScoredScene::from_polygons).collect();
    detection_eval_scored(&scored)
}
