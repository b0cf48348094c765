//! End-to-end commands behind the `tomatoscan` binary.
//!
//! Every command returns a serializable report; the binary only handles
//! argument parsing and output. Reports carry `schema: 1` and contain no
//! wall-clock data unless timing is requested, so repeated runs are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::edgeops;
use crate::error::{Error, Result};
use crate::formats::{self, DepthMap, FruitEntry, GroundTruthRow, ImageBuffer, SceneManifest};
use crate::fusion::{self, CalibrationModel, DepthMode, MetricPhenotype};
use crate::geometry::{self, PolygonMask};
use crate::metrics::{self, BoxStats, DetectionEval, ScenePolygons, Trait};
use crate::phenotype::{self, PixelPhenotype};
use crate::pose::{self, KeypointPair};

pub const SCHEMA_VERSION: u32 = 1;

/// Accepts either a model file (`k=<value>`) or a calibration CSV to fit.
pub fn load_calibration(path: impl AsRef<Path>) -> Result<CalibrationModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with("k=") {
        CalibrationModel::parse_model(&text)
    } else {
        fusion::fit_calibration(&formats::parse_calibration_csv(&text)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PhenotypeOptions {
    pub depth_mode: DepthMode,
    /// Adds `timing_ms` to the report (breaks byte-identical reruns).
    pub timing: bool,
    /// Writes each pose-corrected crop as `fruit_<id>.ppm`/`.pgm` here.
    pub crops_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FruitOutcome {
    Ok {
        pixel: PixelPhenotype,
        depth_used_cm: f64,
        metric: MetricPhenotype,
        /// Angle to upright before correction; absent when pose correction was skipped.
        theta_deg: Option<f64>,
        pose_corrected: bool,
    },
    Error {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FruitRecord {
    pub id: i64,
    #[serde(flatten)]
    pub outcome: FruitOutcome,
    pub warnings: Vec<String>,
}

impl FruitRecord {
    pub fn is_ok(&self) -> bool {
        matches!(self.outcome, FruitOutcome::Ok { .. })
    }

    pub fn metric(&self) -> Option<&MetricPhenotype> {
        match &self.outcome {
            FruitOutcome::Ok { metric, .. } => Some(metric),
            FruitOutcome::Error { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub schema: u32,
    pub image: String,
    pub depth: String,
    pub calibration_k: f64,
    pub depth_mode: DepthMode,
    pub measured_count: usize,
    pub error_count: usize,
    pub fruits: Vec<FruitRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

struct FruitContext<'a> {
    image: &'a ImageBuffer,
    depth: &'a DepthMap,
    model: &'a CalibrationModel,
    options: &'a PhenotypeOptions,
}

fn process_fruit(ctx: &FruitContext<'_>, fruit: &FruitEntry, warnings: &mut Vec<String>) -> Result<FruitOutcome> {
    let (crop, (ox, oy)) = phenotype::crop_individual(ctx.image, &fruit.bbox)?;
    let (dx, dy) = (-(ox as f64), -(oy as f64));
    let local = fruit.pred_polygon.translate(dx, dy)?;
    let shift = |p: geometry::Point| geometry::Point::new(p.x + dx, p.y + dy);
    let kp = KeypointPair::new(shift(fruit.body), fruit.carpopodium.map(shift));

    let (polygon, theta_deg, corrected_crop) = if fruit.pose_available() {
        let c = pose::correct_pose(&crop, &local, &kp)?;
        (c.polygon, Some(c.pose.theta.to_degrees()), c.image)
    } else {
        warnings.push("pose correction skipped: carpopodium keypoint missing".into());
        (local, None, crop)
    };
    if polygon.self_intersects() {
        warnings.push("contour self-intersects; area is the absolute shoelace value".into());
    }
    if let Some(dir) = &ctx.options.crops_dir {
        let ext = if corrected_crop.channels == 1 { "pgm" } else { "ppm" };
        formats::write_image(dir.join(format!("fruit_{}.{ext}", fruit.id)), &corrected_crop)?;
    }

    let pixel = phenotype::measure(&polygon)?;
    let depth_used_cm = fusion::depth_at(
        ctx.depth,
        &fruit.bbox,
        ctx.options.depth_mode,
        Some(&fruit.pred_polygon),
    )?;
    let metric = fusion::fuse(&pixel, ctx.model, depth_used_cm)?;
    Ok(FruitOutcome::Ok {
        pixel,
        depth_used_cm,
        metric,
        theta_deg,
        pose_corrected: fruit.pose_available(),
    })
}

/// Runs separation, pose correction, measurement, depth lookup and fusion
/// for every fruit of an already-loaded scene. Per-fruit failures are
/// recorded in the report, never returned.
pub fn run_phenotype(
    manifest: &SceneManifest,
    image: &ImageBuffer,
    depth: &DepthMap,
    model: &CalibrationModel,
    options: &PhenotypeOptions,
) -> Result<PipelineReport> {
    let start = Instant::now();
    if (depth.width, depth.height) != (image.width, image.height) {
        return Err(Error::DimensionMismatch(format!(
            "depth map {}x{} does not match image {}x{}",
            depth.width, depth.height, image.width, image.height
        )));
    }
    let ctx = FruitContext {
        image,
        depth,
        model,
        options,
    };
    let mut fruits: Vec<&FruitEntry> = manifest.fruits.iter().collect();
    fruits.sort_by_key(|f| f.id);

    let records: Vec<FruitRecord> = fruits
        .into_iter()
        .map(|fruit| {
            let mut warnings = Vec::new();
            let outcome = process_fruit(&ctx, fruit, &mut warnings).unwrap_or_else(|e| {
                FruitOutcome::Error {
                    error: e.to_string(),
                }
            });
            FruitRecord {
                id: fruit.id,
                outcome,
                warnings,
            }
        })
        .collect();
    let measured_count = records.iter().filter(|r| r.is_ok()).count();
    Ok(PipelineReport {
        schema: SCHEMA_VERSION,
        image: manifest.image.display().to_string(),
        depth: manifest.depth.display().to_string(),
        calibration_k: model.k,
        depth_mode: options.depth_mode,
        error_count: records.len() - measured_count,
        measured_count,
        fruits: records,
        timing_ms: options
            .timing
            .then(|| start.elapsed().as_secs_f64() * 1000.0),
    })
}

pub fn cmd_phenotype(
    manifest_path: impl AsRef<Path>,
    calibration_path: impl AsRef<Path>,
    options: &PhenotypeOptions,
) -> Result<PipelineReport> {
    let manifest = formats::read_manifest(manifest_path)?;
    let model = load_calibration(calibration_path)?;
    let image = formats::read_image(&manifest.image)?;
    let depth = formats::read_depth(&manifest.depth)?;
    if let Some(dir) = &options.crops_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    run_phenotype(&manifest, &image, &depth, &model, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorSource {
    /// The signed errors as printed in the table.
    #[default]
    Printed,
    /// Errors recomputed from the truth/prediction pairs.
    Recomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraitStats {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub printed: BoxStats,
    pub recomputed: BoxStats,
    /// Largest |printed - recomputed| over the rows, percentage points.
    pub max_deviation_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub schema: u32,
    pub rows: usize,
    pub traits: Vec<TraitStats>,
}

impl StatsReport {
    pub fn get(&self, t: Trait) -> &TraitStats {
        self.traits
            .iter()
            .find(|s| s.trait_ == t)
            .expect("all traits present")
    }

    /// `trait,median,q1,q3,min,max,n` using the chosen error source.
    pub fn to_csv(&self, source: ErrorSource) -> String {
        let mut out = String::from("trait,median,q1,q3,min,max,n\n");
        for s in &self.traits {
            let b = match source {
                ErrorSource::Printed => &s.printed,
                ErrorSource::Recomputed => &s.recomputed,
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.trait_, b.median, b.q1, b.q3, b.min, b.max, b.n
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn stats_for_rows(rows: &[GroundTruthRow]) -> Result<StatsReport> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("phenotype table has no rows".into()));
    }
    let mut traits = Vec::with_capacity(4);
    for t in Trait::ALL {
        let printed: Vec<f64> = rows.iter().map(|r| r.printed_error(t)).collect();
        let recomputed = rows
            .iter()
            .map(|r| metrics::relative_error(r.truth(t), r.predicted(t)))
            .collect::<Result<Vec<_>>>()?;
        let max_deviation_pp = printed
            .iter()
            .zip(&recomputed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        traits.push(TraitStats {
            trait_: t,
            printed: metrics::box_stats(&printed)?,
            recomputed: metrics::box_stats(&recomputed)?,
            max_deviation_pp,
        });
    }
    Ok(StatsReport {
        schema: SCHEMA_VERSION,
        rows: rows.len(),
        traits,
    })
}

pub enum StatsInput<'a> {
    Bundled,
    Csv(&'a Path),
}

pub fn cmd_stats(input: StatsInput<'_>) -> Result<StatsReport> {
    let rows = match input {
        StatsInput::Bundled => formats::load_bundled_phenotype_table(),
        StatsInput::Csv(path) => formats::read_phenotype_csv(path)?,
    };
    stats_for_rows(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    Mee,
    Map,
    Edgeloss,
}

impl std::str::FromStr for EvalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mee" => Ok(EvalKind::Mee),
            "map" => Ok(EvalKind::Map),
            "edgeloss" => Ok(EvalKind::Edgeloss),
            other => Err(Error::InvalidInput(format!(
                "unknown eval kind `{other}` (expected mee|map|edgeloss)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairValue {
    pub scene: usize,
    pub id: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema: u32,
    pub kind: EvalKind,
    pub scenes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mee_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_mask: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionEval>,
    /// Per (pred, gt) pair: edge error in percent or edge loss.
    pub pairs: Vec<PairValue>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_csv(&self) -> String {
        match self.kind {
            EvalKind::Map => {
                let d = self.detection.expect("map report has detection metrics");
                format!(
                    "metric,value\nprecision,{}\nrecall,{}\nmap50,{}\n",
                    d.precision, d.recall, d.map50
                )
            }
            EvalKind::Mee | EvalKind::Edgeloss => {
                let mut out = String::from("scene,id,value\n");
                for p in &self.pairs {
                    out.push_str(&format!("{},{},{}\n", p.scene, p.id, p.value));
                }
                let total = self.mee_pct.or(self.edge_loss).unwrap_or(0.0);
                out.push_str(&format!("all,mean,{total}\n"));
                out
            }
        }
    }
}

/// Ground-truth contour of an entry: `gt_polygon` when present, else the
/// entry's own polygon (an annotation file lists its contours there).
fn gt_contour(f: &FruitEntry) -> &PolygonMask {
    f.gt_polygon.as_ref().unwrap_or(&f.pred_polygon)
}

/// One loaded scene pair for evaluation.
#[derive(Debug, Clone)]
pub struct EvalScene {
    pub pred: SceneManifest,
    pub gt: SceneManifest,
}

impl EvalScene {
    fn grid(&self) -> Result<(usize, usize)> {
        self.gt
            .image_size
            .or(self.pred.image_size)
            .ok_or_else(|| Error::InvalidInput("scene image size unknown".into()))
    }

    fn paired(&self) -> Result<Vec<(i64, &PolygonMask, &PolygonMask)>> {
        let pred_ids: BTreeSet<i64> = self.pred.fruits.iter().map(|f| f.id).collect();
        let gt_ids: BTreeSet<i64> = self.gt.fruits.iter().map(|f| f.id).collect();
        let unpaired: Vec<i64> = pred_ids.symmetric_difference(&gt_ids).copied().collect();
        if !unpaired.is_empty() {
            return Err(Error::UnpairedIds(unpaired));
        }
        let gt: BTreeMap<i64, &FruitEntry> = self.gt.fruits.iter().map(|f| (f.id, f)).collect();
        let mut preds: Vec<&FruitEntry> = self.pred.fruits.iter().collect();
        preds.sort_by_key(|f| f.id);
        Ok(preds
            .into_iter()
            .map(|p| (p.id, &p.pred_polygon, gt_contour(gt[&p.id])))
            .collect())
    }
}

pub fn run_eval(kind: EvalKind, scenes: &[EvalScene], samples: usize) -> Result<EvalReport> {
    let mut report = EvalReport {
        schema: SCHEMA_VERSION,
        kind,
        scenes: scenes.len(),
        mee_pct: None,
        samples_per_mask: None,
        edge_loss: None,
        detection: None,
        pairs: Vec::new(),
    };
    match kind {
        EvalKind::Mee => {
            let mut pairs = Vec::new();
            let mut labels = Vec::new();
            for (si, s) in scenes.iter().enumerate() {
                for (id, p, g) in s.paired()? {
                    pairs.push((p.clone(), g.clone()));
                    labels.push((si, id));
                }
            }
            let r = metrics::mean_edge_error(&pairs, samples)?;
            report.pairs = labels
                .into_iter()
                .zip(&r.per_image)
                .map(|((scene, id), &value)| PairValue { scene, id, value })
                .collect();
            report.mee_pct = Some(r.mee);
            report.samples_per_mask = Some(samples);
        }
        EvalKind::Edgeloss => {
            for (si, s) in scenes.iter().enumerate() {
                let (w, h) = s.grid()?;
                for (id, p, g) in s.paired()? {
                    let pm = geometry::rasterize(p, w, h).grid;
                    let gm = geometry::rasterize(g, w, h).grid;
                    report.pairs.push(PairValue {
                        scene: si,
                        id,
                        value: edgeops::edge_loss(&pm, &gm)?,
                    });
                }
            }
            if report.pairs.is_empty() {
                return Err(Error::InvalidInput("no mask pairs to evaluate".into()));
            }
            report.edge_loss =
                Some(report.pairs.iter().map(|p| p.value).sum::<f64>() / report.pairs.len() as f64);
        }
        EvalKind::Map => {
            let polys = scenes
                .iter()
                .map(|s| {
                    Ok(ScenePolygons {
                        preds: s
                            .pred
                            .fruits
                            .iter()
                            .map(|f| (f.pred_polygon.clone(), f.confidence))
                            .collect(),
                        gts: s.gt.fruits.iter().map(|f| gt_contour(f).clone()).collect(),
                        grid: s.grid()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            report.detection = Some(metrics::detection_eval(&polys));
        }
    }
    Ok(report)
}

/// Loads prediction/ground-truth manifests pairwise. With no ground-truth
/// paths, each prediction manifest's own `gt_polygon` fields are the reference.
pub fn cmd_eval(kind: EvalKind, preds: &[PathBuf], gts: &[PathBuf], samples: usize) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("at least one prediction file is required".into()));
    }
    if !gts.is_empty() && gts.len() != preds.len() {
        return Err(Error::InvalidInput(format!(
            "{} prediction files but {} ground-truth files",
            preds.len(),
            gts.len()
        )));
    }
    let mut scenes = Vec::with_capacity(preds.len());
    for (i, p) in preds.iter().enumerate() {
        let pred = formats::read_manifest(p)?;
        let gt = match gts.get(i) {
            Some(g) => formats::read_manifest(g)?,
            None => {
                let missing: Vec<i64> = pred
                    .fruits
                    .iter()
                    .filter(|f| f.gt_polygon.is_none())
                    .map(|f| f.id)
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::UnpairedIds(missing));
                }
                pred.clone()
            }
        };
        scenes.push(EvalScene { pred, gt });
    }
    run_eval(kind, &scenes, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub schema: u32,
    #[serde(flatten)]
    pub model: CalibrationModel,
}

pub fn cmd_calibrate(csv_path: impl AsRef<Path>, model_out: Option<&Path>) -> Result<CalibrationModel> {
    let samples = formats::read_calibration_csv(csv_path)?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("calibration CSV has no samples".into()));
    }
    let model = fusion::fit_calibration(&samples)?;
    if let Some(out) = model_out {
        model.write_model(out)?;
    }
    Ok(model)
}

pub fn cmd_boost(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    contrast: f64,
    acutance: f64,
) -> Result<ImageBuffer> {
    let img = formats::read_image(input)?;
    let out = edgeops::edge_boost(&img, contrast, acutance)?;
    formats::write_image(output, &out)?;
    Ok(out)
}
