//! Readers and writers for every external artifact: Netpbm images, 16-bit
//! depth maps, scene manifests, calibration samples and the bundled
//! phenotype ground-truth table.
//!
//! Writers emit a canonical header (`P5`/`P6`, `\n` separators, no comments),
//! so a file in canonical form round-trips byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PolygonMask};
use crate::metrics::Trait;

/// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Depth in centimeters; 0 means "no reading".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} depth map with {} values",
                width,
                height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "depth values must be finite and >= 0, got {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, cm: f64) -> Result<Self> {
        Self::new(width, height, vec![cm; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn has_reading(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmKind {
    /// P2
    GrayAscii,
    /// P3
    RgbAscii,
    /// P5
    GrayBinary,
    /// P6
    RgbBinary,
}

impl PnmKind {
    fn channels(self) -> usize {
        match self {
            PnmKind::GrayAscii | PnmKind::GrayBinary => 1,
            PnmKind::RgbAscii | PnmKind::RgbBinary => 3,
        }
    }

    fn is_ascii(self) -> bool {
        matches!(self, PnmKind::GrayAscii | PnmKind::RgbAscii)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnmHeader {
    pub kind: PnmKind,
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Offset of the first sample byte (binary) or first sample token (ASCII).
    pub data_offset: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "{what} is not a number: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn parse_pnm_header(bytes: &[u8]) -> Result<PnmHeader> {
    let mut cur = Cursor { bytes, pos: 0 };
    let kind = match cur.token() {
        Some(b"P2") => PnmKind::GrayAscii,
        Some(b"P3") => PnmKind::RgbAscii,
        Some(b"P5") => PnmKind::GrayBinary,
        Some(b"P6") => PnmKind::RgbBinary,
        Some(other) => {
            return Err(Error::MalformedHeader(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
        None => return Err(Error::MalformedHeader("empty file".into())),
    };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} out of range")));
    }
    // a single whitespace byte separates the header from the samples
    if cur.pos >= bytes.len() {
        return Err(Error::TruncatedData {
            expected: width * height * kind.channels(),
            found: 0,
        });
    }
    Ok(PnmHeader {
        kind,
        width,
        height,
        maxval,
        data_offset: cur.pos + 1,
    })
}

/// Samples as u16 regardless of depth; validates length.
fn parse_samples(bytes: &[u8], header: &PnmHeader) -> Result<Vec<u16>> {
    let count = header.width * header.height * header.kind.channels();
    if header.kind.is_ascii() {
        let mut cur = Cursor {
            bytes,
            pos: header.data_offset.min(bytes.len()),
        };
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let v = match cur.token() {
                Some(tok) => std::str::from_utf8(tok)
                    .ok()
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| {
                        Error::MalformedHeader(format!(
                            "bad sample {:?}",
                            String::from_utf8_lossy(tok)
                        ))
                    })?,
                None => {
                    return Err(Error::TruncatedData {
                        expected: count,
                        found: out.len(),
                    })
                }
            };
            if v > header.maxval {
                return Err(Error::Validation(format!(
                    "sample {v} exceeds maxval {}",
                    header.maxval
                )));
            }
            out.push(v as u16);
        }
        Ok(out)
    } else {
        let wide = header.maxval > 255;
        let needed = if wide { count * 2 } else { count };
        let body = &bytes[header.data_offset.min(bytes.len())..];
        if body.len() < needed {
            return Err(Error::TruncatedData {
                expected: needed,
                found: body.len(),
            });
        }
        let out: Vec<u16> = if wide {
            body[..needed]
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]))
                .collect()
        } else {
            body[..needed].iter().map(|&b| b as u16).collect()
        };
        if let Some(v) = out.iter().find(|&&v| v as u32 > header.maxval) {
            return Err(Error::Validation(format!(
                "sample {v} exceeds maxval {}",
                header.maxval
            )));
        }
        Ok(out)
    }
}

pub fn parse_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let header = parse_pnm_header(bytes)?;
    if header.maxval != 255 {
        return Err(Error::UnsupportedMaxval(header.maxval));
    }
    let samples = parse_samples(bytes, &header)?;
    ImageBuffer::new(
        header.width,
        header.height,
        header.kind.channels(),
        samples.into_iter().map(|v| v as u8).collect(),
    )
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    parse_image(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Reads just enough of the file to return `(width, height)`.
pub fn read_image_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let h = parse_pnm_header(&bytes)?;
    Ok((h.width, h.height))
}

/// Binary P5 (gray) or P6 (RGB), maxval 255.
pub fn encode_image(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn write_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_image(img)).map_err(|e| Error::io(path, e))
}

/// 16-bit P5 PGM, maxval 65535, samples in millimeters.
pub fn parse_depth(bytes: &[u8]) -> Result<DepthMap> {
    let header = parse_pnm_header(bytes)?;
    if header.kind != PnmKind::GrayBinary {
        return Err(Error::MalformedHeader(
            "depth maps must be binary PGM (P5)".into(),
        ));
    }
    if header.maxval != 65535 {
        return Err(Error::UnsupportedMaxval(header.maxval));
    }
    let samples = parse_samples(bytes, &header)?;
    DepthMap::new(
        header.width,
        header.height,
        samples.into_iter().map(|mm| mm as f64 / 10.0).collect(),
    )
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    parse_depth(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Values are rounded to the nearest millimeter; depths beyond 6553.5 cm are rejected.
pub fn encode_depth(depth: &DepthMap) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n65535\n", depth.width, depth.height).into_bytes();
    out.reserve(depth.data.len() * 2);
    for &cm in &depth.data {
        let mm = (cm * 10.0).round();
        if !(0.0..=65535.0).contains(&mm) {
            return Err(Error::InvalidInput(format!(
                "depth {cm} cm not representable as 16-bit millimeters"
            )));
        }
        out.extend_from_slice(&(mm as u16).to_be_bytes());
    }
    Ok(out)
}

pub fn write_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_depth(depth)?).map_err(|e| Error::io(path, e))
}

/// Axis-aligned detection box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && self.x + self.w <= width as f64
            && self.y + self.h <= height as f64
    }

    /// Integer pixel window `(x0, y0, x1, y1)` covering the box (exclusive end).
    pub fn pixel_window(&self) -> (usize, usize, usize, usize) {
        let x0 = self.x.floor().max(0.0) as usize;
        let y0 = self.y.floor().max(0.0) as usize;
        let x1 = (self.x + self.w).ceil().max(0.0) as usize;
        let y1 = (self.y + self.h).ceil().max(0.0) as usize;
        (x0, y0, x1, y1)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    image: String,
    depth: String,
    fruits: Vec<RawFruit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFruit {
    id: i64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
    body: [f64; 2],
    carpopodium: Option<[f64; 2]>,
    pred_polygon: Vec<[f64; 2]>,
    gt_polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FruitEntry {
    pub id: i64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub body: Point,
    pub carpopodium: Option<Point>,
    pub pred_polygon: PolygonMask,
    pub gt_polygon: Option<PolygonMask>,
}

impl FruitEntry {
    /// Pose correction needs both keypoints.
    pub fn pose_available(&self) -> bool {
        self.carpopodium.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneManifest {
    /// Paths as resolved against the manifest's directory.
    pub image: PathBuf,
    pub depth: PathBuf,
    /// `(width, height)` when known; box bounds have been checked against it.
    pub image_size: Option<(usize, usize)>,
    pub fruits: Vec<FruitEntry>,
}

impl SceneManifest {
    pub fn fruit(&self, id: i64) -> Option<&FruitEntry> {
        self.fruits.iter().find(|f| f.id == id)
    }
}

fn polygon_field(id: i64, field: &str, coords: &[[f64; 2]]) -> Result<PolygonMask> {
    if coords.len() < 3 {
        return Err(Error::Schema(format!(
            "fruit {id}: {field} has {} vertices, need at least 3",
            coords.len()
        )));
    }
    PolygonMask::from_coords(coords)
        .map_err(|e| Error::Schema(format!("fruit {id}: {field}: {e}")))
}

/// Parses manifest JSON. Relative paths resolve against `base_dir`; when
/// `image_size` is given, boxes and keypoints are checked against it.
pub fn parse_manifest(
    text: &str,
    base_dir: &Path,
    image_size: Option<(usize, usize)>,
) -> Result<SceneManifest> {
    let raw: RawManifest =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let mut fruits = Vec::with_capacity(raw.fruits.len());
    for f in raw.fruits {
        if !(0.0..=1.0).contains(&f.confidence) {
            return Err(Error::Validation(format!(
                "fruit {}: confidence {} outside [0, 1]",
                f.id, f.confidence
            )));
        }
        let [x, y, w, h] = f.bbox;
        if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::Validation(format!(
                "fruit {}: box {:?} must have positive size",
                f.id, f.bbox
            )));
        }
        let bbox = BoundingBox::new(x, y, w, h);
        let body = Point::from(f.body);
        let carpopodium = f.carpopodium.map(Point::from);
        if carpopodium == Some(body) {
            return Err(Error::Validation(format!(
                "fruit {}: body and carpopodium keypoints coincide",
                f.id
            )));
        }
        if let Some((iw, ih)) = image_size {
            if !bbox.within(iw, ih) {
                return Err(Error::OutOfBounds(format!(
                    "fruit {}: box {:?} exceeds {}x{} image",
                    f.id, f.bbox, iw, ih
                )));
            }
            let inside = |p: Point| p.x >= 0.0 && p.y >= 0.0 && p.x <= iw as f64 && p.y <= ih as f64;
            if !inside(body) || carpopodium.is_some_and(|c| !inside(c)) {
                return Err(Error::OutOfBounds(format!(
                    "fruit {}: keypoint outside {}x{} image",
                    f.id, iw, ih
                )));
            }
        }
        let pred_polygon = polygon_field(f.id, "pred_polygon", &f.pred_polygon)?;
        let gt_polygon = f
            .gt_polygon
            .as_deref()
            .map(|c| polygon_field(f.id, "gt_polygon", c))
            .transpose()?;
        if fruits.iter().any(|e: &FruitEntry| e.id == f.id) {
            return Err(Error::Schema(format!("duplicate fruit id {}", f.id)));
        }
        fruits.push(FruitEntry {
            id: f.id,
            bbox,
            confidence: f.confidence,
            body,
            carpopodium,
            pred_polygon,
            gt_polygon,
        });
    }
    Ok(SceneManifest {
        image: base_dir.join(raw.image),
        depth: base_dir.join(raw.depth),
        image_size,
        fruits,
    })
}

/// Reads and validates a manifest. The referenced image header is read to
/// check box bounds.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    // First pass resolves the image path, second validates against its size.
    let unchecked = parse_manifest(&text, base, None)?;
    let dims = read_image_dims(&unchecked.image)?;
    parse_manifest(&text, base, Some(dims))
}

/// Ruler measurement: scale at a known depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    #[serde(rename = "depth_cm")]
    pub depth: f64,
    pub pixels_per_cm: f64,
}

pub const CALIBRATION_HEADER: [&str; 2] = ["depth_cm", "pixels_per_cm"];

pub fn parse_calibration_csv(text: &str) -> Result<Vec<CalibrationSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != CALIBRATION_HEADER {
        return Err(Error::Schema(format!(
            "calibration header must be `{}`",
            CALIBRATION_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<CalibrationSample>() {
        let sample = rec.map_err(|e| Error::Row {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        if !(sample.depth > 0.0) {
            return Err(Error::Row {
                line,
                message: format!("depth must be > 0, got {}", sample.depth),
            });
        }
        if !(sample.pixels_per_cm > 0.0) {
            return Err(Error::Row {
                line,
                message: format!("pixels_per_cm must be > 0, got {}", sample.pixels_per_cm),
            });
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn read_calibration_csv(path: impl AsRef<Path>) -> Result<Vec<CalibrationSample>> {
    let path = path.as_ref();
    parse_calibration_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// One fruit of the published test set: ground truth, prediction and the
/// printed signed relative error (percent) for every trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub plant: u32,
    pub fruit: u32,
    #[serde(rename = "W_t")]
    pub width_true: f64,
    #[serde(rename = "W_p")]
    pub width_pred: f64,
    #[serde(rename = "W_e")]
    pub width_err: f64,
    #[serde(rename = "H_t")]
    pub height_true: f64,
    #[serde(rename = "H_p")]
    pub height_pred: f64,
    #[serde(rename = "H_e")]
    pub height_err: f64,
    #[serde(rename = "A_t")]
    pub area_true: f64,
    #[serde(rename = "A_p")]
    pub area_pred: f64,
    #[serde(rename = "A_e")]
    pub area_err: f64,
    #[serde(rename = "V_t")]
    pub volume_true: f64,
    #[serde(rename = "V_p")]
    pub volume_pred: f64,
    #[serde(rename = "V_e")]
    pub volume_err: f64,
}

impl GroundTruthRow {
    pub fn truth(&self, t: Trait) -> f64 {
        match t {
            Trait::Width => self.width_true,
            Trait::Height => self.height_true,
            Trait::Area => self.area_true,
            Trait::Volume => self.volume_true,
        }
    }

    pub fn predicted(&self, t: Trait) -> f64 {
        match t {
            Trait::Width => self.width_pred,
            Trait::Height => self.height_pred,
            Trait::Area => self.area_pred,
            Trait::Volume => self.volume_pred,
        }
    }

    pub fn printed_error(&self, t: Trait) -> f64 {
        match t {
            Trait::Width => self.width_err,
            Trait::Height => self.height_err,
            Trait::Area => self.area_err,
            Trait::Volume => self.volume_err,
        }
    }
}

pub const PHENOTYPE_HEADER: &str = "plant,fruit,W_t,W_p,W_e,H_t,H_p,H_e,A_t,A_p,A_e,V_t,V_p,V_e";

const BUNDLED_TABLE: &str = include_str!("../data/test_set.csv");

pub fn parse_phenotype_csv(text: &str) -> Result<Vec<GroundTruthRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>().join(",") != PHENOTYPE_HEADER {
        return Err(Error::Schema(format!(
            "phenotype table header must be `{PHENOTYPE_HEADER}`"
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<GroundTruthRow>() {
        let row = rec.map_err(|e| Error::Row {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rows.len() as u64 + 2;
        for t in Trait::ALL {
            if !(row.truth(t) > 0.0 && row.predicted(t) > 0.0) {
                return Err(Error::Row {
                    line,
                    message: format!("{} values must be > 0", t.name()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_phenotype_csv(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRow>> {
    let path = path.as_ref();
    parse_phenotype_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// The 31-fruit published test table.
pub fn load_bundled_phenotype_table() -> Vec<GroundTruthRow> {
    parse_phenotype_csv(BUNDLED_TABLE).expect("bundled table is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_pgm() {
        let img = parse_image(b"P2 2 2 255 0 64 128 255").unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
        assert_eq!(img.data, vec![0, 64, 128, 255]);
    }

    #[test]
    fn ascii_ppm_with_comments() {
        let img = parse_image(b"P3\n# made by hand\n1 1\n255\n10 20 30\n").unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.data, vec![10, 20, 30]);
    }

    #[test]
    fn binary_ppm_round_trips_byte_identical() {
        let mut file = b"P6\n3 1\n255\n".to_vec();
        file.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255]);
        let img = parse_image(&file).unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.sample(1, 0, 1), 255);
        assert_eq!(encode_image(&img), file);
    }

    #[test]
    fn truncated_binary_is_an_error() {
        let mut file = b"P5\n4 4\n255\n".to_vec();
        file.extend_from_slice(&[0; 8]);
        assert!(matches!(
            parse_image(&file),
            Err(Error::TruncatedData {
                expected: 16,
                found: 8
            })
        ));
        assert!(matches!(
            parse_image(b"P2 2 2 255 1 2 3"),
            Err(Error::TruncatedData { .. })
        ));
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_image(b"P7 1 1 255 0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_image(b"P5 x 1 255 0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_image(b"P2 1 1 15 0"), Err(Error::UnsupportedMaxval(15))));
        assert!(matches!(parse_image(b""), Err(Error::MalformedHeader(_))));
    }

    fn depth_file(w: usize, h: usize, mm: &[u16]) -> Vec<u8> {
        let mut f = format!("P5\n{w} {h}\n65535\n").into_bytes();
        for v in mm {
            f.extend_from_slice(&v.to_be_bytes());
        }
        f
    }

    #[test]
    fn depth_unit_conversion() {
        let d = parse_depth(&depth_file(2, 2, &[600; 4])).unwrap();
        assert!(d.data.iter().all(|&v| v == 60.0));
        let d = parse_depth(&depth_file(3, 1, &[500, 0, 1200])).unwrap();
        assert_eq!(d.data, vec![50.0, 0.0, 120.0]);
        assert!(!d.has_reading(1, 0));
        assert!(d.has_reading(2, 0));
    }

    #[test]
    fn depth_rejects_8bit_and_truncation() {
        let mut f = b"P5\n1 1\n255\n".to_vec();
        f.push(7);
        assert!(matches!(parse_depth(&f), Err(Error::UnsupportedMaxval(255))));
        let mut f = depth_file(2, 2, &[1, 2, 3]);
        f.truncate(f.len() - 1);
        assert!(matches!(parse_depth(&f), Err(Error::TruncatedData { .. })));
    }

    const MINIMAL: &str = r#"{"image": "scene.ppm", "depth": "scene_depth.pgm", "fruits": [
        {"id": 1, "box": [0, 0, 10, 10], "confidence": 0.9, "body": [5, 6],
         "carpopodium": [5, 2], "pred_polygon": [[1,1],[9,1],[5,9]], "gt_polygon": null}]}"#;

    #[test]
    fn minimal_manifest_parses() {
        let m = parse_manifest(MINIMAL, Path::new("/data"), Some((20, 20))).unwrap();
        assert_eq!(m.fruits.len(), 1);
        assert_eq!(m.image, PathBuf::from("/data/scene.ppm"));
        assert!(m.fruits[0].pose_available());
        assert_eq!(m.fruits[0].pred_polygon.len(), 3);
    }

    #[test]
    fn manifest_validation_errors() {
        let bad_conf = MINIMAL.replace("0.9", "1.2");
        assert!(matches!(
            parse_manifest(&bad_conf, Path::new("."), None),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_manifest(MINIMAL, Path::new("."), Some((8, 8))),
            Err(Error::OutOfBounds(_))
        ));
        let two_vertices = MINIMAL.replace("[[1,1],[9,1],[5,9]]", "[[1,1],[9,1]]");
        assert!(matches!(
            parse_manifest(&two_vertices, Path::new("."), None),
            Err(Error::Schema(_))
        ));
        let missing_field = MINIMAL.replace(r#""confidence": 0.9,"#, "");
        assert!(matches!(
            parse_manifest(&missing_field, Path::new("."), None),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn missing_carpopodium_marks_pose_unavailable() {
        let m = MINIMAL.replace("[5, 2]", "null");
        let m = parse_manifest(&m, Path::new("."), None).unwrap();
        assert!(!m.fruits[0].pose_available());
    }

    #[test]
    fn calibration_csv() {
        let s = parse_calibration_csv("depth_cm,pixels_per_cm\n20,50\n40,25\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].depth, 40.0);
        let err = parse_calibration_csv("depth_cm,pixels_per_cm\n20,50\n0,25\n").unwrap_err();
        assert!(matches!(err, Error::Row { line: 3, .. }), "{err}");
        assert!(parse_calibration_csv("depth,px\n1,2\n").is_err());
        assert!(parse_calibration_csv("depth_cm,pixels_per_cm\n").unwrap().is_empty());
    }

    #[test]
    fn bundled_table_rows() {
        let rows = load_bundled_phenotype_table();
        assert_eq!(rows.len(), 31);
        let find = |p, f| rows.iter().find(|r| r.plant == p && r.fruit == f).unwrap();
        let r = find(7, 1);
        assert_eq!((r.width_true, r.width_pred, r.width_err), (2.610, 2.864, 9.739));
        let r = find(2, 2);
        assert_eq!((r.area_true, r.area_pred, r.area_err), (5.25, 4.019, -23.450));
        let r = find(31, 1);
        assert_eq!((r.volume_true, r.volume_pred, r.volume_err), (19.0, 26.551, 39.740));
    }

    proptest! {
        #[test]
        fn image_round_trip(w in 1usize..9, h in 1usize..9, rgb in any::<bool>(), seed in any::<u64>()) {
            let c = if rgb { 3 } else { 1 };
            let data: Vec<u8> = (0..w * h * c).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
            let img = ImageBuffer::new(w, h, c, data).unwrap();
            let bytes = encode_image(&img);
            prop_assert_eq!(&parse_image(&bytes).unwrap(), &img);
            prop_assert_eq!(encode_image(&parse_image(&bytes).unwrap()), bytes);
        }

        #[test]
        fn depth_round_trip(mm in proptest::collection::vec(0u16..=65535, 1..40)) {
            let d = DepthMap::new(mm.len(), 1, mm.iter().map(|&v| v as f64 / 10.0).collect()).unwrap();
            let back = parse_depth(&encode_depth(&d).unwrap()).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
