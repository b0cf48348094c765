//! Polygon mathematics: extents, shoelace area, scanline intersections,
//! pixel-center rasterization, contour distance, arc-length sampling and rotation.
//!
//! Coordinates are image pixels with y growing downward. Polygons are closed
//! implicitly (the last vertex connects back to the first).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned bounds of a vertex set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extents {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Extents {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

/// Segmentation contour of one fruit.
///
/// Construction enforces at least three vertices, no two consecutive vertices
/// identical (including the closing edge) and non-zero area.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolygonMask {
    vertices: Vec<Point>,
}

impl PolygonMask {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidPolygon(format!(
                "non-finite vertex ({}, {})",
                p.x, p.y
            )));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::InvalidPolygon(format!(
                    "consecutive vertices {} and {} are identical",
                    i,
                    (i + 1) % n
                )));
            }
        }
        if shoelace(&vertices) == 0.0 {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        Ok(Self { vertices })
    }

    pub fn from_coords(coords: &[[f64; 2]]) -> Result<Self> {
        Self::new(coords.iter().copied().map(Point::from).collect())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as (start, end) pairs, closing edge last.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    /// Applies `f` to every vertex. Fails if the image is degenerate.
    pub fn map_vertices(&self, f: impl Fn(Point) -> Point) -> Result<Self> {
        Self::new(self.vertices.iter().copied().map(f).collect())
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        self.map_vertices(|p| Point::new(p.x + dx, p.y + dy))
    }

    /// True if any two non-adjacent edges intersect.
    pub fn self_intersects(&self) -> bool {
        let edges: Vec<_> = self.edges().collect();
        let n = edges.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return true;
                }
            }
        }
        false
    }
}

fn shoelace(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    twice / 2.0
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Dense row-major scalar grid: binary masks, gray planes, gradient or depth maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RasterGrid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(y, x, self.get(x, y));
            }
        }
        out
    }

    /// Number of non-zero cells.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

pub fn extents(poly: &PolygonMask) -> Extents {
    let first = poly.vertices[0];
    poly.vertices.iter().skip(1).fold(
        Extents {
            min_x: first.x,
            max_x: first.x,
            min_y: first.y,
            max_y: first.y,
        },
        |e, p| Extents {
            min_x: e.min_x.min(p.x),
            max_x: e.max_x.max(p.x),
            min_y: e.min_y.min(p.y),
            max_y: e.max_y.max(p.y),
        },
    )
}

/// Absolute shoelace area. Self-intersecting input still yields the absolute
/// shoelace value; callers check [`PolygonMask::self_intersects`] to warn.
pub fn polygon_area(poly: &PolygonMask) -> f64 {
    shoelace(&poly.vertices).abs()
}

/// x-coordinates where the horizontal line at `y` crosses the polygon's edges.
///
/// Each non-horizontal edge counts on the half-open span [min_y, max_y), so a
/// vertex shared by two edges is not counted twice.
pub fn scanline_crossings(poly: &PolygonMask, y: f64) -> Vec<f64> {
    let mut xs = Vec::new();
    for (a, b) in poly.edges() {
        if a.y == b.y {
            continue;
        }
        let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
        if y >= lo.y && y < hi.y {
            let t = (y - lo.y) / (hi.y - lo.y);
            xs.push(lo.x + t * (hi.x - lo.x));
        }
    }
    xs
}

/// Outer horizontal extent of the polygon at height `y`; 0 if the line misses it.
pub fn scanline_diameter(poly: &PolygonMask, y: f64) -> f64 {
    let xs = scanline_crossings(poly, y);
    if xs.is_empty() {
        return 0.0;
    }
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    hi - lo
}

/// Even-odd point-in-polygon test.
pub fn contains(poly: &PolygonMask, p: Point) -> bool {
    let crossings = scanline_crossings(poly, p.y);
    crossings.iter().filter(|&&x| x > p.x).count() % 2 == 1
}

/// Binary raster of a polygon plus whether any part fell outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub grid: RasterGrid,
    pub clipped: bool,
}

/// Pixel `(i, j)` is 1 iff its center `(i + 0.5, j + 0.5)` is inside under the even-odd rule.
pub fn rasterize(poly: &PolygonMask, width: usize, height: usize) -> Rasterized {
    let mut grid = RasterGrid::zeros(width, height);
    let e = extents(poly);
    let clipped =
        e.min_x < 0.0 || e.min_y < 0.0 || e.max_x > width as f64 || e.max_y > height as f64;

    for row in 0..height {
        let yc = row as f64 + 0.5;
        if yc < e.min_y || yc >= e.max_y {
            continue;
        }
        let mut xs = scanline_crossings(poly, yc);
        xs.sort_by(|a, b| a.total_cmp(b));
        for span in xs.chunks_exact(2) {
            // centers in [x0, x1), matching `contains`
            let first = (span[0] - 0.5).ceil();
            let last = (span[1] - 0.5).ceil() - 1.0;
            let first = first.max(0.0);
            let last = last.min(width as f64 - 1.0);
            if last < first {
                continue;
            }
            for col in first as usize..=last as usize {
                grid.set(col, row, 1.0);
            }
        }
    }
    Rasterized { grid, clipped }
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let dot = (p.x - a.x) * dx + (p.y - a.y) * dy;
    if dot <= 0.0 {
        return p.distance(a);
    }
    if dot >= len2 {
        return p.distance(b);
    }
    // perpendicular foot lies inside the segment
    let cross = dx * (p.y - a.y) - dy * (p.x - a.x);
    cross.abs() / len2.sqrt()
}

/// Euclidean distance to the contour. Interior points get their (positive)
/// distance to the nearest edge, not zero.
pub fn point_to_polygon_distance(p: Point, poly: &PolygonMask) -> f64 {
    poly.edges()
        .map(|(a, b)| point_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

/// `n` points equally spaced by arc length along the closed contour, starting at vertex 0.
pub fn sample_boundary(poly: &PolygonMask, n: usize) -> Result<Vec<Point>> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "boundary sampling needs n >= 3, got {n}"
        )));
    }
    let edges: Vec<(Point, Point, f64)> = poly
        .edges()
        .map(|(a, b)| (a, b, a.distance(b)))
        .collect();
    let perimeter: f64 = edges.iter().map(|e| e.2).sum();

    let mut out = Vec::with_capacity(n);
    let mut edge = 0;
    let mut walked = 0.0; // arc length at the start of `edge`
    for k in 0..n {
        let target = perimeter * k as f64 / n as f64;
        while edge + 1 < edges.len() && walked + edges[edge].2 <= target {
            walked += edges[edge].2;
            edge += 1;
        }
        let (a, b, len) = edges[edge];
        let t = ((target - walked) / len).clamp(0.0, 1.0);
        out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
    }
    Ok(out)
}

/// Rotates `p` about `center`. Positive angles turn counter-clockwise in math
/// orientation, which is clockwise on screen because image y grows downward.
pub fn rotate_point(p: Point, center: Point, angle: f64) -> Point {
    if angle == 0.0 {
        return p;
    }
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (p.x - center.x, p.y - center.y);
    Point::new(center.x + dx * c - dy * s, center.y + dx * s + dy * c)
}

pub fn rotate_polygon(poly: &PolygonMask, center: Point, angle: f64) -> Result<PolygonMask> {
    poly.map_vertices(|p| rotate_point(p, center, angle))
}
