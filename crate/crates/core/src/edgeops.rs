//! Edge-centric operators: Sobel gradients, the edge L1 loss between two masks,
//! the contrast/acutance preprocessor and a reference forward pass of the
//! edge attention block.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::formats::ImageBuffer;
use crate::geometry::RasterGrid;

pub const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
pub const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    pub gx: RasterGrid,
    pub gy: RasterGrid,
    pub magnitude: RasterGrid,
}

/// 3x3 cross-correlation with zero padding; taps summed row by row.
fn correlate3(grid: &RasterGrid, kernel: &[[f64; 3]; 3]) -> RasterGrid {
    let (w, h) = (grid.width as isize, grid.height as isize);
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            grid.get(x as usize, y as usize)
        }
    };
    let mut out = RasterGrid::zeros(grid.width, grid.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ky, row) in kernel.iter().enumerate() {
                for (kx, k) in row.iter().enumerate() {
                    acc += k * at(x + kx as isize - 1, y + ky as isize - 1);
                }
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

pub fn sobel(grid: &RasterGrid) -> Result<GradientMap> {
    if grid.width < 3 || grid.height < 3 {
        return Err(Error::InvalidInput(format!(
            "sobel needs at least 3x3, got {}x{}",
            grid.width, grid.height
        )));
    }
    let gx = correlate3(grid, &SOBEL_X);
    let gy = correlate3(grid, &SOBEL_Y);
    let magnitude = RasterGrid {
        width: grid.width,
        height: grid.height,
        data: gx
            .data
            .iter()
            .zip(&gy.data)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect(),
    };
    Ok(GradientMap { gx, gy, magnitude })
}

/// Mean absolute difference of the two masks' Sobel magnitudes.
pub fn edge_loss(pred: &RasterGrid, gt: &RasterGrid) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch(format!(
            "pred {}x{} vs gt {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    for (name, g) in [("pred", pred), ("gt", gt)] {
        if let Some(v) = g.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "{name} mask value {v} outside [0, 1]"
            )));
        }
    }
    let a = sobel(pred)?.magnitude;
    let b = sobel(gt)?.magnitude;
    let total: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.data.len() as f64)
}

pub const DEFAULT_CONTRAST: f64 = 1.5;
pub const DEFAULT_ACUTANCE: f64 = 1.6;

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Image-wide mean luma (BT.601 weights), or the plain mean for grayscale.
pub fn mean_luminance(image: &ImageBuffer) -> f64 {
    let pixels = image.width * image.height;
    let sum: f64 = if image.channels == 1 {
        image.data.iter().map(|&v| v as f64).sum()
    } else {
        image
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .sum()
    };
    sum / pixels as f64
}

/// Contrast step: every sample is pushed away from the mean luminance by `lambda`.
pub fn enhance_contrast(image: &ImageBuffer, lambda: f64) -> ImageBuffer {
    let m = mean_luminance(image);
    ImageBuffer {
        data: image
            .data
            .iter()
            .map(|&v| to_u8(m + lambda * (v as f64 - m)))
            .collect(),
        ..image.clone()
    }
}

/// Acutance step: interior samples are pushed away from their 3x3 box mean;
/// the one-pixel border is copied through.
pub fn enhance_acutance(image: &ImageBuffer, lambda: f64) -> ImageBuffer {
    let (w, h, ch) = (image.width, image.height, image.channels);
    let mut out = image.clone();
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for c in 0..ch {
                let mut sum = 0.0;
                for yy in y - 1..=y + 1 {
                    for xx in x - 1..=x + 1 {
                        sum += image.sample(xx, yy, c) as f64;
                    }
                }
                let blur = sum / 9.0;
                let v = image.sample(x, y, c) as f64;
                out.data[(y * w + x) * ch + c] = to_u8(blur + lambda * (v - blur));
            }
        }
    }
    out
}

pub fn edge_boost(image: &ImageBuffer, lambda_c: f64, lambda_a: f64) -> Result<ImageBuffer> {
    if !(lambda_c >= 0.0 && lambda_a >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "enhancement factors must be >= 0, got contrast {lambda_c}, acutance {lambda_a}"
        )));
    }
    Ok(enhance_acutance(&enhance_contrast(image, lambda_c), lambda_a))
}

/// Channel-major feature tensor `C x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::DimensionMismatch(format!(
                "{channels}x{height}x{width} feature map with {} values",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Convolution weights laid out `(out, in, ky, kx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != out_channels * in_channels * kernel * kernel || bias.len() != out_channels {
            return Err(Error::DimensionMismatch(format!(
                "conv {out_channels}x{in_channels}x{kernel}x{kernel}: {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            weights,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx]
    }

    /// Same-size convolution (stride 1, zero padding `kernel / 2`).
    pub fn forward(&self, input: &FeatureMap) -> Result<FeatureMap> {
        if input.channels != self.in_channels {
            return Err(Error::DimensionMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, input.channels
            )));
        }
        let (h, w) = (input.height as isize, input.width as isize);
        let pad = (self.kernel / 2) as isize;
        let mut out = vec![0.0; self.out_channels * input.height * input.width];
        for o in 0..self.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = self.bias[o];
                    for i in 0..self.in_channels {
                        for ky in 0..self.kernel {
                            let sy = y + ky as isize - pad;
                            if sy < 0 || sy >= h {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let sx = x + kx as isize - pad;
                                if sx < 0 || sx >= w {
                                    continue;
                                }
                                acc += self.weight(o, i, ky, kx)
                                    * input.get(i, sy as usize, sx as usize);
                            }
                        }
                    }
                    out[(o as isize * h * w + y * w + x) as usize] = acc;
                }
            }
        }
        FeatureMap::new(self.out_channels, input.height, input.width, out)
    }
}

/// Weights of the three-convolution attention block for `channels` inputs:
/// 3x3 C -> C/2, 3x3 C/2 -> C/2, 1x1 C/2 -> 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub channels: usize,
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub conv3: ConvLayer,
}

impl AttentionWeights {
    pub fn new(channels: usize, conv1: ConvLayer, conv2: ConvLayer, conv3: ConvLayer) -> Result<Self> {
        if channels == 0 || !channels.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "attention needs an even channel count, got {channels}"
            )));
        }
        let half = channels / 2;
        let shapes = [
            (&conv1, half, channels, 3),
            (&conv2, half, half, 3),
            (&conv3, 1, half, 1),
        ];
        for (i, (layer, o, inp, k)) in shapes.iter().enumerate() {
            if layer.out_channels != *o || layer.in_channels != *inp || layer.kernel != *k {
                return Err(Error::DimensionMismatch(format!(
                    "conv{} must be {o}x{inp}x{k}x{k}, got {}x{}x{}x{}",
                    i + 1,
                    layer.out_channels,
                    layer.in_channels,
                    layer.kernel,
                    layer.kernel
                )));
            }
        }
        Ok(Self {
            channels,
            conv1,
            conv2,
            conv3,
        })
    }

    pub fn zeros(channels: usize) -> Result<Self> {
        let half = channels / 2;
        Self::new(
            channels,
            ConvLayer::zeros(half, channels, 3),
            ConvLayer::zeros(half, half, 3),
            ConvLayer::zeros(1, half, 1),
        )
    }

    /// Binary layout: u32 LE channel count, then for each layer its kernel
    /// `(out, in, ky, kx)` followed by its biases, all f32 LE.
    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 4]> {
            r.read_exact(&mut word)
                .map_err(|_| Error::TruncatedData { expected: 4, found: 0 })?;
            Ok(word)
        };
        let channels = u32::from_le_bytes(next(&mut r)?) as usize;
        if channels == 0 || !channels.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "attention needs an even channel count, got {channels}"
            )));
        }
        let half = channels / 2;
        let mut layer = |o: usize, i: usize, k: usize| -> Result<ConvLayer> {
            let mut take = |n: usize| -> Result<Vec<f64>> {
                (0..n)
                    .map(|_| Ok(f32::from_le_bytes(next(&mut r)?) as f64))
                    .collect()
            };
            let weights = take(o * i * k * k)?;
            let bias = take(o)?;
            ConvLayer::new(o, i, k, weights, bias)
        };
        let conv1 = layer(half, channels, 3)?;
        let conv2 = layer(half, half, 3)?;
        let conv3 = layer(1, half, 1)?;
        Self::new(channels, conv1, conv2, conv3)
    }

    /// Inverse of [`AttentionWeights::read_from`]; values are narrowed to f32.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        for layer in [&self.conv1, &self.conv2, &self.conv3] {
            for v in layer.weights.iter().chain(&layer.bias) {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-channel attention map `1 x H x W` with values in (0, 1).
pub fn attention_map(p5: &FeatureMap, w: &AttentionWeights) -> Result<FeatureMap> {
    if p5.channels != w.channels {
        return Err(Error::DimensionMismatch(format!(
            "weights expect {} channels, feature map has {}",
            w.channels, p5.channels
        )));
    }
    let relu = |mut f: FeatureMap| {
        f.data.iter_mut().for_each(|v| *v = v.max(0.0));
        f
    };
    let f1 = relu(w.conv1.forward(p5)?);
    let f2 = relu(w.conv2.forward(&f1)?);
    let mut a = w.conv3.forward(&f2)?;
    a.data.iter_mut().for_each(|v| *v = sigmoid(*v));
    Ok(a)
}

/// Reweights every channel of `p5` by the attention map; output has the input's shape.
pub fn edge_attention_forward(p5: &FeatureMap, w: &AttentionWeights) -> Result<FeatureMap> {
    let a = attention_map(p5, w)?;
    let plane = p5.height * p5.width;
    let data = p5
        .data
        .iter()
        .enumerate()
        .map(|(idx, v)| v * a.data[idx % plane])
        .collect();
    FeatureMap::new(p5.channels, p5.height, p5.width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(width: usize, height: usize, at: usize) -> RasterGrid {
        let mut g = RasterGrid::zeros(width, height);
        for y in 0..height {
            for x in at..width {
                g.set(x, y, 1.0);
            }
        }
        g
    }

    #[test]
    fn flat_field_has_no_gradient() {
        let g = RasterGrid::from_vec(5, 4, vec![0.75; 20]).unwrap();
        let m = sobel(&g).unwrap();
        // zero padding produces border responses; the interior is flat
        for y in 1..3 {
            for x in 1..4 {
                assert_eq!(m.magnitude.get(x, y), 0.0);
            }
        }
        let zero = RasterGrid::zeros(5, 5);
        assert!(sobel(&zero).unwrap().magnitude.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vertical_step() {
        let g = sobel(&step(10, 8, 5)).unwrap();
        for y in 1..7 {
            for x in [4, 5] {
                assert_eq!(g.gx.get(x, y), 4.0);
                assert_eq!(g.gy.get(x, y), 0.0);
                assert_eq!(g.magnitude.get(x, y), 4.0);
            }
            assert_eq!(g.magnitude.get(3, y), 0.0);
            assert_eq!(g.magnitude.get(6, y), 0.0);
        }
    }

    #[test]
    fn small_grid_rejected() {
        assert!(sobel(&RasterGrid::zeros(2, 5)).is_err());
    }

    #[test]
    fn edge_loss_basics() {
        let gt = step(10, 10, 5);
        assert_eq!(edge_loss(&gt, &gt).unwrap(), 0.0);
        let zeros = RasterGrid::zeros(10, 10);
        let expected = sobel(&gt).unwrap().magnitude.data.iter().sum::<f64>() / 100.0;
        assert_eq!(edge_loss(&zeros, &gt).unwrap(), expected);
        assert_eq!(edge_loss(&gt, &zeros).unwrap(), edge_loss(&zeros, &gt).unwrap());
        assert!(edge_loss(&zeros, &RasterGrid::zeros(9, 10)).is_err());
        let mut bad = zeros.clone();
        bad.set(0, 0, 2.0);
        assert!(edge_loss(&bad, &zeros).is_err());
    }

    #[test]
    fn boost_identity_and_flatten() {
        let img = ImageBuffer::new(4, 3, 3, (0..36).map(|v| (v * 7) as u8).collect()).unwrap();
        assert_eq!(edge_boost(&img, 1.0, 1.0).unwrap(), img);
        let flat = enhance_contrast(&img, 0.0);
        let m = mean_luminance(&img).round() as u8;
        assert!(flat.data.iter().all(|&v| v == m));
        // a flat image has no detail for acutance to amplify
        assert_eq!(enhance_acutance(&flat, 1.6), flat);
        assert!(edge_boost(&img, -1.0, 1.0).is_err());
    }

    #[test]
    fn zero_weights_halve_input() {
        let p5 = FeatureMap::new(2, 3, 3, (0..18).map(|v| v as f64 - 4.0).collect()).unwrap();
        let out = edge_attention_forward(&p5, &AttentionWeights::zeros(2).unwrap()).unwrap();
        for (o, i) in out.data.iter().zip(&p5.data) {
            assert_eq!(*o, 0.5 * i);
        }
    }

    #[test]
    fn weight_shape_errors() {
        assert!(AttentionWeights::zeros(3).is_err());
        let bad = AttentionWeights::new(
            4,
            ConvLayer::zeros(2, 4, 3),
            ConvLayer::zeros(2, 2, 1),
            ConvLayer::zeros(1, 2, 1),
        );
        assert!(bad.is_err());
        let p5 = FeatureMap::new(4, 2, 2, vec![1.0; 16]).unwrap();
        assert!(edge_attention_forward(&p5, &AttentionWeights::zeros(2).unwrap()).is_err());
    }

    #[test]
    fn weight_file_round_trip() {
        let mut w = AttentionWeights::zeros(4).unwrap();
        w.conv1.weights.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 * 0.25);
        w.conv3.bias[0] = -1.5;
        let mut bytes = Vec::new();
        w.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 4 * (1 + 2 * 4 * 9 + 2 + 2 * 2 * 9 + 2 + 2 + 1));
        assert_eq!(&bytes[..4], &4u32.to_le_bytes());
        assert_eq!(AttentionWeights::read_from(&bytes[..]).unwrap(), w);
        assert!(AttentionWeights::read_from(&bytes[..bytes.len() - 1]).is_err());
    }
}
