//! Fixed multi-layer feature pyramid with exact reverse-mode gradients.
//!
//! Layer 1 is `ReLU(conv(image))`; each further layer is
//! `ReLU(conv(avgpool2(previous)))`. Convolutions are stride 1 with replicate
//! padding and no bias. The bank mixes derivative-of-Gaussian kernels at evenly
//! spaced orientations (edge detectors of both polarities after the ReLU)
//! with seeded random kernels that are zero-mean and unit L2 norm.
//!
//! Random kernels come from ChaCha8 (`rand_chacha`) seeded with the bank seed,
//! drawn uniformly from `[-1, 1)` in layer, channel, tap order.
//!
//! Feature maps can also be exchanged as `LAFM` files: the 4-byte magic
//! `LAFM`, a little-endian `u32` map count, then for each map the `u32`
//! fields `layer`, `channels`, `height`, `width` followed by
//! `channels * height * width` little-endian `f32` samples.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imgio::ImageBuf;

pub const DEFAULT_BANK_SEED: u64 = 0x5eed;

/// Arguments that fully determine a [`FilterBank`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankSpec {
    pub seed: u64,
    pub n_orient: usize,
    pub layers: usize,
    pub channels_per_layer: usize,
    /// Channels of the images the bank will see (1 or 3).
    pub input_channels: usize,
    pub kernel_size: usize,
}

impl Default for BankSpec {
    fn default() -> Self {
        Self {
            seed: DEFAULT_BANK_SEED,
            n_orient: 8,
            layers: 3,
            channels_per_layer: 16,
            input_channels: 3,
            kernel_size: 3,
        }
    }
}

/// One convolution layer; weights are laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
    pub weights: Vec<f64>,
}

impl ConvLayer {
    /// Weights of output channel `o` across all inputs.
    pub fn kernel(&self, o: usize) -> &[f64] {
        let n = self.in_channels * self.kernel_size * self.kernel_size;
        &self.weights[o * n..(o + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub spec: BankSpec,
    pub layers: Vec<ConvLayer>,
}

/// Activations of one layer, channel-major (`channel, y, x`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub layer: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        layer: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::DimensionMismatch(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature map for layer {layer}")));
        }
        Ok(Self {
            layer,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros_like(other: &FeatureMap) -> Self {
        Self {
            data: vec![0.0; other.data.len()],
            ..other.clone()
        }
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// Symmetric `n x n` channel inner-product matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub layer: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Builds the bank for the given arguments; see [`BankSpec`].
pub fn build_bank(spec: BankSpec) -> Result<FilterBank> {
    if spec.layers < 1 {
        return Err(Error::param("layers", "need at least one layer"));
    }
    if spec.channels_per_layer < spec.n_orient {
        return Err(Error::param(
            "channels",
            format!(
                "channels per layer ({}) must be at least the orientation count ({})",
                spec.channels_per_layer, spec.n_orient
            ),
        ));
    }
    if spec.kernel_size % 2 == 0 || spec.kernel_size == 0 {
        return Err(Error::param(
            "kernel-size",
            format!("must be odd, got {}", spec.kernel_size),
        ));
    }
    if spec.input_channels == 0 {
        return Err(Error::param("input-channels", "must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.kernel_size;
    let mut layers = Vec::with_capacity(spec.layers);
    for l in 0..spec.layers {
        let in_channels = if l == 0 {
            spec.input_channels
        } else {
            spec.channels_per_layer
        };
        let per_kernel = in_channels * k * k;
        let mut weights = Vec::with_capacity(spec.channels_per_layer * per_kernel);
        for o in 0..spec.channels_per_layer {
            let mut kernel = if o < spec.n_orient {
                let angle = 2.0 * std::f64::consts::PI * o as f64 / spec.n_orient as f64;
                let spatial = dog_kernel(k, angle);
                (0..in_channels)
                    .flat_map(|_| spatial.iter().copied())
                    .collect()
            } else {
                (0..per_kernel)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect::<Vec<f64>>()
            };
            zero_mean_unit_norm(&mut kernel);
            weights.extend(kernel);
        }
        layers.push(ConvLayer {
            out_channels: spec.channels_per_layer,
            in_channels,
            kernel_size: k,
            weights,
        });
    }
    Ok(FilterBank { spec, layers })
}

/// First derivative of a Gaussian (sigma = k/4) along `angle`.
fn dog_kernel(k: usize, angle: f64) -> Vec<f64> {
    let sigma = k as f64 / 4.0;
    let c = (k as f64 - 1.0) / 2.0;
    let (s, co) = angle.sin_cos();
    let mut out = Vec::with_capacity(k * k);
    for y in 0..k {
        for x in 0..k {
            let (px, py) = (x as f64 - c, y as f64 - c);
            let along = px * co + py * s;
            out.push(
                -along / (sigma * sigma) * (-(px * px + py * py) / (2.0 * sigma * sigma)).exp(),
            );
        }
    }
    out
}

fn zero_mean_unit_norm(kernel: &mut [f64]) {
    let mean = kernel.iter().sum::<f64>() / kernel.len() as f64;
    kernel.iter_mut().for_each(|v| *v -= mean);
    let norm = kernel.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        kernel.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Planar tensor `channels x height x width`.
#[derive(Debug, Clone)]
struct Planes {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Planes {
    fn from_image(img: &ImageBuf) -> Self {
        let (w, h, c) = (img.width(), img.height(), img.channels());
        let mut data = vec![0.0; w * h * c];
        for (i, px) in img.data().chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                data[ch * w * h + i] = v;
            }
        }
        Self {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }

    fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Replicate-padded copy of one plane.
fn pad_plane(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let pw = w + 2 * r;
    let mut out = vec![0.0; pw * (h + 2 * r)];
    for py in 0..h + 2 * r {
        let sy = (py as isize - r as isize).clamp(0, h as isize - 1) as usize;
        for px in 0..pw {
            let sx = (px as isize - r as isize).clamp(0, w as isize - 1) as usize;
            out[py * pw + px] = src[sy * w + sx];
        }
    }
    out
}

/// Adjoint of [`pad_plane`]: border rows and columns fold back onto the edge.
fn unpad_plane_add(padded: &[f64], w: usize, h: usize, r: usize, dst: &mut [f64]) {
    let pw = w + 2 * r;
    for py in 0..h + 2 * r {
        let sy = (py as isize - r as isize).clamp(0, h as isize - 1) as usize;
        for px in 0..pw {
            let sx = (px as isize - r as isize).clamp(0, w as isize - 1) as usize;
            dst[sy * w + sx] += padded[py * pw + px];
        }
    }
}

fn map_channels<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn conv_forward(input: &Planes, layer: &ConvLayer) -> Planes {
    let (w, h) = (input.width, input.height);
    let k = layer.kernel_size;
    let r = k / 2;
    let pw = w + 2 * r;
    let padded: Vec<Vec<f64>> = (0..input.channels)
        .map(|c| pad_plane(input.plane(c), w, h, r))
        .collect();
    let outputs = map_channels(layer.out_channels, |o| {
        let kernel = layer.kernel(o);
        let mut out = vec![0.0; w * h];
        for (c, pad) in padded.iter().enumerate() {
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = kernel[(c * k + ky) * k + kx];
                    if wgt == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let src = &pad[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let dst = &mut out[y * w..(y + 1) * w];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wgt * s;
                        }
                    }
                }
            }
        }
        out
    });
    Planes {
        channels: layer.out_channels,
        height: h,
        width: w,
        data: outputs.concat(),
    }
}

/// Gradient of [`conv_forward`] with respect to its input.
fn conv_backward(grad_out: &Planes, layer: &ConvLayer) -> Planes {
    let (w, h) = (grad_out.width, grad_out.height);
    let k = layer.kernel_size;
    let r = k / 2;
    let pw = w + 2 * r;
    let inputs = map_channels(layer.in_channels, |c| {
        let mut padded = vec![0.0; pw * (h + 2 * r)];
        for o in 0..layer.out_channels {
            let g = grad_out.plane(o);
            let kernel = layer.kernel(o);
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = kernel[(c * k + ky) * k + kx];
                    if wgt == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let dst = &mut padded[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        for (d, s) in dst.iter_mut().zip(&g[y * w..(y + 1) * w]) {
                            *d += wgt * s;
                        }
                    }
                }
            }
        }
        let mut out = vec![0.0; w * h];
        unpad_plane_add(&padded, w, h, r, &mut out);
        out
    });
    Planes {
        channels: layer.in_channels,
        height: h,
        width: w,
        data: inputs.concat(),
    }
}

/// 2x2 average pooling; an odd trailing row or column is dropped.
fn avg_pool2(input: &Planes) -> Planes {
    let (w2, h2) = (input.width / 2, input.height / 2);
    let w = input.width;
    let mut data = Vec::with_capacity(input.channels * w2 * h2);
    for c in 0..input.channels {
        let p = input.plane(c);
        for y in 0..h2 {
            for x in 0..w2 {
                let i = 2 * y * w + 2 * x;
                data.push(0.25 * (p[i] + p[i + 1] + p[i + w] + p[i + w + 1]));
            }
        }
    }
    Planes {
        channels: input.channels,
        height: h2,
        width: w2,
        data,
    }
}

/// Adjoint of [`avg_pool2`]: each pooled gradient spreads 1/4 to its block.
fn avg_pool2_backward(grad: &Planes, width: usize, height: usize) -> Planes {
    let (w2, h2) = (grad.width, grad.height);
    let mut data = vec![0.0; grad.channels * width * height];
    for c in 0..grad.channels {
        let g = grad.plane(c);
        let dst = &mut data[c * width * height..(c + 1) * width * height];
        for y in 0..h2 {
            for x in 0..w2 {
                let v = 0.25 * g[y * w2 + x];
                let i = 2 * y * width + 2 * x;
                dst[i] += v;
                dst[i + 1] += v;
                dst[i + width] += v;
                dst[i + width + 1] += v;
            }
        }
    }
    Planes {
        channels: grad.channels,
        height,
        width,
        data,
    }
}

/// Forward pass with the intermediates needed for [`FeatureTrace::backward`].
#[derive(Debug, Clone)]
pub struct FeatureTrace {
    image_channels: usize,
    /// Input of each layer (the image, then pooled activations).
    inputs: Vec<Planes>,
    /// Pre-activation of each layer.
    pre: Vec<Planes>,
    features: Vec<FeatureMap>,
}

impl FeatureTrace {
    pub fn features(&self) -> &[FeatureMap] {
        &self.features
    }

    pub fn into_features(self) -> Vec<FeatureMap> {
        self.features
    }

    /// Pulls per-layer gradients `dL/dF^l` back to the image.
    ///
    /// The result uses the image's interleaved layout (`(y * W + x) * C + c`).
    pub fn backward(&self, bank: &FilterBank, upstream: &[FeatureMap]) -> Result<Vec<f64>> {
        if upstream.len() != self.features.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected gradients for {} layers, got {}",
                self.features.len(),
                upstream.len()
            )));
        }
        for (u, f) in upstream.iter().zip(&self.features) {
            if !u.same_shape(f) {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} gradient is {:?}, features are {:?}",
                    f.layer,
                    u.shape(),
                    f.shape()
                )));
            }
        }

        let mut carry: Option<Planes> = None;
        for l in (0..self.features.len()).rev() {
            let pre = &self.pre[l];
            let mut grad = upstream[l].data.clone();
            if let Some(c) = carry.take() {
                grad.iter_mut().zip(&c.data).for_each(|(g, c)| *g += c);
            }
            grad.iter_mut().zip(&pre.data).for_each(|(g, &p)| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
            let grad = Planes {
                data: grad,
                ..pre.clone()
            };
            let grad_in = conv_backward(&grad, &bank.layers[l]);
            carry = Some(if l > 0 {
                let prev = &self.inputs[l - 1];
                avg_pool2_backward(&grad_in, prev.width, prev.height)
            } else {
                grad_in
            });
        }

        let planes = carry.expect("at least one layer");
        let c = self.image_channels;
        let n = planes.width * planes.height;
        let mut out = vec![0.0; n * c];
        for ch in 0..c {
            for (i, &v) in planes.plane(ch).iter().enumerate() {
                out[i * c + ch] = v;
            }
        }
        Ok(out)
    }
}

/// Smallest side the pyramid accepts for `layers` layers.
pub fn min_side(layers: usize) -> usize {
    1 << (layers.saturating_sub(1))
}

pub fn extract_traced(img: &ImageBuf, bank: &FilterBank) -> Result<FeatureTrace> {
    let first = &bank.layers[0];
    if img.channels() != first.in_channels {
        return Err(Error::DimensionMismatch(format!(
            "bank expects {}-channel images, got {}",
            first.in_channels,
            img.channels()
        )));
    }
    let need = min_side(bank.layers.len());
    if img.width() < need || img.height() < need {
        return Err(Error::TooSmall(format!(
            "{} layers need at least {need}x{need}, got {}x{}",
            bank.layers.len(),
            img.width(),
            img.height()
        )));
    }

    let mut inputs = Vec::with_capacity(bank.layers.len());
    let mut pre = Vec::with_capacity(bank.layers.len());
    let mut features = Vec::with_capacity(bank.layers.len());
    let mut input = Planes::from_image(img);
    for (l, layer) in bank.layers.iter().enumerate() {
        let z = conv_forward(&input, layer);
        let act = Planes {
            data: z.data.iter().map(|&v| v.max(0.0)).collect(),
            ..z.clone()
        };
        features.push(FeatureMap {
            layer: l,
            channels: act.channels,
            height: act.height,
            width: act.width,
            data: act.data.clone(),
        });
        let next = avg_pool2(&act);
        inputs.push(std::mem::replace(&mut input, next));
        pre.push(z);
    }
    Ok(FeatureTrace {
        image_channels: img.channels(),
        inputs,
        pre,
        features,
    })
}

/// One feature map per layer.
pub fn extract(img: &ImageBuf, bank: &FilterBank) -> Result<Vec<FeatureMap>> {
    Ok(extract_traced(img, bank)?.into_features())
}

/// Gradient of a scalar function of the features with respect to the image.
pub fn backward(img: &ImageBuf, bank: &FilterBank, upstream: &[FeatureMap]) -> Result<Vec<f64>> {
    extract_traced(img, bank)?.backward(bank, upstream)
}

/// `G = F F^T` over the flattened spatial axis, computed on one triangle.
pub fn gram(f: &FeatureMap) -> GramMatrix {
    let (n, s) = (f.channels, f.spatial());
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let fi = &f.data[i * s..(i + 1) * s];
        for j in i..n {
            let fj = &f.data[j * s..(j + 1) * s];
            let v: f64 = fi.iter().zip(fj).map(|(a, b)| a * b).sum();
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    GramMatrix {
        layer: f.layer,
        n,
        data,
    }
}

const MAGIC: [u8; 4] = *b"LAFM";

pub fn encode_features(maps: &[FeatureMap]) -> Vec<u8> {
    let payload: usize = maps.iter().map(|m| 16 + 4 * m.data.len()).sum();
    let mut out = Vec::with_capacity(8 + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(maps.len() as u32).to_le_bytes());
    for m in maps {
        for v in [m.layer, m.channels, m.height, m.width] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for &v in &m.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<Vec<FeatureMap>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("file shorter than the magic".into()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::MagicMismatch(magic));
    }
    let mut pos = 4;
    let read_u32 = |pos: &mut usize, what: &str| -> Result<usize> {
        let chunk = bytes
            .get(*pos..*pos + 4)
            .ok_or_else(|| Error::Truncated(format!("missing {what}")))?;
        *pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")) as usize)
    };
    let count = read_u32(&mut pos, "map count")?;
    let mut maps = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let layer = read_u32(&mut pos, "layer index")?;
        let channels = read_u32(&mut pos, "channel count")?;
        let height = read_u32(&mut pos, "height")?;
        let width = read_u32(&mut pos, "width")?;
        let n = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::Truncated(format!("map {i} dimensions overflow")))?;
        let end = n
            .checked_mul(4)
            .and_then(|b| b.checked_add(pos))
            .ok_or_else(|| Error::Truncated(format!("map {i} dimensions overflow")))?;
        let raw = bytes.get(pos..end).ok_or_else(|| {
            Error::Truncated(format!("map {i} of {count} needs {} payload bytes", 4 * n))
        })?;
        pos = end;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature file map {i}")));
        }
        maps.push(FeatureMap {
            layer,
            channels,
            height,
            width,
            data,
        });
    }
    Ok(maps)
}

pub fn export_features(maps: &[FeatureMap], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(maps)).map_err(|e| Error::io(path, e))
}

/// Splits a style-major list into `[style][layer]`. The layer count is the
/// position of the first repeated layer index; every style must list the
/// same layers with the same shapes.
pub fn group_by_style(maps: Vec<FeatureMap>) -> Result<Vec<Vec<FeatureMap>>> {
    if maps.is_empty() {
        return Err(Error::EmptyInput("feature file holds no maps".into()));
    }
    let per_style = maps[1..]
        .iter()
        .position(|m| m.layer == maps[0].layer)
        .map_or(maps.len(), |p| p + 1);
    if maps.len() % per_style != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} maps do not split into styles of {per_style} layers",
            maps.len()
        )));
    }
    let mut styles: Vec<Vec<FeatureMap>> = Vec::new();
    let mut it = maps.into_iter();
    loop {
        let style: Vec<FeatureMap> = it.by_ref().take(per_style).collect();
        if style.is_empty() {
            break;
        }
        if let Some(first) = styles.first() {
            for (a, b) in first.iter().zip(&style) {
                if a.layer != b.layer || !a.same_shape(b) {
                    return Err(Error::DimensionMismatch(format!(
                        "style {} layer {} is {:?}, style 0 has layer {} at {:?}",
                        styles.len(),
                        b.layer,
                        b.shape(),
                        a.layer,
                        a.shape()
                    )));
                }
            }
        }
        styles.push(style);
    }
    Ok(styles)
}

pub fn import_features(path: impl AsRef<Path>) -> Result<Vec<FeatureMap>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
