//! Pencil-stroke sketch synthesis.
//!
//! The gradient magnitude of the input is split into `n` direction channels by
//! comparing responses to short line kernels. Each channel is then smeared
//! along its own line again, which links nearby edge pixels into strokes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::GrayImage;

/// Line kernel length: a fixed number of pixels, or derived from the image size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelLen {
    /// `round(min(H, W) / 30)`, never below 7.
    Auto,
    Fixed(usize),
}

impl KernelLen {
    pub fn resolve(self, width: usize, height: usize) -> usize {
        match self {
            KernelLen::Fixed(n) => n,
            KernelLen::Auto => ((width.min(height) as f64 / 30.0).round() as usize).max(7),
        }
    }
}

impl std::str::FromStr for KernelLen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KernelLen::Auto);
        }
        s.parse::<usize>()
            .map(KernelLen::Fixed)
            .map_err(|_| Error::param("len", format!("expected an integer or \"auto\", got {s:?}")))
    }
}

impl std::fmt::Display for KernelLen {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelLen::Auto => f.write_str("auto"),
            KernelLen::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchParams {
    pub n_directions: usize,
    pub kernel_len: KernelLen,
    /// Stroke width as a fraction of the kernel length; sets the dilation
    /// radius `round(width * len)`.
    pub stroke_width: f64,
    pub invert_output: bool,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            n_directions: 8,
            kernel_len: KernelLen::Auto,
            stroke_width: 0.1,
            invert_output: true,
        }
    }
}

impl SketchParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_directions < 2 || self.n_directions % 2 != 0 {
            return Err(Error::param(
                "directions",
                format!("must be even and >= 2, got {}", self.n_directions),
            ));
        }
        if let KernelLen::Fixed(n) = self.kernel_len {
            if n < 3 {
                return Err(Error::param("len", format!("must be >= 3, got {n}")));
            }
        }
        if !(self.stroke_width >= 0.0 && self.stroke_width.is_finite()) {
            return Err(Error::param(
                "width",
                format!("must be >= 0, got {}", self.stroke_width),
            ));
        }
        Ok(())
    }
}

/// Square convolution kernel, odd or even side, centred at `(side - 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineKernel {
    pub side: usize,
    pub angle_deg: f64,
    pub weights: Vec<f64>,
}

impl LineKernel {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.side + x]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Per-direction maps `C_i`; each pixel's magnitude lives in exactly one map.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseStack {
    pub maps: Vec<GrayImage>,
}

impl ResponseStack {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Pixelwise sum over directions.
    pub fn total(&self) -> GrayImage {
        let first = &self.maps[0];
        let mut out = GrayImage::filled(first.width(), first.height(), 0.0);
        for map in &self.maps {
            for (o, v) in out.data_mut().iter_mut().zip(map.data()) {
                *o += v;
            }
        }
        out
    }
}

/// Forward-difference gradient magnitude with replicate boundary (the last
/// row and column see a zero difference).
pub fn grad_magnitude(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |x, y| {
        let v = img.get(x, y);
        let dx = img.get((x + 1).min(w - 1), y) - v;
        let dy = img.get(x, (y + 1).min(h - 1)) - v;
        dx.hypot(dy)
    })
}

/// Weights below this are snapped to zero so axis-aligned kernels stay exact.
const KERNEL_EPS: f64 = 1e-12;

/// Builds `n_directions` unit-mass line kernels at angles `i * 180 / n`.
///
/// Each pixel weight is the product of the perpendicular coverage
/// `max(0, 1 - d)` and the along-line coverage of a segment of `len` pixels,
/// so lines are anti-aliased by linear coverage.
pub fn make_line_kernels(
    params: &SketchParams,
    width: usize,
    height: usize,
) -> Result<Vec<LineKernel>> {
    params.validate()?;
    let len = params.kernel_len.resolve(width, height);
    if len < 3 {
        return Err(Error::param(
            "len",
            format!("resolved kernel length {len} is below 3"),
        ));
    }
    Ok((0..params.n_directions)
        .map(|i| line_kernel(len, i as f64 * 180.0 / params.n_directions as f64))
        .collect())
}

pub fn line_kernel(len: usize, angle_deg: f64) -> LineKernel {
    let snap = |v: f64| if v.abs() < KERNEL_EPS { 0.0 } else { v };
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (sin, cos) = (snap(sin), snap(cos));
    let centre = (len as f64 - 1.0) / 2.0;
    let half = len as f64 / 2.0;
    let mut weights = Vec::with_capacity(len * len);
    for y in 0..len {
        for x in 0..len {
            let (px, py) = (x as f64 - centre, y as f64 - centre);
            let along = px * cos + py * sin;
            let across = (px * sin - py * cos).abs();
            let w = (1.0 - across).max(0.0) * (half + 0.5 - along.abs()).clamp(0.0, 1.0);
            weights.push(if w < KERNEL_EPS { 0.0 } else { w });
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    LineKernel {
        side: len,
        angle_deg,
        weights,
    }
}

/// Same-size convolution with replicate padding, kernel origin at
/// `(side - 1) / 2` (integer division).
pub fn convolve(img: &GrayImage, kernel: &LineKernel) -> GrayImage {
    let c = (kernel.side as isize - 1) / 2;
    let taps: Vec<(isize, isize, f64)> = (0..kernel.side)
        .flat_map(|ky| (0..kernel.side).map(move |kx| (kx, ky)))
        .filter_map(|(kx, ky)| {
            let w = kernel.get(kx, ky);
            (w != 0.0).then_some((kx as isize - c, ky as isize - c, w))
        })
        .collect();
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        taps.iter()
            .map(|&(dx, dy, w)| w * img.get_clamped(x as isize - dx, y as isize - dy))
            .sum()
    })
}

fn convolve_all(g: &GrayImage, kernels: &[LineKernel]) -> Vec<GrayImage> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        kernels.par_iter().map(|k| convolve(g, k)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        kernels.iter().map(|k| convolve(g, k)).collect()
    }
}

/// Winner-take-all classification: the direction with the largest line
/// response at a pixel receives that pixel's magnitude. Ties go to the lowest
/// direction index.
pub fn classify(g: &GrayImage, kernels: &[LineKernel]) -> ResponseStack {
    let responses = convolve_all(g, kernels);
    let mut maps = vec![GrayImage::filled(g.width(), g.height(), 0.0); kernels.len()];
    for p in 0..g.len() {
        let mut best = 0;
        for i in 1..responses.len() {
            if responses[i].data()[p] > responses[best].data()[p] {
                best = i;
            }
        }
        maps[best].data_mut()[p] = g.data()[p];
    }
    ResponseStack { maps }
}

/// `sum_i L_i * C_i` before normalization.
pub fn line_shape_raw(stack: &ResponseStack, kernels: &[LineKernel]) -> GrayImage {
    let first = &stack.maps[0];
    let mut out = GrayImage::filled(first.width(), first.height(), 0.0);
    #[cfg(feature = "parallel")]
    let parts: Vec<GrayImage> = {
        use rayon::prelude::*;
        stack
            .maps
            .par_iter()
            .zip(kernels)
            .map(|(c, k)| convolve(c, k))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<GrayImage> = stack
        .maps
        .iter()
        .zip(kernels)
        .map(|(c, k)| convolve(c, k))
        .collect();
    // fixed index order keeps the sum deterministic
    for part in &parts {
        for (o, v) in out.data_mut().iter_mut().zip(part.data()) {
            *o += v;
        }
    }
    out
}

/// Min-max normalization to `[0, 1]`; a flat map becomes all zeros.
pub fn normalize_min_max(img: &GrayImage) -> GrayImage {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    let data = if range > 0.0 {
        img.data()
            .iter()
            .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; img.len()]
    };
    GrayImage::new(img.width(), img.height(), data).expect("same shape")
}

/// Stroke map `S'`, normalized to `[0, 1]`.
pub fn line_shape(stack: &ResponseStack, kernels: &[LineKernel]) -> GrayImage {
    normalize_min_max(&line_shape_raw(stack, kernels))
}

/// Grayscale dilation (max filter) over a disk of the given radius.
pub fn dilate_disk(img: &GrayImage, radius: usize) -> GrayImage {
    if radius == 0 {
        return img.clone();
    }
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        offsets
            .iter()
            .map(|&(dx, dy)| img.get_clamped(x as isize + dx, y as isize + dy))
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Full stroke pipeline: gradient magnitude, direction classification, line
/// shaping, stroke dilation and (by default) inversion to dark lines on white.
pub fn pencil_sketch(img: &GrayImage, params: &SketchParams) -> Result<GrayImage> {
    let kernels = make_line_kernels(params, img.width(), img.height())?;
    let len = kernels[0].side;
    let g = grad_magnitude(img);
    let stack = classify(&g, &kernels);
    let strokes = line_shape(&stack, &kernels);
    let radius = (params.stroke_width * len as f64).round() as usize;
    let strokes = dilate_disk(&strokes, radius);
    let data = strokes
        .data()
        .iter()
        .map(|&s| if params.invert_output { 1.0 - s } else { s })
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    GrayImage::new(img.width(), img.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, len: usize) -> SketchParams {
        SketchParams {
            n_directions: n,
            kernel_len: KernelLen::Fixed(len),
            ..SketchParams::default()
        }
    }

    #[test]
    fn magnitude_cases() {
        assert!(grad_magnitude(&GrayImage::filled(5, 5, 0.4))
            .data()
            .iter()
            .all(|&v| v == 0.0));

        let ramp = GrayImage::from_fn(8, 8, |x, _| 0.1 * x as f64);
        let g = grad_magnitude(&ramp);
        for y in 0..8 {
            for x in 0..7 {
                assert!((g.get(x, y) - 0.1).abs() < 1e-12);
            }
        }

        let step = GrayImage::from_fn(5, 5, |x, _| if x >= 3 { 1.0 } else { 0.0 });
        let g = grad_magnitude(&step);
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(g.get(x, y), if x == 2 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn axis_aligned_kernels() {
        let k = make_line_kernels(&params(2, 3), 100, 100).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(
            k[0].weights,
            vec![0.0, 0.0, 0.0, third, third, third, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            k[1].weights,
            vec![0.0, third, 0.0, 0.0, third, 0.0, 0.0, third, 0.0]
        );
    }

    #[test]
    fn kernels_have_unit_mass() {
        for n in [2, 4, 6, 8, 10, 12] {
            for len in [3, 5, 7, 8, 11] {
                for k in make_line_kernels(&params(n, len), 64, 64).unwrap() {
                    assert!((k.sum() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn diagonal_kernels_mirror() {
        let ks = make_line_kernels(&params(4, 7), 64, 64).unwrap();
        let (k45, k135) = (&ks[1], &ks[3]);
        for y in 0..7 {
            for x in 0..7 {
                assert!((k45.get(x, y) - k135.get(6 - x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn auto_length() {
        assert_eq!(KernelLen::Auto.resolve(256, 256), 9);
        assert_eq!(KernelLen::Auto.resolve(64, 300), 7);
        assert_eq!(KernelLen::Auto.resolve(600, 512), 17);
        assert_eq!("auto".parse::<KernelLen>().unwrap(), KernelLen::Auto);
        assert_eq!("7".parse::<KernelLen>().unwrap(), KernelLen::Fixed(7));
        assert!("seven".parse::<KernelLen>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(params(3, 7).validate().is_err());
        assert!(params(0, 7).validate().is_err());
        assert!(params(8, 2).validate().is_err());
        assert!(params(8, 7).validate().is_ok());
    }

    #[test]
    fn zero_magnitude_classifies_to_zero() {
        let kernels = make_line_kernels(&params(8, 7), 20, 20).unwrap();
        let stack = classify(&GrayImage::filled(20, 20, 0.0), &kernels);
        assert!(stack
            .maps
            .iter()
            .all(|m| m.data().iter().all(|&v| v == 0.0)));
        assert!(line_shape(&stack, &kernels)
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn dilation_radius_one_is_a_plus() {
        let mut img = GrayImage::filled(5, 5, 0.0);
        img.set(2, 2, 1.0);
        let d = dilate_disk(&img, 1);
        assert_eq!(d.data().iter().filter(|&&v| v == 1.0).count(), 5);
        assert_eq!(dilate_disk(&img, 0), img);
    }

    #[test]
    fn constant_input_is_white_page() {
        let out = pencil_sketch(&GrayImage::filled(40, 30, 0.6), &SketchParams::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));
    }
}
