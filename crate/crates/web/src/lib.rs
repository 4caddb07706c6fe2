//! Browser bindings: canvas RGBA buffers in, RGBA buffers out.

use lineartist::edge::{canny, CannyParams};
use lineartist::imgio::{to_grayscale, GrayImage, ImageBuf};
use lineartist::pencil::{pencil_sketch, KernelLen, SketchParams};
use lineartist::smooth::{l0_smooth, L0Params};
use lineartist::{Error, Result};
use wasm_bindgen::prelude::*;

/// Drops alpha and scales to `[0, 1]`.
pub fn rgba_to_image(rgba: &[u8], width: usize, height: usize) -> Result<ImageBuf> {
    if rgba.len() != width * height * 4 {
        return Err(Error::DimensionMismatch(format!(
            "{} bytes for a {width}x{height} RGBA canvas",
            rgba.len()
        )));
    }
    let data = rgba
        .chunks_exact(4)
        .flat_map(|p| p[..3].iter().map(|&v| v as f64 / 255.0))
        .collect();
    ImageBuf::new(width, height, 3, data)
}

fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn image_to_rgba(img: &ImageBuf) -> Vec<u8> {
    let rgb = img.to_rgb();
    rgb.data()
        .chunks_exact(3)
        .flat_map(|p| [quantize(p[0]), quantize(p[1]), quantize(p[2]), 255])
        .collect()
}

pub fn gray_to_rgba(img: &GrayImage) -> Vec<u8> {
    img.data()
        .iter()
        .flat_map(|&v| {
            let q = quantize(v);
            [q, q, q, 255]
        })
        .collect()
}

/// L0 smoothing of a canvas.
pub fn smooth_rgba(
    rgba: &[u8],
    width: usize,
    height: usize,
    lambda: f64,
    kappa: f64,
) -> Result<Vec<u8>> {
    let params = L0Params::new(lambda, kappa, L0Params::default().beta_max)?;
    let img = rgba_to_image(rgba, width, height)?;
    Ok(image_to_rgba(&l0_smooth(&img, &params)?))
}

/// Pencil sketch of a canvas, L0-smoothed first when `smooth_lambda > 0`.
/// A `len` of 0 means auto.
pub fn sketch_rgba(
    rgba: &[u8],
    width: usize,
    height: usize,
    directions: usize,
    len: usize,
    stroke_width: f64,
    smooth_lambda: f64,
) -> Result<Vec<u8>> {
    let params = SketchParams {
        n_directions: directions,
        kernel_len: if len == 0 {
            KernelLen::Auto
        } else {
            KernelLen::Fixed(len)
        },
        stroke_width,
        ..SketchParams::default()
    };
    params.validate()?;
    let mut img = rgba_to_image(rgba, width, height)?;
    if smooth_lambda > 0.0 {
        let d = L0Params::default();
        img = l0_smooth(&img, &L0Params::new(smooth_lambda, d.kappa, d.beta_max)?)?;
    }
    Ok(gray_to_rgba(&pencil_sketch(&to_grayscale(&img), &params)?))
}

/// Canny edges of a canvas, white on black.
pub fn edges_rgba(
    rgba: &[u8],
    width: usize,
    height: usize,
    sigma: f64,
    low: f64,
    high: f64,
) -> Result<Vec<u8>> {
    let params = CannyParams {
        sigma,
        t_low: low,
        t_high: high,
    };
    let img = rgba_to_image(rgba, width, height)?;
    Ok(gray_to_rgba(
        &canny(&to_grayscale(&img), &params)?.to_gray(),
    ))
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn smooth(
    rgba: &[u8],
    width: usize,
    height: usize,
    lambda: f64,
    kappa: f64,
) -> std::result::Result<Vec<u8>, JsError> {
    js(smooth_rgba(rgba, width, height, lambda, kappa))
}

#[wasm_bindgen]
pub fn sketch(
    rgba: &[u8],
    width: usize,
    height: usize,
    directions: usize,
    len: usize,
    stroke_width: f64,
    smooth_lambda: f64,
) -> std::result::Result<Vec<u8>, JsError> {
    js(sketch_rgba(
        rgba,
        width,
        height,
        directions,
        len,
        stroke_width,
        smooth_lambda,
    ))
}

#[wasm_bindgen]
pub fn edges(
    rgba: &[u8],
    width: usize,
    height: usize,
    sigma: f64,
    low: f64,
    high: f64,
) -> std::result::Result<Vec<u8>, JsError> {
    js(edges_rgba(rgba, width, height, sigma, low, high))
}
