//! Floating-point raster containers and 8-bit file I/O.
//!
//! Samples are `f64` in `[0, 1]` everywhere inside the library; the
//! conversion to and from bytes happens only in [`load_image`] and
//! [`save_image`]. Supported files are 8-bit PNG (gray or RGB), binary
//! PGM (`P5`) and binary PPM (`P6`).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Single-channel raster.
///
/// Pipeline outputs that represent pictures stay in `[0, 1]`; intermediate
/// scalar fields (gradient magnitudes, direction responses) reuse this
/// container and may exceed 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Pgm,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(ImageFormat::Png),
            "pgm" => Ok(ImageFormat::Pgm),
            "ppm" => Ok(ImageFormat::Ppm),
            _ => Err(Error::UnsupportedFormat(format!(
                "unknown extension {:?} on {}",
                ext,
                path.display()
            ))),
        }
    }
}

impl ImageBuf {
    /// Checks the length, channel count and `[0, 1]` range.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::DimensionMismatch(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::param("data", format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Like [`ImageBuf::new`] but clamps every sample into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        for s in &mut data {
            *s = clamp_unit(*s);
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Extracts channel `c` as its own plane.
    pub fn channel(&self, c: usize) -> GrayImage {
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Interleaves equally sized planes back into one image, clamping to `[0, 1]`.
    pub fn from_channels(planes: &[GrayImage]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::DimensionMismatch("no channels given".into()))?;
        let (w, h) = (first.width, first.height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(Error::DimensionMismatch(
                "channel planes differ in size".into(),
            ));
        }
        let n = planes.len();
        let mut data = vec![0.0; w * h * n];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &s) in plane.data.iter().enumerate() {
                data[i * n + c] = clamp_unit(s);
            }
        }
        Self::new(w, h, n, data)
    }

    /// Replicates a gray image into three channels; RGB input is returned as is.
    pub fn to_rgb(&self) -> ImageBuf {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&s| [s, s, s]).collect();
        ImageBuf {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}

impl GrayImage {
    /// Checks the sample count; values are not range-checked.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {width}x{height}, got {}",
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

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the border (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn same_size(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
                (lo.min(s), hi.max(s))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Single-channel [`ImageBuf`], clamping samples into `[0, 1]`.
    pub fn to_buf(&self) -> ImageBuf {
        ImageBuf {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().map(|&s| clamp_unit(s)).collect(),
        }
    }

    /// Transposed copy: `out(x, y) = self(y, x)`.
    pub fn transpose(&self) -> GrayImage {
        GrayImage::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    /// Rotates a quarter turn counter-clockwise: `out(y, W-1-x) = self(x, y)`.
    pub fn rotate90(&self) -> GrayImage {
        let w = self.width;
        GrayImage::from_fn(self.height, self.width, |x, y| self.get(w - 1 - y, x))
    }
}

#[inline]
pub(crate) fn clamp_unit(s: f64) -> f64 {
    if s.is_nan() {
        0.0
    } else {
        s.clamp(0.0, 1.0)
    }
}

/// 8-bit quantization: `round(s * 255)`, halves rounded up, clamped to `[0, 255]`.
#[inline]
pub fn quantize(s: f64) -> u8 {
    if s.is_nan() {
        return 0;
    }
    (s * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Reads a PNG, PGM or PPM file, detecting the format from its magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuf> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes an in-memory PNG, PGM or PPM stream.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuf> {
    const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pnm(bytes, 1)
    } else if bytes.starts_with(b"P6") {
        decode_pnm(bytes, 3)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!(
            "netpbm variant P{} (only binary P5/P6 are read)",
            bytes[1] as char
        )))
    } else if bytes.len() < 8 && PNG_MAGIC.starts_with(bytes) && !bytes.is_empty() {
        Err(Error::CorruptHeader("truncated PNG signature".into()))
    } else {
        Err(Error::UnsupportedFormat("unrecognized magic bytes".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<ImageBuf> {
    let corrupt = |e: png::DecodingError| Error::CorruptHeader(format!("png: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptHeader("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "png bit depth {:?}; only 8-bit is supported",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "png color type {other:?}; only gray and RGB are supported"
            )))
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let data = buf[..w * h * channels]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    ImageBuf::new(w, h, channels, data)
}

/// Pulls whitespace-separated header tokens, skipping `#` comments.
struct PnmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmHeader<'a> {
    fn token(&mut self) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::CorruptHeader("netpbm header ends early".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader(format!("netpbm {what} is not a number")))
    }
}

fn decode_pnm(bytes: &[u8], channels: usize) -> Result<ImageBuf> {
    let mut header = PnmHeader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader(format!(
            "netpbm size {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "netpbm maxval {maxval}; only 8-bit (255) is supported"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = header.pos + 1;
    let n = width * height * channels;
    if bytes.len() < start + n {
        return Err(Error::CorruptHeader(format!(
            "netpbm raster truncated: need {n} bytes, have {}",
            bytes.len().saturating_sub(start)
        )));
    }
    let data = bytes[start..start + n]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    ImageBuf::new(width, height, channels, data)
}

/// Writes `img` quantized to 8 bits.
///
/// PGM output requires a gray image; PPM output replicates gray into RGB.
pub fn save_image(img: &ImageBuf, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(img, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_image(img: &ImageBuf, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Png => encode_png(img),
        ImageFormat::Pgm => {
            if img.channels != 1 {
                return Err(Error::UnsupportedFormat(
                    "PGM holds one channel; convert to grayscale first".into(),
                ));
            }
            Ok(encode_pnm(img, b"P5"))
        }
        ImageFormat::Ppm => Ok(encode_pnm(&img.to_rgb(), b"P6")),
    }
}

fn encode_pnm(img: &ImageBuf, magic: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.data.len() + 32);
    out.extend_from_slice(magic);
    out.extend_from_slice(format!("\n{} {}\n255\n", img.width, img.height).as_bytes());
    out.extend(img.data.iter().map(|&s| quantize(s)));
    out
}

fn encode_png(img: &ImageBuf) -> Result<Vec<u8>> {
    let encoding = |e: png::EncodingError| Error::UnsupportedFormat(format!("png encoder: {e}"));
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(if img.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(encoding)?;
        let bytes: Vec<u8> = img.data.iter().map(|&s| quantize(s)).collect();
        writer.write_image_data(&bytes).map_err(encoding)?;
    }
    Ok(out)
}

/// ITU-R BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// `0.299 R + 0.587 G + 0.114 B`; gray input is returned unchanged.
pub fn to_grayscale(img: &ImageBuf) -> GrayImage {
    if img.channels == 1 {
        return img.channel(0);
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| clamp_unit(LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Bilinear resampling with edge-clamped sampling.
///
/// Pixel centers are aligned (`src = (dst + 0.5) * scale - 0.5`), so resizing
/// to the same size is exact.
pub fn resize(img: &ImageBuf, w: usize, h: usize) -> Result<ImageBuf> {
    if w == 0 || h == 0 {
        return Err(Error::param(
            "size",
            format!("target {w}x{h} must be at least 1x1"),
        ));
    }
    let planes: Vec<GrayImage> = (0..img.channels)
        .map(|c| resize_plane(&img.channel(c), w, h))
        .collect();
    ImageBuf::from_channels(&planes)
}

pub fn resize_plane(src: &GrayImage, w: usize, h: usize) -> GrayImage {
    if src.width == w && src.height == h {
        return src.clone();
    }
    let xs = axis_taps(src.width, w);
    let ys = axis_taps(src.height, h);
    GrayImage::from_fn(w, h, |x, y| {
        let (x0, x1, fx) = xs[x];
        let (y0, y1, fy) = ys[y];
        let top = src.get(x0, y0) * (1.0 - fx) + src.get(x1, y0) * fx;
        let bottom = src.get(x0, y1) * (1.0 - fx) + src.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}
