//! Canny edge detection: Gaussian blur, Sobel gradients, non-maximum
//! suppression over four direction bins, hysteresis thresholding.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::GrayImage;
use crate::smooth::GradientField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f64,
    /// Weak threshold as a fraction of the maximum gradient magnitude.
    pub t_low: f64,
    /// Strong threshold as a fraction of the maximum gradient magnitude.
    pub t_high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            t_low: 0.1,
            t_high: 0.2,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(
                "sigma",
                format!("must be >= 0, got {}", self.sigma),
            ));
        }
        if !(self.t_low > 0.0) {
            return Err(Error::param(
                "low",
                format!("must be > 0, got {}", self.t_low),
            ));
        }
        if !(self.t_low < self.t_high) {
            return Err(Error::param(
                "high",
                format!("must exceed low ({}), got {}", self.t_low, self.t_high),
            ));
        }
        if !(self.t_high <= 1.0) {
            return Err(Error::param(
                "high",
                format!("must be <= 1, got {}", self.t_high),
            ));
        }
        Ok(())
    }
}

/// Binary edge mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.mask[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Edges as white (1.0) on black.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Number of 8-connected edge neighbours of `(x, y)`.
    pub fn neighbour_count(&self, x: usize, y: usize) -> usize {
        neighbours8(x, y, self.width, self.height)
            .filter(|&(nx, ny)| self.get(nx, ny))
            .count()
    }
}

fn neighbours8(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1isize..=1)
        .flat_map(|dy| (-1isize..=1).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx != 0 || dy != 0)
        .filter_map(move |(dx, dy)| {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
                .then_some((nx as usize, ny as usize))
        })
}

/// Unnormalized 3x3 Sobel gradients with replicate borders.
pub fn sobel(img: &GrayImage) -> Result<GradientField> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::TooSmall(format!(
            "sobel needs at least 3x3, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let p = |x: usize, y: usize, dx: isize, dy: isize| {
        img.get_clamped(x as isize + dx, y as isize + dy)
    };
    let gx = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        (p(x, y, 1, -1) + 2.0 * p(x, y, 1, 0) + p(x, y, 1, 1))
            - (p(x, y, -1, -1) + 2.0 * p(x, y, -1, 0) + p(x, y, -1, 1))
    });
    let gy = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        (p(x, y, -1, 1) + 2.0 * p(x, y, 0, 1) + p(x, y, 1, 1))
            - (p(x, y, -1, -1) + 2.0 * p(x, y, 0, -1) + p(x, y, 1, -1))
    });
    Ok(GradientField { gx, gy })
}

/// Separable Gaussian blur with a `ceil(3 sigma)` radius and replicate borders.
/// `sigma == 0` returns the input.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);

    let (w, h) = (img.width(), img.height());
    let horizontal = GrayImage::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * img.get_clamped(x as isize + k as isize - radius, y as isize))
            .sum()
    });
    GrayImage::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * horizontal.get_clamped(x as isize, y as isize + k as isize - radius))
            .sum()
    })
}

/// Gradient direction bin for non-maximum suppression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionBin {
    /// Gradient along x: compare left and right neighbours.
    Horizontal,
    /// Gradient along +x+y (image y points down).
    Diagonal,
    Vertical,
    /// Gradient along +x-y.
    AntiDiagonal,
}

impl DirectionBin {
    /// Quantizes the gradient angle (folded to `[0, 180)`) into 45-degree bins.
    /// Angles exactly on a bin boundary go to the bin nearer the horizontal.
    pub fn from_gradient(gx: f64, gy: f64) -> Self {
        let mut angle = gy.atan2(gx).to_degrees();
        if angle < 0.0 {
            angle += 180.0;
        }
        if angle >= 180.0 {
            angle -= 180.0;
        }
        if angle <= 22.5 || angle >= 157.5 {
            DirectionBin::Horizontal
        } else if angle <= 67.5 {
            DirectionBin::Diagonal
        } else if angle < 112.5 {
            DirectionBin::Vertical
        } else {
            DirectionBin::AntiDiagonal
        }
    }

    /// Offset of the "forward" neighbour along the gradient.
    fn offset(self) -> (isize, isize) {
        match self {
            DirectionBin::Horizontal => (1, 0),
            DirectionBin::Diagonal => (1, 1),
            DirectionBin::Vertical => (0, 1),
            DirectionBin::AntiDiagonal => (1, -1),
        }
    }
}

/// Thins the magnitude map to ridge pixels.
///
/// A pixel survives when it is strictly greater than its backward neighbour
/// and at least its forward neighbour, so a plateau two pixels wide keeps
/// exactly one pixel. Neighbours outside the image count as zero.
pub fn non_maximum_suppression(grad: &GradientField) -> GrayImage {
    let (w, h) = (grad.width(), grad.height());
    let mag = magnitude(grad);
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag.get(x as usize, y as usize)
        }
    };
    GrayImage::from_fn(w, h, |x, y| {
        let m = mag.get(x, y);
        if m == 0.0 {
            return 0.0;
        }
        let (dx, dy) = DirectionBin::from_gradient(grad.gx.get(x, y), grad.gy.get(x, y)).offset();
        let (xi, yi) = (x as isize, y as isize);
        let forward = at(xi + dx, yi + dy);
        let backward = at(xi - dx, yi - dy);
        if m > backward && m >= forward {
            m
        } else {
            0.0
        }
    })
}

pub fn magnitude(grad: &GradientField) -> GrayImage {
    let data = grad
        .gx
        .data()
        .iter()
        .zip(grad.gy.data())
        .map(|(a, b)| a.hypot(*b))
        .collect();
    GrayImage::new(grad.width(), grad.height(), data).expect("same shape as the field")
}

/// Double-threshold hysteresis: pixels at or above `high` seed edges, which
/// grow through 8-connected pixels at or above `low`.
pub fn hysteresis(thin: &GrayImage, low: f64, high: f64) -> EdgeMap {
    let (w, h) = (thin.width(), thin.height());
    let mut edges = EdgeMap::new(w, h);
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let m = thin.get(x, y);
            if m > 0.0 && m >= high {
                edges.set(x, y, true);
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for (nx, ny) in neighbours8(x, y, w, h) {
            let m = thin.get(nx, ny);
            if !edges.get(nx, ny) && m > 0.0 && m >= low {
                edges.set(nx, ny, true);
                queue.push_back((nx, ny));
            }
        }
    }
    edges
}

pub fn canny(img: &GrayImage, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    let blurred = gaussian_blur(img, params.sigma);
    let grad = sobel(&blurred)?;
    let thin = non_maximum_suppression(&grad);
    let max_mag = magnitude(&grad).min_max().1;
    if max_mag <= 0.0 {
        return Ok(EdgeMap::new(img.width(), img.height()));
    }
    Ok(hysteresis(
        &thin,
        params.t_low * max_mag,
        params.t_high * max_mag,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_step(w: usize, h: usize, at: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, _| if x >= at { 1.0 } else { 0.0 })
    }

    #[test]
    fn sobel_constant_is_zero() {
        let g = sobel(&GrayImage::filled(5, 5, 0.7)).unwrap();
        assert!(g.gx.data().iter().chain(g.gy.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn sobel_vertical_step_hand_convolved() {
        // columns 0,1 are 0, columns 2..5 are 1
        let g = sobel(&vertical_step(5, 5, 2)).unwrap();
        for y in 0..5 {
            assert_eq!(g.gx.get(0, y), 0.0);
            assert_eq!(g.gx.get(1, y), 4.0);
            assert_eq!(g.gx.get(2, y), 4.0);
            assert_eq!(g.gx.get(3, y), 0.0);
            for x in 0..5 {
                assert_eq!(g.gy.get(x, y), 0.0);
            }
        }
    }

    #[test]
    fn sobel_transpose_swaps_components() {
        let img = GrayImage::from_fn(6, 5, |x, y| ((x * 3 + y * y) % 7) as f64 / 7.0);
        let a = sobel(&img).unwrap();
        let b = sobel(&img.transpose()).unwrap();
        assert_eq!(a.gx.transpose(), b.gy);
        assert_eq!(a.gy.transpose(), b.gx);
    }

    #[test]
    fn sobel_rejects_tiny() {
        assert!(matches!(
            sobel(&GrayImage::filled(2, 5, 0.0)),
            Err(Error::TooSmall(_))
        ));
    }

    #[test]
    fn bin_boundaries_round_toward_horizontal() {
        assert_eq!(
            DirectionBin::from_gradient(1.0, 0.0),
            DirectionBin::Horizontal
        );
        assert_eq!(
            DirectionBin::from_gradient(1.0, 1.0),
            DirectionBin::Diagonal
        );
        assert_eq!(
            DirectionBin::from_gradient(0.0, 1.0),
            DirectionBin::Vertical
        );
        assert_eq!(
            DirectionBin::from_gradient(-1.0, 1.0),
            DirectionBin::AntiDiagonal
        );
        assert_eq!(
            DirectionBin::from_gradient(-1.0, 0.0),
            DirectionBin::Horizontal
        );
        assert_eq!(
            DirectionBin::from_gradient(0.0, -1.0),
            DirectionBin::Vertical
        );
        assert_eq!(
            DirectionBin::from_gradient(-1.0, -1.0),
            DirectionBin::Diagonal
        );
    }

    #[test]
    fn threshold_ordering_enforced() {
        let img = GrayImage::filled(8, 8, 0.0);
        let bad = CannyParams {
            sigma: 1.0,
            t_low: 0.3,
            t_high: 0.2,
        };
        assert!(canny(&img, &bad).is_err());
    }

    #[test]
    fn constant_gives_no_edges() {
        let e = canny(&GrayImage::filled(10, 10, 0.5), &CannyParams::default()).unwrap();
        assert_eq!(e.count(), 0);
    }
}
