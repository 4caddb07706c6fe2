//! L0 gradient-minimization smoothing by half-quadratic splitting.
//!
//! Minimizes `sum (M - R)^2 + lambda * cnt(M)` where `cnt` counts pixels with a
//! nonzero gradient. Auxiliary gradients `(h, v)` are alternated with `M`
//! under a growing penalty `beta`; the `M` step is solved exactly in the
//! Fourier domain, which requires circular (periodic) differences.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft2::{forward_difference_otf, Fft2};
use crate::imgio::{clamp_unit, GrayImage, ImageBuf};

/// Gradients with magnitude at or below this are treated as zero by [`grad_count`].
pub const ZERO_GRADIENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0Params {
    pub lambda: f64,
    pub kappa: f64,
    pub beta_max: f64,
}

impl Default for L0Params {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            kappa: 1.2,
            beta_max: 1e5,
        }
    }
}

impl L0Params {
    pub fn new(lambda: f64, kappa: f64, beta_max: f64) -> Result<Self> {
        let p = Self {
            lambda,
            kappa,
            beta_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(
                "lambda",
                format!("must be > 0, got {}", self.lambda),
            ));
        }
        if !(self.kappa > 1.0 && self.kappa.is_finite()) {
            return Err(Error::param(
                "kappa",
                format!("must be > 1, got {}", self.kappa),
            ));
        }
        if !(self.beta_max > 2.0 * self.lambda && self.beta_max.is_finite()) {
            return Err(Error::param(
                "beta-max",
                format!(
                    "must exceed 2*lambda = {}, got {}",
                    2.0 * self.lambda,
                    self.beta_max
                ),
            ));
        }
        Ok(())
    }
}

/// Horizontal and vertical components of a per-pixel vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gx: GrayImage,
    pub gy: GrayImage,
}

impl GradientField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            gx: GrayImage::filled(width, height, 0.0),
            gy: GrayImage::filled(width, height, 0.0),
        }
    }

    pub fn width(&self) -> usize {
        self.gx.width()
    }

    pub fn height(&self) -> usize {
        self.gx.height()
    }

    /// Pixels where either component is nonzero.
    pub fn nonzero_count(&self) -> usize {
        self.gx
            .data()
            .iter()
            .zip(self.gy.data())
            .filter(|(a, b)| a.abs() + b.abs() > ZERO_GRADIENT)
            .count()
    }
}

/// Circular forward differences `M(x+1, y) - M(x, y)` and `M(x, y+1) - M(x, y)`.
pub fn circular_gradient(m: &GrayImage) -> GradientField {
    let (w, h) = (m.width(), m.height());
    GradientField {
        gx: GrayImage::from_fn(w, h, |x, y| m.get((x + 1) % w, y) - m.get(x, y)),
        gy: GrayImage::from_fn(w, h, |x, y| m.get(x, (y + 1) % h) - m.get(x, y)),
    }
}

/// Number of pixels with `|dx M| + |dy M| > 1e-12` under circular differences.
pub fn grad_count(m: &GrayImage) -> usize {
    circular_gradient(m).nonzero_count()
}

/// The L0 objective `sum (M - R)^2 + lambda * cnt(M)`.
pub fn l0_objective(m: &GrayImage, r: &GrayImage, lambda: f64) -> f64 {
    data_term(m, r) + lambda * grad_count(m) as f64
}

/// Objective with the gradient count taken from a thresholded field `(h, v)`
/// rather than from `M` itself.
pub fn l0_objective_with(m: &GrayImage, r: &GrayImage, hv: &GradientField, lambda: f64) -> f64 {
    data_term(m, r) + lambda * hv.nonzero_count() as f64
}

fn data_term(m: &GrayImage, r: &GrayImage) -> f64 {
    m.data()
        .iter()
        .zip(r.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Per-pixel hard threshold: keep the gradient of `M` where its squared
/// magnitude exceeds `lambda / beta`, zero it elsewhere.
pub fn solve_hv(m: &GrayImage, lambda: f64, beta: f64) -> GradientField {
    let mut field = circular_gradient(m);
    let threshold = lambda / beta;
    let GradientField { gx, gy } = &mut field;
    for (a, b) in gx.data_mut().iter_mut().zip(gy.data_mut().iter_mut()) {
        if *a * *a + *b * *b <= threshold {
            *a = 0.0;
            *b = 0.0;
        }
    }
    field
}

/// Fourier-domain solver for the quadratic `M` step, reusable across `beta`.
struct MSolver {
    fft: Fft2,
    r_hat: Vec<Complex64>,
    dx: Vec<Complex64>,
    dy: Vec<Complex64>,
    width: usize,
}

impl MSolver {
    fn new(r: &GrayImage) -> Self {
        let (w, h) = (r.width(), r.height());
        let fft = Fft2::new(w, h);
        let r_hat = fft.forward_real(r.data());
        Self {
            fft,
            r_hat,
            dx: forward_difference_otf(w),
            dy: forward_difference_otf(h),
            width: w,
        }
    }

    fn solve(&self, hv: &GradientField, beta: f64) -> Vec<f64> {
        let h_hat = self.fft.forward_real(hv.gx.data());
        let v_hat = self.fft.forward_real(hv.gy.data());
        let w = self.width;
        let out: Vec<Complex64> = (0..self.r_hat.len())
            .map(|i| {
                let (dx, dy) = (self.dx[i % w], self.dy[i / w]);
                let num = self.r_hat[i] + (dx.conj() * h_hat[i] + dy.conj() * v_hat[i]) * beta;
                let den = 1.0 + beta * (dx.norm_sqr() + dy.norm_sqr());
                num / den
            })
            .collect();
        self.fft.inverse_real(out)
    }
}

/// Exact minimizer of `sum (M - R)^2 + beta * ((dx M - h)^2 + (dy M - v)^2)`.
pub fn solve_m(r: &GrayImage, hv: &GradientField, beta: f64) -> Result<GrayImage> {
    if !r.same_size(&hv.gx) || !r.same_size(&hv.gy) {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, gradient field is {}x{}",
            r.width(),
            r.height(),
            hv.width(),
            hv.height()
        )));
    }
    let data = MSolver::new(r).solve(hv, beta);
    GrayImage::new(r.width(), r.height(), data)
}

/// Smooths one plane, finishing with [`fuse_flat_regions`] on the last
/// support. The result is clamped to `[0, 1]`.
pub fn l0_smooth_plane(r: &GrayImage, params: &L0Params) -> GrayImage {
    let solver = MSolver::new(r);
    let mut m = r.clone();
    let mut beta = 2.0 * params.lambda;
    let mut hv = GradientField::zeros(r.width(), r.height());
    while beta <= params.beta_max {
        hv = solve_hv(&m, params.lambda, beta);
        m = GrayImage::new(r.width(), r.height(), solver.solve(&hv, beta))
            .expect("solver keeps the image shape");
        beta *= params.kappa;
    }
    if beta > 2.0 * params.lambda {
        m = fuse_flat_regions(r, &hv);
    }
    for s in m.data_mut() {
        *s = clamp_unit(*s);
    }
    m
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Limit of the `M` step as `beta` grows without bound for a fixed support:
/// pixels linked by a zero entry of `hv` (circularly) form regions, and each
/// region takes the mean of `r` over it. Regions where `r` is constant keep
/// that value exactly.
pub fn fuse_flat_regions(r: &GrayImage, hv: &GradientField) -> GrayImage {
    let (w, h) = (r.width(), r.height());
    let mut parent: Vec<usize> = (0..w * h).collect();
    let union = |a: usize, b: usize, parent: &mut Vec<usize>| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if w > 1 && hv.gx.get(x, y) == 0.0 {
                union(i, y * w + (x + 1) % w, &mut parent);
            }
            if h > 1 && hv.gy.get(x, y) == 0.0 {
                union(i, ((y + 1) % h) * w + x, &mut parent);
            }
        }
    }
    let n = w * h;
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    for (i, &root) in roots.iter().enumerate() {
        let v = r.data()[i];
        sum[root] += v;
        count[root] += 1;
        lo[root] = lo[root].min(v);
        hi[root] = hi[root].max(v);
    }
    let data = roots
        .iter()
        .map(|&root| {
            if lo[root] == hi[root] {
                lo[root]
            } else {
                sum[root] / count[root] as f64
            }
        })
        .collect();
    GrayImage::new(w, h, data).expect("shape preserved")
}

/// L0 smoothing applied to each channel independently.
pub fn l0_smooth(r: &ImageBuf, params: &L0Params) -> Result<ImageBuf> {
    params.validate()?;
    let channels: Vec<GrayImage> = (0..r.channels()).map(|c| r.channel(c)).collect();
    #[cfg(feature = "parallel")]
    let smoothed: Vec<GrayImage> = {
        use rayon::prelude::*;
        channels
            .par_iter()
            .map(|c| l0_smooth_plane(c, params))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let smoothed: Vec<GrayImage> = channels
        .iter()
        .map(|c| l0_smooth_plane(c, params))
        .collect();
    ImageBuf::from_channels(&smoothed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_count_small_cases() {
        assert_eq!(grad_count(&GrayImage::filled(5, 4, 0.3)), 0);
        let m = GrayImage::new(2, 2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(grad_count(&m), 3);
        let row = GrayImage::from_fn(7, 1, |x, _| x as f64 / 10.0);
        assert_eq!(grad_count(&row), 7);
    }

    #[test]
    fn solve_hv_thresholds() {
        let flat = GrayImage::filled(4, 4, 0.5);
        let hv = solve_hv(&flat, 0.1, 0.01);
        assert_eq!(hv.nonzero_count(), 0);

        // gradient^2 = 0.5 at pixel 0 (only dx), threshold lambda/beta = 1
        let m = GrayImage::new(2, 1, vec![0.0, 0.5_f64.sqrt()]).unwrap();
        let hv = solve_hv(&m, 1.0, 1.0);
        assert_eq!(hv.gx.get(0, 0), 0.0);

        // gradient (0.6, 0): keeping costs lambda, zeroing costs beta * 0.36
        let m = GrayImage::new(2, 1, vec![0.2, 0.8]).unwrap();
        let (lambda, beta) = (0.25, 1.0);
        let keep = lambda;
        let drop = beta * 0.6_f64.powi(2);
        assert!(keep < drop);
        let hv = solve_hv(&m, lambda, beta);
        assert!((hv.gx.get(0, 0) - 0.6).abs() < 1e-15);
        assert_eq!(hv.gy.get(0, 0), 0.0);
    }

    #[test]
    fn solve_m_fixed_points() {
        let r = GrayImage::from_fn(6, 5, |x, y| ((x * 7 + y * 3) % 5) as f64 / 4.0);
        let hv = circular_gradient(&r);
        let m = solve_m(&r, &hv, 37.0).unwrap();
        let err = m
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");

        let m = solve_m(&r, &GradientField::zeros(6, 5), 0.0).unwrap();
        let err = m
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn solve_m_rejects_mismatch() {
        let r = GrayImage::filled(4, 4, 0.0);
        assert!(matches!(
            solve_m(&r, &GradientField::zeros(4, 3), 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn constant_is_fixed_point() {
        let img = ImageBuf::filled(9, 7, 3, 0.4).unwrap();
        let out = l0_smooth(&img, &L0Params::default()).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn params_validation() {
        assert!(L0Params::new(0.0, 1.2, 1e5).is_err());
        assert!(L0Params::new(0.02, 1.0, 1e5).is_err());
        assert!(L0Params::new(0.02, 1.2, 0.04).is_err());
        assert!(L0Params::new(0.02, 1.2, 1e5).is_ok());
    }
}
