//! Separable 2-D FFT over row-major planes.
//!
//! Plans are created per call; nothing here is shared between threads.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use std::sync::Arc;

pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft(width, FftDirection::Forward),
            row_inv: planner.plan_fft(width, FftDirection::Inverse),
            col_fwd: planner.plan_fft(height, FftDirection::Forward),
            col_inv: planner.plan_fft(height, FftDirection::Inverse),
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.transform(&mut buf, true);
        buf
    }

    /// Inverse transform, normalized, returning the real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut buf, false);
        let scale = 1.0 / (self.width * self.height) as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], forward: bool) {
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        // rows are contiguous
        row.process(buf);
        let (w, h) = (self.width, self.height);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = buf[y * w + x];
            }
            col.process(&mut column);
            for y in 0..h {
                buf[y * w + x] = column[y];
            }
        }
    }
}

/// Transfer function of a circular forward difference of length `n`:
/// `exp(2*pi*i*k/n) - 1` for each frequency index `k`.
pub(crate) fn forward_difference_otf(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Complex64::new(phase.cos() - 1.0, phase.sin())
        })
        .collect()
}
