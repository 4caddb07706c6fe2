#![allow(dead_code)]

use std::path::PathBuf;

use lineartist::imgio::{load_image, resize, to_grayscale};
use lineartist::{GrayImage, ImageBuf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
}

/// One of the bundled 320x240 outdoor scenes.
pub fn scene(i: usize) -> ImageBuf {
    load_image(data_dir().join(format!("scene{i}.png"))).expect("bundled scene")
}

pub fn scene_gray(i: usize, side: usize) -> GrayImage {
    to_grayscale(&resize(&scene(i), side, side).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_gray(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut r = rng(seed);
    GrayImage::from_fn(w, h, |_, _| r.gen::<f64>())
}

pub fn random_image(w: usize, h: usize, c: usize, lo: f64, hi: f64, seed: u64) -> ImageBuf {
    let mut r = rng(seed);
    let data = (0..w * h * c).map(|_| r.gen_range(lo..hi)).collect();
    ImageBuf::new(w, h, c, data).unwrap()
}

pub fn disk(side: usize, cx: f64, cy: f64, radius: f64, inside: f64, outside: f64) -> GrayImage {
    GrayImage::from_fn(side, side, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        if dx * dx + dy * dy <= radius * radius {
            inside
        } else {
            outside
        }
    })
}

/// Gaussian elimination with partial pivoting; `a` is row-major `n x n`.
pub fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Straight-line Canny without blur: Sobel, 4-bin NMS, hysteresis by
/// repeated sweeps until nothing changes.
pub fn reference_canny(img: &GrayImage, low: f64, high: f64) -> Vec<bool> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let px = |x: isize, y: isize| img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
    let n = (w * h) as usize;
    let (mut gx, mut gy, mut mag) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            gx[i] = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            gy[i] = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            mag[i] = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
        }
    }
    let at = |x: isize, y: isize, mag: &[f64]| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            mag[(y * w + x) as usize]
        }
    };
    let mut thin = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if mag[i] == 0.0 {
                continue;
            }
            let mut a = gy[i].atan2(gx[i]).to_degrees();
            if a < 0.0 {
                a += 180.0;
            }
            let (dx, dy) = if a <= 22.5 || a >= 157.5 {
                (1, 0)
            } else if a <= 67.5 {
                (1, 1)
            } else if a < 112.5 {
                (0, 1)
            } else {
                (1, -1)
            };
            if mag[i] > at(x - dx, y - dy, &mag) && mag[i] >= at(x + dx, y + dy, &mag) {
                thin[i] = mag[i];
            }
        }
    }
    let max = mag.iter().cloned().fold(0.0, f64::max);
    let mut edge: Vec<bool> = thin.iter().map(|&m| m > 0.0 && m >= high * max).collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if edge[i] || !(thin[i] > 0.0 && thin[i] >= low * max) {
                    continue;
                }
                let linked = (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        (dx, dy) != (0, 0)
                            && nx >= 0
                            && ny >= 0
                            && nx < w
                            && ny < h
                            && edge[(ny * w + nx) as usize]
                    })
                });
                if linked {
                    edge[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return edge;
        }
    }
}
