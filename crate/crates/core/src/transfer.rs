//! Multi-style transfer by direct image optimization.
//!
//! The objective is `alpha * sum_l L_content(l) + beta * sum_{l,a} w(l,a) * L_style(l,a)`
//! with
//!
//! * `L_content = 1/2 * sum (F_d - F_x)^2`
//! * `L_style = 1/(4 n w h) * sum (G_a - G_x)^2` on Gram matrices,
//!
//! and `w(l,a)` the normalized adaptive style weights. Gradients are analytic
//! and pulled back through the feature pyramid; the image is updated with Adam
//! and clamped to `[0, 1]` after every step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asw::{compute_asw, AswTable, DEFAULT_THETA, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::feature::{extract, extract_traced, gram, FeatureMap, FilterBank, GramMatrix};
use crate::imgio::ImageBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Noise,
    Content,
}

impl std::str::FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(Init::Noise),
            "content" => Ok(Init::Content),
            other => Err(Error::param(
                "init",
                format!("expected noise or content, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub iterations: usize,
    pub init: Init,
    pub seed: u64,
    /// PageRank damping for the style weights.
    pub theta: f64,
    /// PageRank convergence tolerance.
    pub tol: f64,
    /// Layers carrying the content term; `None` means all.
    pub content_layers: Option<Vec<usize>>,
    /// Layers carrying the style term; `None` means all.
    pub style_layers: Option<Vec<usize>>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            alpha: 8.0,
            beta: 500.0,
            lr: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            iterations: 2000,
            init: Init::Noise,
            seed: 42,
            theta: DEFAULT_THETA,
            tol: DEFAULT_TOL,
            content_layers: None,
            style_layers: None,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        };
        finite_nonneg("alpha", self.alpha)?;
        finite_nonneg("beta", self.beta)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param("lr", format!("must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::param(name, format!("must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::param(
                "adam-eps",
                format!("must be > 0, got {}", self.adam_eps),
            ));
        }
        if self.iterations < 1 {
            return Err(Error::param("iters", "must be at least 1"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::param(
                "theta",
                format!("must lie in (0, 1), got {}", self.theta),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(
                "tol",
                format!("must be > 0, got {}", self.tol),
            ));
        }
        Ok(())
    }

    fn uses(mask: &Option<Vec<usize>>, layer: usize) -> bool {
        mask.as_ref().map_or(true, |m| m.contains(&layer))
    }
}

fn check_shapes(a: &FeatureMap, b: &FeatureMap) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "feature maps {:?} and {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// `1/2 * sum (F_d - F_x)^2` and its gradient `F_x - F_d`.
pub fn content_loss_grad(f_d: &FeatureMap, f_x: &FeatureMap) -> Result<(f64, Vec<f64>)> {
    check_shapes(f_d, f_x)?;
    let grad: Vec<f64> = f_x.data.iter().zip(&f_d.data).map(|(x, d)| x - d).collect();
    let loss = 0.5 * grad.iter().map(|g| g * g).sum::<f64>();
    Ok((loss, grad))
}

/// Style loss against a precomputed target Gram matrix.
pub fn style_loss_grad_gram(g_a: &GramMatrix, f_x: &FeatureMap) -> Result<(f64, Vec<f64>)> {
    if g_a.n != f_x.channels {
        return Err(Error::DimensionMismatch(format!(
            "target Gram is {0}x{0}, features have {1} channels",
            g_a.n, f_x.channels
        )));
    }
    let n = f_x.channels;
    let s = f_x.spatial();
    let norm = (n * s) as f64;
    let g_x = gram(f_x);
    let diff: Vec<f64> = g_x.data.iter().zip(&g_a.data).map(|(x, a)| x - a).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (4.0 * norm);

    // grad = (G_x - G_a) F_x / (n w h)
    let mut grad = vec![0.0; n * s];
    for i in 0..n {
        let out = &mut grad[i * s..(i + 1) * s];
        for j in 0..n {
            let c = diff[i * n + j] / norm;
            if c == 0.0 {
                continue;
            }
            for (o, f) in out.iter_mut().zip(&f_x.data[j * s..(j + 1) * s]) {
                *o += c * f;
            }
        }
    }
    Ok((loss, grad))
}

/// `1/(4 n w h) * sum (G_a - G_x)^2` and its gradient `(G_x - G_a) F_x / (n w h)`.
pub fn style_loss_grad(f_a: &FeatureMap, f_x: &FeatureMap) -> Result<(f64, Vec<f64>)> {
    check_shapes(f_a, f_x)?;
    style_loss_grad_gram(&gram(f_a), f_x)
}

/// Precomputed targets for repeated loss evaluations.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    bank: &'a FilterBank,
    content: Vec<FeatureMap>,
    /// `style_grams[style][layer]`
    style_grams: Vec<Vec<GramMatrix>>,
    asw: AswTable,
    alpha: f64,
    beta: f64,
    content_layers: Option<Vec<usize>>,
    style_layers: Option<Vec<usize>>,
}

impl<'a> Objective<'a> {
    pub fn new(
        bank: &'a FilterBank,
        content: Vec<FeatureMap>,
        style_features: &[Vec<FeatureMap>],
        asw: AswTable,
        cfg: &TransferConfig,
    ) -> Result<Self> {
        let n_layers = content.len();
        if asw.n_layers != n_layers || asw.n_styles != style_features.len() {
            return Err(Error::DimensionMismatch(format!(
                "weights are {}x{} but there are {} layers and {} styles",
                asw.n_layers,
                asw.n_styles,
                n_layers,
                style_features.len()
            )));
        }
        for style in style_features {
            if style.len() != n_layers {
                return Err(Error::DimensionMismatch(format!(
                    "style has {} layers, content has {n_layers}",
                    style.len()
                )));
            }
            for (f, c) in style.iter().zip(&content) {
                if f.channels != c.channels {
                    return Err(Error::DimensionMismatch(format!(
                        "style layer {} has {} channels, content has {}",
                        f.layer, f.channels, c.channels
                    )));
                }
            }
        }
        Ok(Self {
            bank,
            content,
            style_grams: style_features
                .iter()
                .map(|s| s.iter().map(gram).collect())
                .collect(),
            asw,
            alpha: cfg.alpha,
            beta: cfg.beta,
            content_layers: cfg.content_layers.clone(),
            style_layers: cfg.style_layers.clone(),
        })
    }

    pub fn asw(&self) -> &AswTable {
        &self.asw
    }

    /// Loss at `x` and its gradient in the image's interleaved layout.
    pub fn evaluate(&self, x: &ImageBuf) -> Result<(f64, Vec<f64>)> {
        let trace = extract_traced(x, self.bank)?;
        let fx = trace.features();
        if fx.len() != self.content.len() {
            return Err(Error::DimensionMismatch("layer count changed".into()));
        }

        let mut upstream = Vec::with_capacity(fx.len());
        let mut loss = 0.0;
        for (l, f) in fx.iter().enumerate() {
            let mut g = FeatureMap::zeros_like(f);
            if self.alpha != 0.0 && TransferConfig::uses(&self.content_layers, l) {
                let (lc, gc) = content_loss_grad(&self.content[l], f)?;
                loss += self.alpha * lc;
                g.data
                    .iter_mut()
                    .zip(&gc)
                    .for_each(|(o, v)| *o += self.alpha * v);
            }
            if self.beta != 0.0 && TransferConfig::uses(&self.style_layers, l) {
                for (a, grams) in self.style_grams.iter().enumerate() {
                    let w = self.beta * self.asw.weight(l, a);
                    let (ls, gs) = style_loss_grad_gram(&grams[l], f)?;
                    loss += w * ls;
                    g.data.iter_mut().zip(&gs).for_each(|(o, v)| *o += w * v);
                }
            }
            upstream.push(g);
        }
        let grad = trace.backward(self.bank, &upstream)?;
        Ok((loss, grad))
    }
}

/// Loss and image gradient for one `x`, given precomputed features.
pub fn total_loss(
    d_features: &[FeatureMap],
    style_features: &[Vec<FeatureMap>],
    x: &ImageBuf,
    bank: &FilterBank,
    asw: &AswTable,
    cfg: &TransferConfig,
) -> Result<(f64, Vec<f64>)> {
    Objective::new(bank, d_features.to_vec(), style_features, asw.clone(), cfg)?.evaluate(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update followed by clamping to `[0, 1]`.
pub fn adam_step(
    x: &ImageBuf,
    grad: &[f64],
    state: &mut AdamState,
    cfg: &TransferConfig,
) -> Result<ImageBuf> {
    let n = x.data().len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "image has {n} samples, gradient {}, state {}",
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        out.push(x.data()[i] - cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps));
    }
    ImageBuf::from_clamped(x.width(), x.height(), x.channels(), out)
}

/// Result of a full optimization run.
#[derive(Debug, Clone)]
pub struct StyleRun {
    pub image: ImageBuf,
    /// Loss before each step, then the loss of the returned image.
    pub losses: Vec<f64>,
    pub asw: AswTable,
}

/// Seeded uniform noise in `[0, 1)`.
pub fn noise_image(width: usize, height: usize, channels: usize, seed: u64) -> ImageBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height * channels)
        .map(|_| rng.gen::<f64>())
        .collect();
    ImageBuf::new(width, height, channels, data).expect("noise lies in [0, 1)")
}

/// Optimizes an image that keeps `d`'s content and the styles' Gram statistics.
///
/// All images must already share one size and channel count. When `asw` is
/// given it replaces the weights computed from the styles' own features.
pub fn stylize_run(
    d: &ImageBuf,
    styles: &[ImageBuf],
    cfg: &TransferConfig,
    bank: &FilterBank,
    asw: Option<AswTable>,
) -> Result<StyleRun> {
    cfg.validate()?;
    if styles.is_empty() {
        return Err(Error::param("styles", "need at least one style image"));
    }
    for s in styles {
        if (s.width(), s.height(), s.channels()) != (d.width(), d.height(), d.channels()) {
            return Err(Error::DimensionMismatch(format!(
                "style is {}x{}x{}, content is {}x{}x{}",
                s.width(),
                s.height(),
                s.channels(),
                d.width(),
                d.height(),
                d.channels()
            )));
        }
    }

    let content = extract(d, bank)?;
    let style_features: Vec<Vec<FeatureMap>> = styles
        .iter()
        .map(|s| extract(s, bank))
        .collect::<Result<_>>()?;
    let asw = match asw {
        Some(t) => t,
        None => compute_asw(&style_features, cfg.theta, cfg.tol)?.0,
    };
    let objective = Objective::new(bank, content, &style_features, asw, cfg)?;

    let mut x = match cfg.init {
        Init::Noise => noise_image(d.width(), d.height(), d.channels(), cfg.seed),
        Init::Content => d.clone(),
    };
    let mut state = AdamState::new(x.data().len());
    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..cfg.iterations {
        let (loss, grad) = objective.evaluate(&x)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss or gradient at iteration {it}"
            )));
        }
        log::debug!("iteration {it}: loss {loss:.6e}");
        losses.push(loss);
        x = adam_step(&x, &grad, &mut state, cfg)?;
    }
    let (final_loss, _) = objective.evaluate(&x)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFinite("final loss".into()));
    }
    losses.push(final_loss);
    Ok(StyleRun {
        image: x,
        losses,
        asw: objective.asw,
    })
}

pub fn stylize(
    d: &ImageBuf,
    styles: &[ImageBuf],
    cfg: &TransferConfig,
    bank: &FilterBank,
) -> Result<ImageBuf> {
    Ok(stylize_run(d, styles, cfg, bank, None)?.image)
}
