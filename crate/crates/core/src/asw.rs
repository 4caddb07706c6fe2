//! Adaptive style weights.
//!
//! For each feature layer the style exemplars form a fully connected graph
//! whose edge strength is the inverse of their feature distance. PageRank over
//! that graph scores how typical each exemplar is; a sigmoid of the rescaled
//! score becomes the exemplar's weight for that layer. Outliers (an all-black
//! exemplar among paintings, say) end up with the smallest weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::FeatureMap;

/// Square matrix over style nodes, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl NodeMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Difference, similarity and edge-weight matrices of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub layer: usize,
    pub delta: NodeMatrix,
    pub gamma: NodeMatrix,
    pub mu: NodeMatrix,
}

impl SimilarityGraph {
    pub fn from_features(layer: usize, style_features: &[&FeatureMap]) -> Result<Self> {
        let delta = difference_matrix(style_features)?;
        let gamma = similarity_matrix(&delta);
        let mu = edge_weights(&gamma)?;
        Ok(Self {
            layer,
            delta,
            gamma,
            mu,
        })
    }

    pub fn n_styles(&self) -> usize {
        self.delta.n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRankVector {
    pub layer: usize,
    pub pr: Vec<f64>,
    pub theta: f64,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AswTable {
    pub n_layers: usize,
    pub n_styles: usize,
    /// Raw sigmoid weights, `omega[layer][style]`.
    pub omega: Vec<Vec<f64>>,
    /// `omega / (n_layers * n_styles)`.
    pub omega_bar: Vec<Vec<f64>>,
}

impl AswTable {
    pub fn weight(&self, layer: usize, style: usize) -> f64 {
        self.omega_bar[layer][style]
    }

    /// Every normalized weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> AswTable {
        AswTable {
            omega_bar: self
                .omega_bar
                .iter()
                .map(|row| row.iter().map(|w| w * c).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// `Delta_pq = 1/2 * sum (F_p - F_q)^2` over all activations of one layer.
pub fn difference_matrix(style_features: &[&FeatureMap]) -> Result<NodeMatrix> {
    let n = style_features.len();
    if n < 2 {
        return Err(Error::param(
            "styles",
            format!("need at least 2 styles, got {n}"),
        ));
    }
    let first = style_features[0];
    if let Some(bad) = style_features.iter().find(|f| !f.same_shape(first)) {
        return Err(Error::DimensionMismatch(format!(
            "style features {:?} vs {:?}",
            bad.shape(),
            first.shape()
        )));
    }
    let mut delta = NodeMatrix::zeros(n);
    for p in 0..n {
        for q in p + 1..n {
            let d: f64 = style_features[p]
                .data
                .iter()
                .zip(&style_features[q].data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                * 0.5;
            delta.set(p, q, d);
            delta.set(q, p, d);
        }
    }
    Ok(delta)
}

/// `Gamma_pq = max(Delta) / (Delta_pq + eps)` off the diagonal, with
/// `eps = 1e-8 * max(Delta)` and a zero diagonal. If every difference is zero
/// the graph is uniform: `Gamma_pq = 1` for `p != q`.
pub fn similarity_matrix(delta: &NodeMatrix) -> NodeMatrix {
    let n = delta.n;
    let max = delta.max();
    let mut gamma = NodeMatrix::zeros(n);
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            let v = if max > 0.0 {
                max / (delta.get(p, q) + 1e-8 * max)
            } else {
                1.0
            };
            gamma.set(p, q, v);
        }
    }
    gamma
}

/// Row normalization `mu_ij = Gamma_ij / sum_j Gamma_ij`.
pub fn edge_weights(gamma: &NodeMatrix) -> Result<NodeMatrix> {
    let n = gamma.n;
    let mut mu = NodeMatrix::zeros(n);
    for i in 0..n {
        let total: f64 = gamma.row(i).iter().sum();
        if !(total > 0.0) {
            return Err(Error::param(
                "gamma",
                format!("row {i} has no positive entry"),
            ));
        }
        for j in 0..n {
            mu.set(i, j, gamma.get(i, j) / total);
        }
    }
    Ok(mu)
}

/// Damped PageRank on the similarity graph.
///
/// Each step computes
/// `PR_t(i) = (1 - theta)/N + (theta/N) * sum_{j != i} mu_ji * PR_{t-1}(j)`,
/// i.e. node `j` passes its score to `i` in proportion to `j`'s normalized edge
/// weight towards `i`. Scores start at `1/N` and iteration stops once the L1
/// change, relative to the L1 norm of the new iterate, is at most `tol`.
/// Scores are not renormalized, so they do not sum to one.
pub fn pagerank(mu: &NodeMatrix, theta: f64, tol: f64, max_iter: usize) -> Result<PageRankVector> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param(
            "theta",
            format!("must lie in (0, 1), got {theta}"),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be > 0, got {tol}")));
    }
    let n = mu.n;
    let nf = n as f64;
    let mut pr = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iter {
        for (i, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| mu.get(j, i) * pr[j])
                .sum();
            *slot = (1.0 - theta) / nf + theta / nf * inflow;
        }
        let change: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
        let norm: f64 = next.iter().map(|v| v.abs()).sum();
        std::mem::swap(&mut pr, &mut next);
        last_change = change;
        if change <= tol * norm {
            return Ok(PageRankVector {
                layer: 0,
                pr,
                theta,
                iterations_used: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change,
    })
}

/// `omega = 1 / (1 + exp(2 - 4 (PR - min) / (max - min)))`, or 0.5 everywhere
/// when all scores are equal.
pub fn asw_map(pr: &[f64]) -> Vec<f64> {
    let min = pr.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.5; pr.len()];
    }
    pr.iter()
        .map(|&p| 1.0 / (1.0 + (2.0 - 4.0 * (p - min) / (max - min)).exp()))
        .collect()
}

/// `omega_bar = omega / (n_layers * n_styles)`; `omega` is indexed `[layer][style]`.
pub fn normalize_asw(omega: Vec<Vec<f64>>, n_layers: usize, n_styles: usize) -> Result<AswTable> {
    if n_layers == 0 || n_styles == 0 {
        return Err(Error::param(
            "styles",
            "need at least one layer and one style",
        ));
    }
    if omega.len() != n_layers || omega.iter().any(|row| row.len() != n_styles) {
        return Err(Error::DimensionMismatch(format!(
            "omega table is not {n_layers} x {n_styles}"
        )));
    }
    let scale = (n_layers * n_styles) as f64;
    let omega_bar = omega
        .iter()
        .map(|row| row.iter().map(|w| w / scale).collect())
        .collect();
    Ok(AswTable {
        n_layers,
        n_styles,
        omega,
        omega_bar,
    })
}

pub const DEFAULT_THETA: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Full weighting for `style_features[style][layer]`.
///
/// Returns the table together with the per-layer PageRank vectors. A single
/// style skips the graph and receives the degenerate weight 0.5.
pub fn compute_asw(
    style_features: &[Vec<FeatureMap>],
    theta: f64,
    tol: f64,
) -> Result<(AswTable, Vec<PageRankVector>)> {
    let n_styles = style_features.len();
    if n_styles == 0 {
        return Err(Error::param("styles", "need at least one style"));
    }
    let n_layers = style_features[0].len();
    if n_layers == 0 || style_features.iter().any(|s| s.len() != n_layers) {
        return Err(Error::DimensionMismatch(
            "every style needs features at every layer".into(),
        ));
    }

    let per_layer = |l: usize| -> Result<PageRankVector> {
        if n_styles == 1 {
            return Ok(PageRankVector {
                layer: l,
                pr: vec![1.0 - theta],
                theta,
                iterations_used: 0,
            });
        }
        let maps: Vec<&FeatureMap> = style_features.iter().map(|s| &s[l]).collect();
        let graph = SimilarityGraph::from_features(l, &maps)?;
        let mut pr = pagerank(&graph.mu, theta, tol, DEFAULT_MAX_ITER)?;
        pr.layer = l;
        Ok(pr)
    };
    #[cfg(feature = "parallel")]
    let ranks: Vec<PageRankVector> = {
        use rayon::prelude::*;
        (0..n_layers)
            .into_par_iter()
            .map(per_layer)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let ranks: Vec<PageRankVector> = (0..n_layers).map(per_layer).collect::<Result<_>>()?;

    let omega = ranks.iter().map(|r| asw_map(&r.pr)).collect();
    Ok((normalize_asw(omega, n_layers, n_styles)?, ranks))
}
