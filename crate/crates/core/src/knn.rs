//! k-nearest-neighbour classification as a training-free probe of feature
//! quality: query features are labelled by votes of their nearest gallery
//! features. Search is exact.

use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{FeatureMatrix, PredictionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Weighting {
    Uniform,
    /// Each neighbour votes with `exp(s / τ)`, where `s` is cosine similarity or
    /// negated Euclidean distance.
    SoftmaxTemperature { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub metric: Metric,
    pub weighting: Weighting,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 20,
            metric: Metric::Cosine,
            weighting: Weighting::SoftmaxTemperature { tau: 0.07 },
        }
    }
}

impl KnnConfig {
    pub fn uniform(k: usize, metric: Metric) -> Self {
        Self {
            k,
            metric,
            weighting: Weighting::Uniform,
        }
    }

    fn validate(&self, gallery: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.k > gallery {
            return Err(Error::KTooLarge {
                k: self.k,
                gallery,
            });
        }
        if let Weighting::SoftmaxTemperature { tau } = self.weighting {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
            }
        }
        Ok(())
    }
}

/// Raw k-NN output, before query labels are known.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnPredictions {
    pub predicted: Vec<usize>,
    /// Winning class's share of the total vote weight.
    pub confidence: Vec<f64>,
    pub n_classes: usize,
    /// Query rows whose feature vector is all zeros (cosine metric only).
    pub zero_queries: Vec<usize>,
    /// Number of all-zero gallery rows (cosine metric only).
    pub zero_gallery: usize,
}

impl KnnPredictions {
    pub fn with_labels(self, labels: &[usize]) -> Result<PredictionSet> {
        let n_classes = labels
            .iter()
            .map(|&l| l + 1)
            .max()
            .unwrap_or(0)
            .max(self.n_classes);
        PredictionSet::new(self.confidence, self.predicted, labels.to_vec(), n_classes)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.zero_gallery > 0 {
            out.push(format!(
                "{} zero-vector gallery rows treated as cosine similarity 0",
                self.zero_gallery
            ));
        }
        if !self.zero_queries.is_empty() {
            out.push(format!(
                "{} zero-vector query rows treated as cosine similarity 0",
                self.zero_queries.len()
            ));
        }
        out
    }
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Similarity score between a query and a gallery row: larger is nearer.
fn score(metric: Metric, q: ArrayView1<f64>, q_norm: f64, g: ArrayView1<f64>, g_norm: f64) -> f64 {
    match metric {
        Metric::Cosine => {
            if q_norm == 0.0 || g_norm == 0.0 {
                0.0
            } else {
                dot(q, g) / (q_norm * g_norm)
            }
        }
        Metric::Euclidean => {
            let d2: f64 = q.iter().zip(g.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            -d2.sqrt()
        }
    }
}

/// Nearest-first order: higher score, then lower gallery index.
fn nearer(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

fn vote(neighbours: &[(f64, usize)], labels: &[usize], n_classes: usize, w: Weighting) -> (usize, f64) {
    let mut votes = vec![0.0; n_classes];
    match w {
        Weighting::Uniform => {
            for &(_, g) in neighbours {
                votes[labels[g]] += 1.0;
            }
        }
        Weighting::SoftmaxTemperature { tau } => {
            let top = neighbours[0].0;
            for &(s, g) in neighbours {
                votes[labels[g]] += ((s - top) / tau).exp();
            }
        }
    }
    let total: f64 = votes.iter().sum();
    let mut best = 0;
    for c in 1..n_classes {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    (best, votes[best] / total)
}

fn classify_matrices(
    gallery: ArrayView2<f64>,
    labels: &[usize],
    query: ArrayView2<f64>,
    cfg: &KnnConfig,
) -> Result<KnnPredictions> {
    if gallery.ncols() != query.ncols() {
        return Err(Error::DimensionMismatch {
            gallery: gallery.ncols(),
            query: query.ncols(),
        });
    }
    if labels.len() != gallery.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} gallery labels for {} gallery rows",
            labels.len(),
            gallery.nrows()
        )));
    }
    cfg.validate(gallery.nrows())?;
    let n_classes = labels.iter().map(|&l| l + 1).max().unwrap_or(1);
    let g_norms: Vec<f64> = gallery.rows().into_iter().map(norm).collect();
    let cosine = cfg.metric == Metric::Cosine;

    let rows: Vec<(usize, f64, bool)> = (0..query.nrows())
        .into_par_iter()
        .map(|qi| {
            let q = query.row(qi);
            let q_norm = norm(q);
            let mut scored: Vec<(f64, usize)> = gallery
                .rows()
                .into_iter()
                .enumerate()
                .map(|(gi, g)| (score(cfg.metric, q, q_norm, g, g_norms[gi]), gi))
                .collect();
            if cfg.k < scored.len() {
                scored.select_nth_unstable_by(cfg.k - 1, nearer);
                scored.truncate(cfg.k);
            }
            scored.sort_by(nearer);
            let (class, share) = vote(&scored, labels, n_classes, cfg.weighting);
            (class, share, cosine && q_norm == 0.0)
        })
        .collect();

    Ok(KnnPredictions {
        predicted: rows.iter().map(|r| r.0).collect(),
        confidence: rows.iter().map(|r| r.1).collect(),
        n_classes,
        zero_queries: rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.2)
            .map(|(i, _)| i)
            .collect(),
        zero_gallery: if cosine {
            g_norms.iter().filter(|&&n| n == 0.0).count()
        } else {
            0
        },
    })
}

/// Labels each query row by a vote among its `k` nearest gallery rows.
///
/// Distance ties go to the lower gallery index and vote ties to the lower
/// class index, so the output is fully deterministic.
pub fn knn_classify(
    gallery: &FeatureMatrix,
    gallery_labels: &[usize],
    query: &FeatureMatrix,
    cfg: &KnnConfig,
) -> Result<KnnPredictions> {
    classify_matrices(gallery.matrix()?, gallery_labels, query.matrix()?, cfg)
}

/// Full evaluation: predictions plus accuracy against the query labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnEvaluation {
    pub accuracy: f64,
    pub n_queries: usize,
    pub predictions: PredictionSet,
    pub warnings: Vec<String>,
}

pub fn knn_evaluate(
    gallery: &FeatureMatrix,
    gallery_labels: &[usize],
    query: &FeatureMatrix,
    query_labels: &[usize],
    cfg: &KnnConfig,
) -> Result<KnnEvaluation> {
    if query_labels.len() != query.n() {
        return Err(Error::InvalidArgument(format!(
            "{} query labels for {} query rows",
            query_labels.len(),
            query.n()
        )));
    }
    let raw = knn_classify(gallery, gallery_labels, query, cfg)?;
    let warnings = raw.warnings();
    let predictions = raw.with_labels(query_labels)?;
    Ok(KnnEvaluation {
        accuracy: predictions.accuracy(),
        n_queries: predictions.len(),
        predictions,
        warnings,
    })
}

/// Fraction of queries whose predicted class matches their label.
pub fn knn_accuracy(
    gallery: &FeatureMatrix,
    gallery_labels: &[usize],
    query: &FeatureMatrix,
    query_labels: &[usize],
    cfg: &KnnConfig,
) -> Result<f64> {
    knn_evaluate(gallery, gallery_labels, query, query_labels, cfg).map(|e| e.accuracy)
}
