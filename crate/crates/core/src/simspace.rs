//! Similarity-space membership.
//!
//! A candidate model belongs to the similarity space `T(η, ε)` of a reference
//! model when its representation similarity `M` to the reference is at least
//! `1 − η` and its accuracy divergence `A` from the reference is at most `ε`.
//! `M` is CKA over the stacked per-sample representations of the evaluation set
//! (averaging representations first would leave a single vector per model,
//! where CKA is undefined). `A` is a relative gap between mean losses; see
//! [`RelativeGap`].

use std::str::FromStr;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{cka_report, CkaOptions};
use crate::tensor_io::{pooled, CheckpointEntry, FeatureMatrix, Pooling, PredictionSet, RunManifest};

/// One model evaluated on a fixed sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    checkpoint_id: String,
    sample_ids: Vec<String>,
    features: IndexMap<String, FeatureMatrix>,
    predictions: Option<PredictionSet>,
    loss: Option<f64>,
}

impl ModelSnapshot {
    /// Builds a snapshot; every feature matrix must be pooled and share the same
    /// sample ids, and predictions (if any) must cover the same samples.
    pub fn new(
        checkpoint_id: impl Into<String>,
        features: IndexMap<String, FeatureMatrix>,
        predictions: Option<PredictionSet>,
        loss: Option<f64>,
    ) -> Result<Self> {
        let first = features
            .values()
            .next()
            .ok_or_else(|| Error::InvalidFeatures("snapshot has no layers".into()))?;
        let sample_ids = first.sample_ids().to_vec();
        for (layer, fm) in &features {
            if fm.sample_ids() != sample_ids.as_slice() {
                return Err(Error::InvalidFeatures(format!(
                    "layer {layer} does not share the snapshot's sample ids"
                )));
            }
            fm.matrix()?;
        }
        if let Some(p) = &predictions {
            if p.len() != sample_ids.len() {
                return Err(Error::InvalidPredictions(format!(
                    "{} predictions for {} samples",
                    p.len(),
                    sample_ids.len()
                )));
            }
        }
        if let Some(l) = loss {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::InvalidArgument(format!("loss must be finite and ≥ 0, got {l}")));
            }
        }
        Ok(Self {
            checkpoint_id: checkpoint_id.into(),
            sample_ids,
            features,
            predictions,
            loss,
        })
    }

    /// Loads every layer of a manifest checkpoint. Raw token layers are reduced
    /// with `pooling`.
    pub fn load(manifest: &RunManifest, ck: &CheckpointEntry, pooling: Pooling) -> Result<Self> {
        let mut features = IndexMap::new();
        for layer in ck.layers.keys() {
            let fm = manifest.load_layer(ck, layer)?;
            features.insert(layer.clone(), pooled(&fm, pooling)?);
        }
        let predictions = manifest.load_predictions(ck)?;
        Self::new(ck.id.clone(), features, predictions, ck.loss)
    }

    pub fn checkpoint_id(&self) -> &str {
        &self.checkpoint_id
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn layer(&self, layer_id: &str) -> Result<&FeatureMatrix> {
        self.features
            .get(layer_id)
            .ok_or_else(|| Error::LayerMissing(layer_id.to_owned()))
    }

    pub fn layer_ids(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    /// The last layer in declaration order.
    pub fn final_layer(&self) -> &str {
        self.features.keys().last().unwrap()
    }

    pub fn predictions(&self) -> Option<&PredictionSet> {
        self.predictions.as_ref()
    }

    pub fn loss(&self) -> Option<f64> {
        self.loss
    }
}

/// Which layers feed a similarity computation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    /// The reference snapshot's last layer.
    #[default]
    Final,
    /// Mean of per-layer values over the reference's layers.
    Mean,
    /// Every reference layer separately.
    All,
    Named(String),
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "final" => LayerSelector::Final,
            "mean" => LayerSelector::Mean,
            "all" => LayerSelector::All,
            "" => return Err(Error::InvalidArgument("empty layer selector".into())),
            name => LayerSelector::Named(name.to_owned()),
        })
    }
}

impl std::fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerSelector::Final => f.write_str("final"),
            LayerSelector::Mean => f.write_str("mean"),
            LayerSelector::All => f.write_str("all"),
            LayerSelector::Named(n) => f.write_str(n),
        }
    }
}

impl LayerSelector {
    /// Concrete layer ids of `snapshot` picked by this selector.
    pub fn resolve(&self, snapshot: &ModelSnapshot) -> Result<Vec<String>> {
        match self {
            LayerSelector::Final => Ok(vec![snapshot.final_layer().to_owned()]),
            LayerSelector::Mean | LayerSelector::All => {
                Ok(snapshot.layer_ids().map(str::to_owned).collect())
            }
            LayerSelector::Named(name) => {
                snapshot.layer(name)?;
                Ok(vec![name.clone()])
            }
        }
    }
}

fn check_samples(a: &ModelSnapshot, b: &ModelSnapshot) -> Result<()> {
    if a.sample_ids != b.sample_ids {
        return Err(Error::SampleMismatch);
    }
    Ok(())
}

/// CKA between reference and candidate for each layer the selector names.
pub fn layer_similarities(
    reference: &ModelSnapshot,
    candidate: &ModelSnapshot,
    selector: &LayerSelector,
    opts: &CkaOptions,
) -> Result<Vec<(String, f64)>> {
    check_samples(reference, candidate)?;
    selector
        .resolve(reference)?
        .into_iter()
        .map(|layer| {
            let x = reference.layer(&layer)?;
            let y = candidate.layer(&layer)?;
            let r = cka_report(x, y, opts)?;
            Ok((layer, r.value))
        })
        .collect()
}

/// Representation similarity `M` between a reference and a candidate model.
///
/// `All` is treated as `Mean`, since `M` is a single number.
pub fn m_operator(
    reference: &ModelSnapshot,
    candidate: &ModelSnapshot,
    selector: &LayerSelector,
    opts: &CkaOptions,
) -> Result<f64> {
    let values = layer_similarities(reference, candidate, selector, opts)?;
    Ok(values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64)
}

/// Maps two non-negative mean losses to a divergence in `[0, 1]`.
pub trait PerformanceDivergence {
    fn divergence(&self, reference: f64, candidate: f64) -> f64;
}

/// `|a − b| / max(a, b, δ)`: symmetric, in `[0, 1]`, and 0 when both are 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeGap {
    pub delta: f64,
}

impl Default for RelativeGap {
    fn default() -> Self {
        Self { delta: 1e-12 }
    }
}

impl PerformanceDivergence for RelativeGap {
    fn divergence(&self, reference: f64, candidate: f64) -> f64 {
        (reference - candidate).abs() / reference.max(candidate).max(self.delta)
    }
}

/// Which per-model loss `A` compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossSource {
    /// Top-1 error rate from the snapshot predictions.
    #[default]
    ErrorRate,
    /// The mean loss recorded with each snapshot.
    SuppliedLoss,
}

impl FromStr for LossSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error_rate" => Ok(LossSource::ErrorRate),
            "loss" | "supplied_loss" => Ok(LossSource::SuppliedLoss),
            other => Err(Error::InvalidArgument(format!("unknown loss source {other:?}"))),
        }
    }
}

fn mean_loss(s: &ModelSnapshot, source: LossSource) -> Result<f64> {
    match source {
        LossSource::ErrorRate => s
            .predictions()
            .map(PredictionSet::error_rate)
            .ok_or_else(|| Error::MissingPredictions(s.checkpoint_id.clone())),
        LossSource::SuppliedLoss => s.loss.ok_or(Error::MissingLoss),
    }
}

/// Accuracy divergence `A` between a reference and a candidate model.
pub fn a_operator(
    reference: &ModelSnapshot,
    candidate: &ModelSnapshot,
    source: LossSource,
) -> Result<f64> {
    a_operator_with(reference, candidate, source, &RelativeGap::default())
}

pub fn a_operator_with(
    reference: &ModelSnapshot,
    candidate: &ModelSnapshot,
    source: LossSource,
    divergence: &dyn PerformanceDivergence,
) -> Result<f64> {
    check_samples(reference, candidate)?;
    let e_ref = mean_loss(reference, source)?;
    let e_cand = mean_loss(candidate, source)?;
    Ok(divergence.divergence(e_ref, e_cand))
}

/// Tolerances defining one similarity space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    /// Similarity tolerance: members need `M ≥ 1 − eta`.
    pub eta: f64,
    /// Accuracy threshold: members need `A ≤ epsilon`.
    pub epsilon: f64,
    pub dataset_id: String,
    pub layer_selector: LayerSelector,
    #[serde(default)]
    pub loss_source: LossSource,
}

impl SpaceSpec {
    pub fn new(eta: f64, epsilon: f64) -> Result<Self> {
        let spec = Self {
            eta,
            epsilon,
            dataset_id: String::new(),
            layer_selector: LayerSelector::Final,
            loss_source: LossSource::ErrorRate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidArgument(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be finite and ≥ 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// The membership rule, inclusive at both boundaries.
    pub fn admits(&self, m_value: f64, a_value: f64) -> bool {
        m_value >= 1.0 - self.eta && a_value <= self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipVerdict {
    pub m_value: f64,
    pub a_value: f64,
    pub member: bool,
    pub spec: SpaceSpec,
}

impl MembershipVerdict {
    pub fn decide(m_value: f64, a_value: f64, spec: &SpaceSpec) -> Self {
        Self {
            m_value,
            a_value,
            member: spec.admits(m_value, a_value),
            spec: spec.clone(),
        }
    }

    /// Re-derives `member` from the stored values and spec.
    pub fn is_consistent(&self) -> bool {
        self.member == self.spec.admits(self.m_value, self.a_value)
    }
}

pub fn membership(
    reference: &ModelSnapshot,
    candidate: &ModelSnapshot,
    spec: &SpaceSpec,
    opts: &CkaOptions,
) -> Result<MembershipVerdict> {
    spec.validate()?;
    let m = m_operator(reference, candidate, &spec.layer_selector, opts)?;
    let a = a_operator(reference, candidate, spec.loss_source)?;
    Ok(MembershipVerdict::decide(m, a, spec))
}

/// One verdict (or error) per candidate, in input order.
pub fn space_filter(
    reference: &ModelSnapshot,
    candidates: &[ModelSnapshot],
    spec: &SpaceSpec,
    opts: &CkaOptions,
) -> Vec<Result<MembershipVerdict>> {
    candidates
        .par_iter()
        .map(|c| membership(reference, c, spec, opts))
        .collect()
}
