use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayD, ArrayView2, ArrayView3, Axis, Ix2, Ix3, IxDyn};
use serde::{Deserialize, Serialize};

use super::npy::{self, Dtype};
use crate::error::{Error, Result};

/// How per-token transformer outputs were reduced to one vector per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Token 0 (the classification token).
    Cls,
    /// Mean over tokens 1..t.
    PatchMean,
    /// Unreduced `(n, t, d)` token outputs.
    RawTokens,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Cls => "cls",
            Pooling::PatchMean => "patch_mean",
            Pooling::RawTokens => "raw_tokens",
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(Pooling::Cls),
            "patch_mean" => Ok(Pooling::PatchMean),
            "raw_tokens" => Ok(Pooling::RawTokens),
            other => Err(Error::InvalidArgument(format!("unknown pooling {other:?}"))),
        }
    }
}

/// Per-sample representations of one layer at one checkpoint.
///
/// Pooled features are `n × d`; raw token features are `n × t × d` with the
/// classification token at index 0 of the token axis. Values are finite and held
/// in `f64` regardless of the on-disk precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: ArrayD<f64>,
    pooling: Pooling,
    layer_id: String,
    checkpoint_id: String,
    sample_ids: Vec<String>,
}

fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    match values.into_iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteValue { index }),
        None => Ok(()),
    }
}

impl FeatureMatrix {
    /// Pooled `n × d` features, tagged as CLS-pooled until told otherwise.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidFeatures(format!("empty matrix {n}×{d}")));
        }
        check_finite(data.iter())?;
        Ok(Self {
            data: data.into_dyn(),
            pooling: Pooling::Cls,
            layer_id: String::new(),
            checkpoint_id: String::new(),
            sample_ids: default_ids(n),
        })
    }

    /// Raw `n × t × d` token features.
    pub fn from_tokens(data: Array3<f64>) -> Result<Self> {
        let (n, t, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidFeatures(format!("empty tensor {n}×{t}×{d}")));
        }
        if t < 2 {
            return Err(Error::TooFewTokens(t));
        }
        check_finite(data.iter())?;
        Ok(Self {
            data: data.into_dyn(),
            pooling: Pooling::RawTokens,
            layer_id: String::new(),
            checkpoint_id: String::new(),
            sample_ids: default_ids(n),
        })
    }

    pub fn from_npy(array: npy::NpyArray) -> Result<Self> {
        let shape = array.shape.clone();
        let data = ArrayD::from_shape_vec(IxDyn(&shape), array.data)
            .map_err(|e| Error::InvalidFeatures(e.to_string()))?;
        match shape.len() {
            1 => Self::new(data.into_shape_with_order((shape[0], 1)).unwrap()),
            2 => Self::new(data.into_dimensionality::<Ix2>().unwrap()),
            3 => Self::from_tokens(data.into_dimensionality::<Ix3>().unwrap()),
            k => Err(Error::UnsupportedLayout(format!("{k} dimensions"))),
        }
    }

    pub fn with_layer(mut self, layer_id: impl Into<String>) -> Self {
        self.layer_id = layer_id.into();
        self
    }

    pub fn with_checkpoint(mut self, checkpoint_id: impl Into<String>) -> Self {
        self.checkpoint_id = checkpoint_id.into();
        self
    }

    pub fn with_sample_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(Error::InvalidFeatures(format!(
                "{} sample ids for {} samples",
                ids.len(),
                self.n()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidFeatures(format!("duplicate sample id {dup:?}")));
        }
        self.sample_ids = ids;
        Ok(self)
    }

    /// Relabels the pooling of 2-D features. Raw tokens cannot be relabelled.
    pub fn with_pooling(mut self, pooling: Pooling) -> Result<Self> {
        if (self.pooling == Pooling::RawTokens) != (pooling == Pooling::RawTokens) {
            return Err(Error::WrongPooling(format!(
                "cannot relabel {} features as {pooling}",
                self.pooling
            )));
        }
        self.pooling = pooling;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.data.shape()[0]
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        *self.data.shape().last().unwrap()
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn checkpoint_id(&self) -> &str {
        &self.checkpoint_id
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// The `n × d` matrix; fails for raw token features.
    pub fn matrix(&self) -> Result<ArrayView2<'_, f64>> {
        if self.pooling == Pooling::RawTokens {
            return Err(Error::WrongPooling(
                "raw token features must be pooled first".into(),
            ));
        }
        Ok(self.data.view().into_dimensionality::<Ix2>().unwrap())
    }

    pub fn tokens(&self) -> Result<ArrayView3<'_, f64>> {
        if self.pooling != Pooling::RawTokens {
            return Err(Error::WrongPooling(self.pooling.to_string()));
        }
        Ok(self.data.view().into_dimensionality::<Ix3>().unwrap())
    }

    fn derived(&self, data: Array2<f64>, pooling: Pooling) -> Self {
        Self {
            data: data.into_dyn(),
            pooling,
            layer_id: self.layer_id.clone(),
            checkpoint_id: self.checkpoint_id.clone(),
            sample_ids: self.sample_ids.clone(),
        }
    }
}

/// Splits raw token features into CLS-token features and patch-mean features.
pub fn pool(tokens: &FeatureMatrix) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let view = tokens.tokens()?;
    let t = view.len_of(Axis(1));
    if t < 2 {
        return Err(Error::TooFewTokens(t));
    }
    let cls = view.index_axis(Axis(1), 0).to_owned();
    let patches = view.slice(ndarray::s![.., 1.., ..]);
    let mut mean = patches.sum_axis(Axis(1));
    mean.mapv_inplace(|v| v / (t - 1) as f64);
    Ok((
        tokens.derived(cls, Pooling::Cls),
        tokens.derived(mean, Pooling::PatchMean),
    ))
}

/// Reduces features to a 2-D matrix with the requested pooling. Already-pooled
/// features pass through unchanged.
pub fn pooled(features: &FeatureMatrix, pooling: Pooling) -> Result<FeatureMatrix> {
    if features.pooling() != Pooling::RawTokens {
        return Ok(features.clone());
    }
    let (cls, mean) = pool(features)?;
    match pooling {
        Pooling::Cls => Ok(cls),
        Pooling::PatchMean => Ok(mean),
        Pooling::RawTokens => Err(Error::WrongPooling(
            "a pooled output needs cls or patch_mean".into(),
        )),
    }
}

/// Reads an array file as features. The layer id defaults to the file stem.
pub fn read_array(path: &Path) -> Result<FeatureMatrix> {
    let arr = npy::read(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(FeatureMatrix::from_npy(arr)?.with_layer(stem))
}

pub fn write_array(path: &Path, features: &FeatureMatrix, dtype: Dtype) -> Result<()> {
    let data: Vec<f64> = features.data.iter().copied().collect();
    npy::write(path, features.shape(), &data, dtype)
}

/// Per-sample top-1 predictions with their confidences and true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    confidence: Vec<f64>,
    predicted: Vec<usize>,
    label: Vec<usize>,
    n_classes: usize,
}

impl PredictionSet {
    pub fn new(
        confidence: Vec<f64>,
        predicted: Vec<usize>,
        label: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = confidence.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if predicted.len() != n || label.len() != n {
            return Err(Error::InvalidPredictions(format!(
                "length mismatch: {n} confidences, {} predictions, {} labels",
                predicted.len(),
                label.len()
            )));
        }
        if n_classes == 0 {
            return Err(Error::InvalidPredictions("n_classes must be positive".into()));
        }
        if let Some(i) = confidence
            .iter()
            .position(|c| !c.is_finite() || !(0.0..=1.0).contains(c))
        {
            return Err(Error::InvalidPredictions(format!(
                "confidence[{i}] = {} outside [0, 1]",
                confidence[i]
            )));
        }
        if let Some(i) = predicted
            .iter()
            .chain(label.iter())
            .position(|&c| c >= n_classes)
        {
            return Err(Error::InvalidPredictions(format!(
                "class index at position {} is out of range for {n_classes} classes",
                i % n
            )));
        }
        Ok(Self {
            confidence,
            predicted,
            label,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.confidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty()
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn label(&self) -> &[usize] {
        &self.label
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_correct(&self, i: usize) -> bool {
        self.predicted[i] == self.label[i]
    }

    pub fn accuracy(&self) -> f64 {
        let correct = (0..self.len()).filter(|&i| self.is_correct(i)).count();
        correct as f64 / self.len() as f64
    }

    pub fn error_rate(&self) -> f64 {
        let wrong = (0..self.len()).filter(|&i| !self.is_correct(i)).count();
        wrong as f64 / self.len() as f64
    }
}

/// Reads a 1-D label file; every entry must be a non-negative integer.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let arr = npy::read(path)?;
    labels_from_npy(&arr)
}

pub fn labels_from_npy(arr: &npy::NpyArray) -> Result<Vec<usize>> {
    if arr.shape.len() != 1 {
        return Err(Error::InvalidPredictions(format!(
            "labels must be 1-D, got shape {:?}",
            arr.shape
        )));
    }
    arr.data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidPredictions(format!("label[{i}] = {v} is not a class index")))
            }
        })
        .collect()
}

/// Reads a `sample_id,label` CSV (with header). Sample ids must be unique.
pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, usize)>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(e.to_string()))?;
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.len() != 2 || &header[0] != "sample_id" || &header[1] != "label" {
        return Err(Error::Parse(format!(
            "{}: expected header sample_id,label",
            path.display()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let label: usize = row[1].parse().map_err(|_| {
            Error::InvalidPredictions(format!("line {}: label {:?} is not a class index", i + 2, &row[1]))
        })?;
        if !seen.insert(row[0].to_owned()) {
            return Err(Error::InvalidPredictions(format!("duplicate sample id {:?}", &row[0])));
        }
        out.push((row[0].to_owned(), label));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Reads a 2-D logits file (`n × c`).
pub fn read_logits(path: &Path) -> Result<Array2<f64>> {
    let arr = npy::read(path)?;
    if arr.shape.len() != 2 {
        return Err(Error::InvalidPredictions(format!(
            "logits must be 2-D, got shape {:?}",
            arr.shape
        )));
    }
    Ok(Array2::from_shape_vec((arr.shape[0], arr.shape[1]), arr.data).unwrap())
}
