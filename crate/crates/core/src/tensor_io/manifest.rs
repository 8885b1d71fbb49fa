//! Run manifests: one JSON document describing every checkpoint of a run.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "run_id": "vit-isic-r03",
//!   "dataset_id": "isic2018-val",
//!   "metadata": { "family": "vit" },
//!   "sample_ids": ["img_0001.jpg", "img_0002.jpg"],
//!   "labels": "labels.npy",
//!   "checkpoints": [
//!     {
//!       "epoch": 0,
//!       "id": "pretrained",
//!       "layers": {
//!         "block11": "e0/block11.npy",
//!         "block11_tokens": { "path": "e0/tokens.npy", "pooling": "raw_tokens" }
//!       },
//!       "predictions": "e0/logits.npy",
//!       "loss": 0.41
//!     }
//!   ]
//! }
//! ```
//!
//! `labels` may also name a `sample_id,label` CSV file.
//!
//! Relative paths resolve against the manifest's directory. `sample_ids`,
//! `labels`, `predictions`, `loss`, `id` and `metadata` are optional; a
//! checkpoint's `predictions` file holds `n × c` logits and needs `labels`.
//! Layer order is preserved and the last listed layer is the "final" layer.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::features::{self, FeatureMatrix, Pooling, PredictionSet};
use crate::calibration::confidence_from_logits;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawLayer {
    Path(String),
    Detailed {
        path: String,
        #[serde(default)]
        pooling: Option<Pooling>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheckpoint {
    epoch: u64,
    #[serde(default)]
    id: Option<String>,
    layers: IndexMap<String, RawLayer>,
    #[serde(default)]
    predictions: Option<String>,
    #[serde(default)]
    loss: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    schema_version: u32,
    run_id: String,
    dataset_id: String,
    #[serde(default)]
    metadata: IndexMap<String, String>,
    #[serde(default)]
    sample_ids: Option<Vec<String>>,
    #[serde(default)]
    labels: Option<String>,
    checkpoints: Vec<RawCheckpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEntry {
    pub path: PathBuf,
    /// Declared pooling; `None` means "infer from the array rank".
    pub pooling: Option<Pooling>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointEntry {
    pub epoch: u64,
    pub id: String,
    pub layers: IndexMap<String, LayerEntry>,
    pub predictions: Option<PathBuf>,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset_id: String,
    pub metadata: IndexMap<String, String>,
    pub sample_ids: Option<Vec<String>>,
    pub labels: Option<PathBuf>,
    pub checkpoints: Vec<CheckpointEntry>,
}

impl RunManifest {
    /// Parses and structurally validates a manifest without touching the
    /// filesystem. Relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawManifest =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        if raw.checkpoints.is_empty() {
            return Err(Error::Parse("manifest lists no checkpoints".into()));
        }
        if let Some(ids) = &raw.sample_ids {
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(Error::Parse(format!("duplicate sample id {dup:?}")));
            }
        }
        let resolve = |p: &str| base_dir.join(p);

        let mut expected: Option<Vec<String>> = None;
        let mut previous: Option<u64> = None;
        let mut checkpoints = Vec::with_capacity(raw.checkpoints.len());
        for ck in raw.checkpoints {
            if let Some(prev) = previous {
                if ck.epoch <= prev {
                    return Err(Error::NonMonotoneEpochs {
                        previous: prev,
                        next: ck.epoch,
                    });
                }
            }
            previous = Some(ck.epoch);
            if ck.layers.is_empty() {
                return Err(Error::Parse(format!("epoch {} lists no layers", ck.epoch)));
            }
            let mut names: Vec<String> = ck.layers.keys().cloned().collect();
            names.sort();
            match &expected {
                None => expected = Some(names),
                Some(exp) if *exp != names => {
                    return Err(Error::InconsistentLayers {
                        epoch: ck.epoch,
                        expected: exp.clone(),
                        found: names,
                    });
                }
                Some(_) => {}
            }
            if ck.predictions.is_some() && raw.labels.is_none() {
                return Err(Error::Parse(format!(
                    "epoch {} has predictions but the manifest has no labels",
                    ck.epoch
                )));
            }
            if let Some(loss) = ck.loss {
                if !loss.is_finite() || loss < 0.0 {
                    return Err(Error::Parse(format!(
                        "epoch {}: loss must be finite and non-negative",
                        ck.epoch
                    )));
                }
            }
            let layers = ck
                .layers
                .into_iter()
                .map(|(name, layer)| {
                    let entry = match layer {
                        RawLayer::Path(p) => LayerEntry {
                            path: resolve(&p),
                            pooling: None,
                        },
                        RawLayer::Detailed { path, pooling } => LayerEntry {
                            path: resolve(&path),
                            pooling,
                        },
                    };
                    (name, entry)
                })
                .collect();
            checkpoints.push(CheckpointEntry {
                epoch: ck.epoch,
                id: ck.id.unwrap_or_else(|| format!("epoch-{}", ck.epoch)),
                layers,
                predictions: ck.predictions.as_deref().map(resolve),
                loss: ck.loss,
            });
        }

        Ok(Self {
            run_id: raw.run_id,
            dataset_id: raw.dataset_id,
            metadata: raw.metadata,
            sample_ids: raw.sample_ids,
            labels: raw.labels.as_deref().map(resolve),
            checkpoints,
        })
    }

    /// Layer ids in manifest order.
    pub fn layer_ids(&self) -> Vec<String> {
        self.checkpoints[0].layers.keys().cloned().collect()
    }

    pub fn referenced_files(&self) -> impl Iterator<Item = &Path> {
        self.labels.iter().map(PathBuf::as_path).chain(
            self.checkpoints.iter().flat_map(|ck| {
                ck.layers
                    .values()
                    .map(|l| l.path.as_path())
                    .chain(ck.predictions.iter().map(PathBuf::as_path))
            }),
        )
    }

    pub fn checkpoint(&self, epoch: u64) -> Result<&CheckpointEntry> {
        self.checkpoints
            .iter()
            .find(|c| c.epoch == epoch)
            .ok_or_else(|| Error::InvalidArgument(format!("no checkpoint for epoch {epoch}")))
    }

    pub fn last_checkpoint(&self) -> &CheckpointEntry {
        self.checkpoints.last().unwrap()
    }

    /// Loads one layer of one checkpoint, attaching ids and pooling.
    pub fn load_layer(&self, ck: &CheckpointEntry, layer_id: &str) -> Result<FeatureMatrix> {
        let entry = ck
            .layers
            .get(layer_id)
            .ok_or_else(|| Error::LayerMissing(layer_id.to_owned()))?;
        let mut fm = features::read_array(&entry.path)?
            .with_layer(layer_id)
            .with_checkpoint(ck.id.clone());
        if let Some(p) = entry.pooling {
            fm = fm.with_pooling(p)?;
        }
        if let Some(ids) = &self.sample_ids {
            fm = fm.with_sample_ids(ids.clone())?;
        }
        Ok(fm)
    }

    /// Labels from either a 1-D NPY file or a `sample_id,label` CSV. CSV rows
    /// are matched to `sample_ids` when the manifest lists them and taken in
    /// file order otherwise.
    pub fn load_labels(&self) -> Result<Option<Vec<usize>>> {
        let Some(path) = self.labels.as_deref() else {
            return Ok(None);
        };
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            return features::read_labels(path).map(Some);
        }
        let rows = features::read_labels_csv(path)?;
        let Some(ids) = &self.sample_ids else {
            return Ok(Some(rows.into_iter().map(|(_, l)| l).collect()));
        };
        if rows.len() != ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "labels file has {} rows for {} sample ids",
                rows.len(),
                ids.len()
            )));
        }
        let by_id: std::collections::HashMap<&str, usize> =
            rows.iter().map(|(id, l)| (id.as_str(), *l)).collect();
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidPredictions(format!("no label for sample {id:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Loads the checkpoint's predictions (from logits) if it has any.
    pub fn load_predictions(&self, ck: &CheckpointEntry) -> Result<Option<PredictionSet>> {
        let Some(path) = &ck.predictions else {
            return Ok(None);
        };
        let labels = self
            .load_labels()?
            .ok_or_else(|| Error::Parse("predictions without labels".into()))?;
        let logits = features::read_logits(path)?;
        confidence_from_logits(logits.view(), &labels).map(Some)
    }

    /// Reads every referenced array and checks that sample counts agree.
    pub fn validate_contents(&self) -> Result<ContentSummary> {
        let mut n: Option<usize> = None;
        let mut check_n = |got: usize, what: &str| -> Result<()> {
            match n {
                None => {
                    n = Some(got);
                    Ok(())
                }
                Some(expected) if expected != got => Err(Error::ShapeMismatch(format!(
                    "{what} has {got} samples, expected {expected}"
                ))),
                Some(_) => Ok(()),
            }
        };
        if let Some(ids) = &self.sample_ids {
            check_n(ids.len(), "sample_ids")?;
        }
        let labels = self.load_labels()?;
        if let Some(l) = &labels {
            check_n(l.len(), "labels")?;
        }
        let mut dims: IndexMap<String, usize> = IndexMap::new();
        for ck in &self.checkpoints {
            for layer in ck.layers.keys() {
                let fm = self
                    .load_layer(ck, layer)
                    .map_err(|e| e.at_epoch(ck.epoch))?;
                check_n(fm.n(), &format!("epoch {} layer {layer}", ck.epoch))?;
                match dims.get(layer) {
                    Some(&d) if d != fm.dim() => {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {layer} has d={} at epoch {}, expected {d}",
                            fm.dim(),
                            ck.epoch
                        )));
                    }
                    Some(_) => {}
                    None => {
                        dims.insert(layer.clone(), fm.dim());
                    }
                }
            }
            if let Some(p) = self.load_predictions(ck).map_err(|e| e.at_epoch(ck.epoch))? {
                check_n(p.len(), &format!("epoch {} predictions", ck.epoch))?;
            }
        }
        Ok(ContentSummary {
            n_samples: n.unwrap_or(0),
            n_checkpoints: self.checkpoints.len(),
            layer_dims: dims,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContentSummary {
    pub n_samples: usize,
    pub n_checkpoints: usize,
    pub layer_dims: IndexMap<String, usize>,
}

/// Reads, parses and validates a manifest. Every referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        ));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let manifest = RunManifest::parse(&text, base)?;
    if let Some(missing) = manifest.referenced_files().find(|p| !p.is_file()) {
        return Err(Error::MissingFile(missing.to_path_buf()));
    }
    Ok(manifest)
}
