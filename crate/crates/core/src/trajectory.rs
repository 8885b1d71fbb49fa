//! Similarity trajectories across epochs and runs, their per-epoch summaries,
//! final-epoch distributions, and the CSV record format that ties them to the
//! correlation step.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{ece, BinningSpec};
use crate::error::{Error, Result};
use crate::numfmt::g17;
use crate::similarity::CkaOptions;
use crate::simspace::{layer_similarities, LayerSelector, ModelSnapshot};
use crate::tensor_io::{Pooling, RunManifest};

/// Layer id used for records produced by [`LayerSelector::Mean`].
pub const MEAN_LAYER: &str = "mean";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityRecord {
    pub run_id: String,
    pub epoch: u64,
    pub layer_id: String,
    pub cka: f64,
    pub accuracy: Option<f64>,
    pub ece: Option<f64>,
    /// Additional named metrics (for example k-NN accuracy merged in from a
    /// separate evaluation).
    pub extra: BTreeMap<String, f64>,
}

impl SimilarityRecord {
    pub fn new(run_id: impl Into<String>, epoch: u64, layer_id: impl Into<String>, cka: f64) -> Self {
        Self {
            run_id: run_id.into(),
            epoch,
            layer_id: layer_id.into(),
            cka,
            accuracy: None,
            ece: None,
            extra: BTreeMap::new(),
        }
    }

    /// Looks up a metric column by name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "cka" => Some(self.cka),
            "accuracy" => self.accuracy,
            "ece" => self.ece,
            other => self.extra.get(other).copied(),
        }
    }
}

/// Records for one run whose checkpoints are already in memory.
pub fn trajectory_from_snapshots(
    reference: &ModelSnapshot,
    run_id: &str,
    checkpoints: &[(u64, ModelSnapshot)],
    selector: &LayerSelector,
    opts: &CkaOptions,
) -> Result<Vec<SimilarityRecord>> {
    let per_epoch: Vec<Result<Vec<SimilarityRecord>>> = checkpoints
        .par_iter()
        .map(|(epoch, snap)| {
            epoch_records(reference, run_id, *epoch, snap, selector, opts)
                .map_err(|e| e.at_epoch(*epoch))
        })
        .collect();
    let mut out = Vec::new();
    for r in per_epoch {
        out.extend(r?);
    }
    Ok(out)
}

fn epoch_records(
    reference: &ModelSnapshot,
    run_id: &str,
    epoch: u64,
    snap: &ModelSnapshot,
    selector: &LayerSelector,
    opts: &CkaOptions,
) -> Result<Vec<SimilarityRecord>> {
    let values = layer_similarities(reference, snap, selector, opts)?;
    let values = if *selector == LayerSelector::Mean {
        let mean = values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64;
        vec![(MEAN_LAYER.to_owned(), mean)]
    } else {
        values
    };
    let (accuracy, calib) = match snap.predictions() {
        Some(p) => (Some(p.accuracy()), Some(ece(p, &BinningSpec::default())?.ece)),
        None => (None, None),
    };
    Ok(values
        .into_iter()
        .map(|(layer, cka)| SimilarityRecord {
            accuracy,
            ece: calib,
            ..SimilarityRecord::new(run_id, epoch, layer, cka)
        })
        .collect())
}

/// Loads every checkpoint of `run` and measures its similarity to `reference`.
pub fn compute_trajectory(
    reference: &ModelSnapshot,
    run: &RunManifest,
    selector: &LayerSelector,
    opts: &CkaOptions,
    pooling: Pooling,
) -> Result<Vec<SimilarityRecord>> {
    let per_epoch: Vec<Result<Vec<SimilarityRecord>>> = run
        .checkpoints
        .par_iter()
        .map(|ck| {
            ModelSnapshot::load(run, ck, pooling)
                .and_then(|snap| {
                    epoch_records(reference, &run.run_id, ck.epoch, &snap, selector, opts)
                })
                .map_err(|e| e.at_epoch(ck.epoch))
        })
        .collect();
    let mut out = Vec::new();
    for r in per_epoch {
        out.extend(r?);
    }
    Ok(out)
}

fn check_unique(records: &[SimilarityRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert((r.run_id.as_str(), r.epoch, r.layer_id.as_str())) {
            return Err(Error::DuplicateRecord {
                run_id: r.run_id.clone(),
                epoch: r.epoch,
                layer_id: r.layer_id.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    /// Divide by the number of runs.
    #[default]
    Population,
    /// Divide by runs − 1 (0 for a single run).
    Sample,
}

impl std::str::FromStr for Spread {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "population" => Ok(Spread::Population),
            "sample" => Ok(Spread::Sample),
            other => Err(Error::InvalidArgument(format!("unknown spread {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub accuracy_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerTrajectory {
    pub layer_id: String,
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub spread: Spread,
    pub layers: Vec<LayerTrajectory>,
}

/// Per-epoch statistics of CKA across runs, separately per layer.
///
/// Values are reduced in run-id order, so the result does not depend on the
/// order of `records`.
pub fn summarize(records: &[SimilarityRecord], spread: Spread) -> Result<TrajectorySummary> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    check_unique(records)?;
    let mut groups: BTreeMap<&str, BTreeMap<u64, Vec<&SimilarityRecord>>> = BTreeMap::new();
    for r in records {
        groups
            .entry(&r.layer_id)
            .or_default()
            .entry(r.epoch)
            .or_default()
            .push(r);
    }
    let layers = groups
        .into_iter()
        .map(|(layer, epochs)| LayerTrajectory {
            layer_id: layer.to_owned(),
            epochs: epochs
                .into_iter()
                .map(|(epoch, mut rs)| {
                    rs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
                    epoch_stats(epoch, &rs, spread)
                })
                .collect(),
        })
        .collect();
    Ok(TrajectorySummary { spread, layers })
}

fn epoch_stats(epoch: u64, rs: &[&SimilarityRecord], spread: Spread) -> EpochStats {
    let n = rs.len() as f64;
    let mean = rs.iter().map(|r| r.cka).sum::<f64>() / n;
    let ss: f64 = rs.iter().map(|r| (r.cka - mean).powi(2)).sum();
    let divisor = match spread {
        Spread::Population => n,
        Spread::Sample => (n - 1.0).max(1.0),
    };
    let accs: Vec<f64> = rs.iter().filter_map(|r| r.accuracy).collect();
    EpochStats {
        epoch,
        runs: rs.len(),
        mean,
        std: (ss / divisor).sqrt(),
        min: rs.iter().map(|r| r.cka).fold(f64::INFINITY, f64::min),
        max: rs.iter().map(|r| r.cka).fold(f64::NEG_INFINITY, f64::max),
        accuracy_mean: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalPoint {
    pub run_id: String,
    pub layer_id: String,
    pub epoch: u64,
    pub cka: f64,
    pub accuracy: Option<f64>,
}

/// The last-epoch record of every run (and layer), sorted by run id then layer.
pub fn final_distribution(records: &[SimilarityRecord]) -> Result<Vec<FinalPoint>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    check_unique(records)?;
    let mut last: BTreeMap<(&str, &str), &SimilarityRecord> = BTreeMap::new();
    for r in records {
        let slot = last.entry((&r.run_id, &r.layer_id)).or_insert(r);
        if r.epoch > slot.epoch {
            *slot = r;
        }
    }
    Ok(last
        .into_values()
        .map(|r| FinalPoint {
            run_id: r.run_id.clone(),
            layer_id: r.layer_id.clone(),
            epoch: r.epoch,
            cka: r.cka,
            accuracy: r.accuracy,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Fixed-width histogram over `[0, 1]`; bins are half-open except the last.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let mut idx = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        while idx > 0 && v < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < bins && v >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: edges[i],
            upper: edges[i + 1],
            count,
        })
        .collect()
}

const FIXED_COLUMNS: [&str; 6] = ["run_id", "epoch", "layer_id", "cka", "accuracy", "ece"];

fn opt(v: Option<f64>) -> String {
    v.map(g17).unwrap_or_default()
}

/// Writes records as CSV: the fixed columns followed by every extra metric
/// name (sorted). Missing values are empty cells.
pub fn write_records_csv<W: Write>(records: &[SimilarityRecord], out: W) -> Result<()> {
    let extra: Vec<&String> = records
        .iter()
        .flat_map(|r| r.extra.keys())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| Error::Parse(e.to_string());
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(extra.iter().map(|s| s.as_str()));
    w.write_record(&header).map_err(io_err)?;
    for r in records {
        let mut row = vec![
            r.run_id.clone(),
            r.epoch.to_string(),
            r.layer_id.clone(),
            g17(r.cka),
            opt(r.accuracy),
            opt(r.ece),
        ];
        row.extend(extra.iter().map(|k| opt(r.extra.get(*k).copied())));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

fn parse_unit(field: &str, column: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: {column} = {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: {column} is not finite")));
    }
    Ok(v)
}

/// Parses the CSV written by [`write_records_csv`]. Extra columns become
/// entries of [`SimilarityRecord::extra`].
pub fn parse_records_csv(bytes: &[u8]) -> Result<Vec<SimilarityRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(run), Some(epoch), Some(layer), Some(cka)) =
        (col("run_id"), col("epoch"), col("layer_id"), col("cka"))
    else {
        return Err(Error::Parse(
            "records need run_id, epoch, layer_id and cka columns".into(),
        ));
    };
    let mut seen = HashSet::new();
    if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(Error::Parse(format!("duplicate column {dup:?}")));
    }
    let acc = col("accuracy");
    let ece_col = col("ece");
    let fixed = [Some(run), Some(epoch), Some(layer), Some(cka), acc, ece_col];

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        if row.len() != header.len() {
            return Err(Error::Parse(format!("line {line}: wrong number of fields")));
        }
        let epoch_v: u64 = row[epoch]
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad epoch {:?}", &row[epoch])))?;
        let cka_v = parse_unit(&row[cka], "cka", line)?;
        if !(0.0..=1.0).contains(&cka_v) {
            return Err(Error::Parse(format!("line {line}: cka {cka_v} outside [0, 1]")));
        }
        let optional = |c: Option<usize>, name: &str| -> Result<Option<f64>> {
            match c.map(|c| &row[c]) {
                None | Some("") => Ok(None),
                Some(f) => parse_unit(f, name, line).map(Some),
            }
        };
        let mut rec = SimilarityRecord::new(&row[run], epoch_v, &row[layer], cka_v);
        rec.accuracy = optional(acc, "accuracy")?;
        rec.ece = optional(ece_col, "ece")?;
        for (c, name) in header.iter().enumerate() {
            if fixed.contains(&Some(c)) || row[c].is_empty() {
                continue;
            }
            rec.extra.insert(name.clone(), parse_unit(&row[c], name, line)?);
        }
        out.push(rec);
    }
    check_unique(&out)?;
    Ok(out)
}
