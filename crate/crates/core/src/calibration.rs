//! Expected calibration error and reliability-diagram data.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::PredictionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    /// `k` bins of equal width over `range`; half-open except the top bin.
    #[default]
    EqualWidth,
    /// `k` bins holding (as nearly as possible) equal sample counts.
    EqualMass,
}

impl std::str::FromStr for BinScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal_width" => Ok(BinScheme::EqualWidth),
            "equal_mass" => Ok(BinScheme::EqualMass),
            other => Err(Error::InvalidArgument(format!("unknown binning scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub k_bins: usize,
    pub scheme: BinScheme,
    /// Confidence range covered by equal-width bins; values outside it fall
    /// into the nearest end bin. Ignored by equal-mass binning.
    pub range: (f64, f64),
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            k_bins: 15,
            scheme: BinScheme::EqualWidth,
            range: (0.0, 1.0),
        }
    }
}

impl BinningSpec {
    pub fn equal_width(k_bins: usize) -> Self {
        Self {
            k_bins,
            ..Self::default()
        }
    }

    pub fn equal_mass(k_bins: usize) -> Self {
        Self {
            k_bins,
            scheme: BinScheme::EqualMass,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range;
        if self.k_bins == 0 {
            return Err(Error::InvalidArgument("k_bins must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::InvalidArgument(format!(
                "bin range [{lo}, {hi}] must satisfy 0 ≤ lo < hi ≤ 1"
            )));
        }
        Ok(())
    }

    /// Equal-width bin edges (`k + 1` values).
    pub fn edges(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        let k = self.k_bins as f64;
        (0..=self.k_bins)
            .map(|i| if i == self.k_bins { hi } else { lo + (hi - lo) * (i as f64) / k })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Fraction correct; 0 for an empty bin.
    pub accuracy: f64,
    /// Mean confidence; 0 for an empty bin.
    pub confidence: f64,
}

impl ReliabilityBin {
    /// This bin's `|β|·|Acc − Conf|` term.
    pub fn weighted_gap(&self) -> f64 {
        self.count as f64 * (self.accuracy - self.confidence).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    pub n: usize,
    pub spec: BinningSpec,
}

impl ReliabilityReport {
    /// Recomputes ECE from the per-bin fields.
    pub fn ece_from_bins(&self) -> f64 {
        self.bins.iter().map(ReliabilityBin::weighted_gap).sum::<f64>() / self.n as f64
    }

    /// Largest per-bin gap over non-empty bins.
    pub fn max_gap(&self) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| (b.accuracy - b.confidence).abs())
            .fold(0.0, f64::max)
    }
}

fn width_bin(c: f64, edges: &[f64]) -> usize {
    let k = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[k]);
    if c <= lo {
        return 0;
    }
    if c >= hi {
        return k - 1;
    }
    let mut idx = (((c - lo) / (hi - lo)) * k as f64).floor() as usize;
    idx = idx.min(k - 1);
    while idx > 0 && c < edges[idx] {
        idx -= 1;
    }
    while idx + 1 < k && c >= edges[idx + 1] {
        idx += 1;
    }
    idx
}

fn summarize(p: &PredictionSet, members: &[usize], lower: f64, upper: f64) -> ReliabilityBin {
    let count = members.len();
    if count == 0 {
        return ReliabilityBin {
            lower,
            upper,
            count,
            accuracy: 0.0,
            confidence: 0.0,
        };
    }
    let correct = members.iter().filter(|&&i| p.is_correct(i)).count();
    let conf_sum: f64 = members.iter().map(|&i| p.confidence()[i]).sum();
    ReliabilityBin {
        lower,
        upper,
        count,
        accuracy: correct as f64 / count as f64,
        confidence: conf_sum / count as f64,
    }
}

/// Expected calibration error with per-bin reliability data.
pub fn ece(p: &PredictionSet, spec: &BinningSpec) -> Result<ReliabilityReport> {
    spec.validate()?;
    let n = p.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let k = spec.k_bins;
    let bins = match spec.scheme {
        BinScheme::EqualWidth => {
            let edges = spec.edges();
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &c) in p.confidence().iter().enumerate() {
                members[width_bin(c, &edges)].push(i);
            }
            members
                .iter()
                .enumerate()
                .map(|(b, m)| summarize(p, m, edges[b], edges[b + 1]))
                .collect::<Vec<_>>()
        }
        BinScheme::EqualMass => {
            let mut order: Vec<usize> = (0..n).collect();
            let conf = p.confidence();
            order.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]).then(a.cmp(&b)));
            let mut prev_upper = spec.range.0.min(conf[order[0]]);
            (0..k)
                .map(|b| {
                    let members = &order[b * n / k..(b + 1) * n / k];
                    let (lower, upper) = match (members.first(), members.last()) {
                        (Some(&f), Some(&l)) => (conf[f], conf[l]),
                        _ => (prev_upper, prev_upper),
                    };
                    prev_upper = upper;
                    summarize(p, members, lower, upper)
                })
                .collect()
        }
    };
    let mut report = ReliabilityReport {
        bins,
        ece: 0.0,
        n,
        spec: *spec,
    };
    report.ece = report.ece_from_bins();
    Ok(report)
}

/// Top-1 predictions from logits: confidence is the largest softmax
/// probability, argmax ties go to the lowest class index.
pub fn confidence_from_logits(logits: ArrayView2<f64>, labels: &[usize]) -> Result<PredictionSet> {
    let (n, c) = logits.dim();
    if c < 2 {
        return Err(Error::InvalidArgument(format!("logits need at least 2 classes, got {c}")));
    }
    if labels.len() != n {
        return Err(Error::InvalidPredictions(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    let mut confidence = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for (row_idx, row) in logits.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogits { row: row_idx });
        }
        let (arg, max) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        // the argmax term is exp(0) = 1
        let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        confidence.push(1.0 / denom);
        predicted.push(arg);
    }
    PredictionSet::new(confidence, predicted, labels.to_vec(), c)
}

/// Softmax of each row, with max subtraction.
pub fn softmax_rows(logits: ArrayView2<f64>) -> ndarray::Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}
