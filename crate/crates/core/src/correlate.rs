//! Similarity → metric linear relationships.
//!
//! Per-model (similarity, metric) pairs are noisy; the relationship is read off
//! after snapping each similarity to the nearest point of a uniform grid and
//! averaging the metric per grid point. A line fitted to those averages is then
//! used to project the metric for a new similarity value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedObservations {
    points: Vec<(f64, f64)>,
    metric_name: String,
}

impl PairedObservations {
    pub fn new(points: Vec<(f64, f64)>, metric_name: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (i, &(s, m)) in points.iter().enumerate() {
            if !s.is_finite() || !m.is_finite() {
                return Err(Error::InvalidArgument(format!("point {i} is not finite")));
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidArgument(format!(
                    "point {i}: similarity {s} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            points,
            metric_name: metric_name.into(),
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn metric_name(&self) -> &str {
        &self.metric_name
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutlierRule {
    None,
    /// Drop metrics outside `[Q1 − k·IQR, Q3 + k·IQR]`.
    Iqr { k: f64 },
}

impl Default for OutlierRule {
    fn default() -> Self {
        OutlierRule::Iqr { k: 1.5 }
    }
}

/// Below this many points the IQR rule is not applied.
const IQR_MIN_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierOutcome {
    pub observations: PairedObservations,
    pub removed: usize,
    /// Set when the rule would have removed every point; the input is returned
    /// unchanged in that case.
    pub guard_triggered: bool,
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn remove_outliers(obs: &PairedObservations, rule: OutlierRule) -> OutlierOutcome {
    let unchanged = |guard| OutlierOutcome {
        observations: obs.clone(),
        removed: 0,
        guard_triggered: guard,
    };
    let k = match rule {
        OutlierRule::None => return unchanged(false),
        OutlierRule::Iqr { k } => k,
    };
    if obs.len() < IQR_MIN_POINTS {
        return unchanged(false);
    }
    let mut metrics: Vec<f64> = obs.points.iter().map(|p| p.1).collect();
    metrics.sort_unstable_by(f64::total_cmp);
    let q1 = quantile(&metrics, 0.25);
    let q3 = quantile(&metrics, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - k * iqr, q3 + k * iqr);
    let kept: Vec<(f64, f64)> = obs
        .points
        .iter()
        .copied()
        .filter(|&(_, m)| m >= lo && m <= hi)
        .collect();
    if kept.is_empty() {
        return unchanged(true);
    }
    OutlierOutcome {
        removed: obs.len() - kept.len(),
        observations: PairedObservations {
            points: kept,
            metric_name: obs.metric_name.clone(),
        },
        guard_triggered: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalMean {
    pub center: f64,
    pub mean: f64,
    pub count: usize,
}

/// Grid index of the nearest center `i·width`; exact midpoints go to the lower
/// center.
fn nearest_center(s: f64, width: f64) -> i64 {
    let q = s / width;
    let lower = q.floor();
    if q - lower > 0.5 {
        lower as i64 + 1
    } else {
        lower as i64
    }
}

/// Averages metrics per similarity interval. Empty intervals are omitted;
/// output is sorted by center.
pub fn interval_average(obs: &PairedObservations, width: f64) -> Result<Vec<IntervalMean>> {
    if !(width > 0.0 && width <= 1.0) {
        return Err(Error::BadWidth(width));
    }
    let mut groups: std::collections::BTreeMap<i64, (f64, usize)> = Default::default();
    for &(s, m) in &obs.points {
        let e = groups.entry(nearest_center(s, width)).or_insert((0.0, 0));
        e.0 += m;
        e.1 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(idx, (sum, count))| IntervalMean {
            center: idx as f64 * width,
            mean: sum / count as f64,
            count,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
}

/// Ordinary least squares line and Pearson correlation.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    let weights = vec![1.0; points.len()];
    fit_line_weighted(points, &weights)
}

/// Weighted least squares; the correlation is the matching weighted Pearson r.
pub fn fit_line_weighted(points: &[(f64, f64)], weights: &[f64]) -> Result<LineFit> {
    if points.len() != weights.len() {
        return Err(Error::InvalidArgument("one weight per point required".into()));
    }
    if points.len() < 2 {
        return Err(Error::DegenerateX);
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    let w_sum: f64 = weights.iter().sum();
    let mx = points.iter().zip(weights).map(|(p, w)| w * p.0).sum::<f64>() / w_sum;
    let my = points.iter().zip(weights).map(|(p, w)| w * p.1).sum::<f64>() / w_sum;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let (mut x2, mut y2) = (0.0, 0.0);
    for (&(x, y), &w) in points.iter().zip(weights) {
        let (dx, dy) = (x - mx, y - my);
        sxx += w * dx * dx;
        syy += w * dy * dy;
        sxy += w * dx * dy;
        x2 += w * x * x;
        y2 += w * y * y;
    }
    // variances this far below the raw second moment are rounding noise
    if sxx <= 1e-20 * x2 {
        return Err(Error::DegenerateX);
    }
    if syy <= 1e-20 * y2 {
        return Err(Error::DegenerateY);
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        pearson_r: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    /// Fit the per-interval means.
    #[default]
    Intervals,
    /// Fit the individual points.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelateOptions {
    pub width: f64,
    pub outliers: OutlierRule,
    pub fit_on: FitTarget,
    /// Weight interval means by their counts.
    pub weighted: bool,
}

impl Default for CorrelateOptions {
    fn default() -> Self {
        Self {
            width: 0.01,
            outliers: OutlierRule::default(),
            fit_on: FitTarget::Intervals,
            weighted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationFit {
    pub metric_name: String,
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    pub interval_width: f64,
    pub interval_means: Vec<IntervalMean>,
    pub n_outliers_removed: usize,
    pub n_points: usize,
    pub fit_on: FitTarget,
    pub weighted: bool,
    /// Smallest and largest x the line was fitted on.
    pub fitted_range: (f64, f64),
    pub warnings: Vec<String>,
}

impl CorrelationFit {
    pub fn line(&self) -> LineFit {
        LineFit {
            slope: self.slope,
            intercept: self.intercept,
            pearson_r: self.pearson_r,
        }
    }
}

/// Outlier removal, interval averaging and line fit in one step.
pub fn correlate(obs: &PairedObservations, opts: &CorrelateOptions) -> Result<CorrelationFit> {
    let outcome = remove_outliers(obs, opts.outliers);
    let mut warnings = Vec::new();
    if outcome.guard_triggered {
        warnings.push("outlier rule would remove every point; kept all points".to_owned());
    }
    let kept = &outcome.observations;
    let intervals = interval_average(kept, opts.width)?;
    let (points, weights): (Vec<(f64, f64)>, Vec<f64>) = match opts.fit_on {
        FitTarget::Intervals => intervals
            .iter()
            .map(|iv| {
                let w = if opts.weighted { iv.count as f64 } else { 1.0 };
                ((iv.center, iv.mean), w)
            })
            .unzip(),
        FitTarget::Raw => kept.points.iter().map(|&p| (p, 1.0)).unzip(),
    };
    let line = fit_line_weighted(&points, &weights)?;
    let xs = points.iter().map(|p| p.0);
    let fitted_range = (
        xs.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(CorrelationFit {
        metric_name: obs.metric_name.clone(),
        slope: line.slope,
        intercept: line.intercept,
        pearson_r: line.pearson_r,
        interval_width: opts.width,
        interval_means: intervals,
        n_outliers_removed: outcome.removed,
        n_points: kept.len(),
        fit_on: opts.fit_on,
        weighted: opts.weighted,
        fitted_range,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Projection {
    pub similarity: f64,
    pub value: f64,
    /// The similarity lies outside the range the line was fitted on.
    pub extrapolated: bool,
}

pub fn project_metric(fit: &CorrelationFit, similarity: f64) -> Projection {
    let (lo, hi) = fit.fitted_range;
    Projection {
        similarity,
        value: fit.slope * similarity + fit.intercept,
        extrapolated: similarity < lo || similarity > hi,
    }
}
