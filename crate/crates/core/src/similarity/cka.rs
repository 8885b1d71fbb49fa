use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::hsic::{hsic_biased_unchecked, hsic_unbiased_unchecked};
use super::kernel::{gram_matrix, resolve_kernel, Kernel, KernelKind, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::tensor_io::FeatureMatrix;

/// Above this many samples a full `n × n` Gram matrix is considered too large.
pub const GRAM_BUDGET_SAMPLES: usize = 4096;

/// Denominator HSICs at or below this fraction of `‖K‖²_F` count as zero.
const ZERO_VARIANCE_RTOL: f64 = 1e-15;

/// Biased CKA values this far outside `[0, 1]` are clamped silently.
const CLAMP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Biased,
    Unbiased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CkaOptions {
    pub kernel: Kernel,
    pub estimator: Estimator,
    /// Batch size for minibatch accumulation; `None` is full batch.
    pub minibatch: Option<usize>,
    /// Seed for the RBF bandwidth subsample.
    pub seed: u64,
}

impl Default for CkaOptions {
    fn default() -> Self {
        Self {
            kernel: Kernel::Linear,
            estimator: Estimator::Biased,
            minibatch: None,
            seed: DEFAULT_SEED,
        }
    }
}

impl CkaOptions {
    pub fn unbiased() -> Self {
        Self {
            estimator: Estimator::Unbiased,
            ..Self::default()
        }
    }

    pub fn with_minibatch(mut self, batch: usize) -> Self {
        self.minibatch = Some(batch);
        self
    }

    fn needs_gram(&self) -> bool {
        !(self.kernel == Kernel::Linear && self.estimator == Estimator::Biased)
    }

    /// Switches to unbiased minibatch estimation when a full-batch run would
    /// materialise a Gram matrix larger than [`GRAM_BUDGET_SAMPLES`]. Returns
    /// a warning describing the switch, if one happened.
    pub fn for_samples(self, n: usize) -> (Self, Option<String>) {
        if self.minibatch.is_none() && self.needs_gram() && n > GRAM_BUDGET_SAMPLES {
            let opts = Self {
                estimator: Estimator::Unbiased,
                minibatch: Some(GRAM_BUDGET_SAMPLES),
                ..self
            };
            let msg = format!(
                "n={n} exceeds the Gram budget of {GRAM_BUDGET_SAMPLES}; using unbiased minibatch CKA with batch size {GRAM_BUDGET_SAMPLES}"
            );
            (opts, Some(msg))
        } else {
            (self, None)
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.estimator == Estimator::Unbiased && n < 4 {
            return Err(Error::TooFewSamples { needed: 4, got: n });
        }
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        if let Some(b) = self.minibatch {
            if b < 4 {
                return Err(Error::InvalidArgument(format!(
                    "minibatch size must be at least 4, got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// A CKA value with the bookkeeping behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CkaReport {
    /// Value clamped to `[0, 1]`.
    pub value: f64,
    /// Value before clamping.
    pub raw: f64,
    pub batches: usize,
    /// True when the unbiased estimator landed outside `[0, 1]` by more than
    /// the rounding tolerance.
    pub clamped: bool,
}

/// Contiguous batch boundaries; a trailing remainder shorter than 4 samples is
/// folded into the previous batch.
pub(crate) fn batch_ranges(n: usize, batch: Option<usize>) -> Vec<std::ops::Range<usize>> {
    let b = match batch {
        Some(b) if b < n => b,
        _ => return std::iter::once(0..n).collect(),
    };
    let mut ranges: Vec<_> = (0..n).step_by(b).map(|s| s..(s + b).min(n)).collect();
    if ranges.len() > 1 && ranges.last().unwrap().len() < 4 {
        let tail = ranges.pop().unwrap();
        ranges.last_mut().unwrap().end = tail.end;
    }
    ranges
}

fn centered_columns(x: ArrayView2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).unwrap();
    &x - &mean
}

fn frobenius_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

struct HsicTerms {
    xy: f64,
    xx: f64,
    yy: f64,
    scale_x: f64,
    scale_y: f64,
}

/// Biased linear HSIC terms in feature space: `tr(KHLH) = ‖X̄ᵀȲ‖²_F` with
/// column-centred `X̄`, `Ȳ`. Avoids the `n × n` Gram matrices entirely.
fn linear_feature_terms(x: ArrayView2<f64>, y: ArrayView2<f64>) -> HsicTerms {
    let xc = centered_columns(x);
    let yc = centered_columns(y);
    let xy = frobenius_sq(&xc.t().dot(&yc));
    let xx = frobenius_sq(&xc.t().dot(&xc));
    let yy = frobenius_sq(&yc.t().dot(&yc));
    HsicTerms {
        xy,
        xx,
        yy,
        scale_x: frobenius_sq(&x.t().dot(&x)),
        scale_y: frobenius_sq(&y.t().dot(&y)),
    }
}

fn gram_terms(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    kx: KernelKind,
    ky: KernelKind,
    estimator: Estimator,
) -> HsicTerms {
    let k = gram_matrix(x, kx);
    let l = gram_matrix(y, ky);
    let hsic = match estimator {
        Estimator::Biased => hsic_biased_unchecked,
        Estimator::Unbiased => hsic_unbiased_unchecked,
    };
    HsicTerms {
        xy: hsic(&k, &l),
        xx: hsic(&k, &k),
        yy: hsic(&l, &l),
        scale_x: k.frobenius_sq(),
        scale_y: l.frobenius_sq(),
    }
}

/// CKA between two representations of the same samples.
pub fn cka(x: &FeatureMatrix, y: &FeatureMatrix, opts: &CkaOptions) -> Result<f64> {
    cka_report(x, y, opts).map(|r| r.value)
}

pub fn cka_report(x: &FeatureMatrix, y: &FeatureMatrix, opts: &CkaOptions) -> Result<CkaReport> {
    if x.n() != y.n() || x.sample_ids() != y.sample_ids() {
        return Err(Error::SampleMismatch);
    }
    cka_matrices(x.matrix()?, y.matrix()?, opts)
}

/// CKA on raw `n × d` matrices (rows are samples, already aligned).
pub fn cka_matrices(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    opts: &CkaOptions,
) -> Result<CkaReport> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::SampleMismatch);
    }
    opts.validate(n)?;

    let ranges = batch_ranges(n, opts.minibatch);
    let terms: Vec<HsicTerms> = if ranges.len() == 1 && !opts.needs_gram() {
        vec![linear_feature_terms(x, y)]
    } else {
        // bandwidths are fixed once over the full sample so every batch shares them
        let kx = resolve_kernel(x, opts.kernel, opts.seed)?;
        let ky = resolve_kernel(y, opts.kernel, opts.seed)?;
        ranges
            .iter()
            .map(|r| {
                let xs = x.slice(ndarray::s![r.clone(), ..]);
                let ys = y.slice(ndarray::s![r.clone(), ..]);
                gram_terms(xs, ys, kx, ky, opts.estimator)
            })
            .collect()
    };

    let m = terms.len() as f64;
    let mean = |f: fn(&HsicTerms) -> f64| terms.iter().map(f).sum::<f64>() / m;
    let xy = mean(|t| t.xy);
    let xx = mean(|t| t.xx);
    let yy = mean(|t| t.yy);
    let scale_x = mean(|t| t.scale_x);
    let scale_y = mean(|t| t.scale_y);
    if xx <= ZERO_VARIANCE_RTOL * scale_x || yy <= ZERO_VARIANCE_RTOL * scale_y {
        return Err(Error::ZeroVariance);
    }

    let raw = xy / (xx * yy).sqrt();
    if !raw.is_finite() {
        return Err(Error::NumericalInconsistency(format!("CKA evaluated to {raw}")));
    }
    let in_tolerance = (-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&raw);
    if !in_tolerance && opts.estimator == Estimator::Biased {
        return Err(Error::NumericalInconsistency(format!(
            "biased CKA {raw} lies outside [0, 1]"
        )));
    }
    Ok(CkaReport {
        value: raw.clamp(0.0, 1.0),
        raw,
        batches: terms.len(),
        clamped: !in_tolerance,
    })
}
