use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::FeatureMatrix;

/// Upper bound on the number of points used by the median bandwidth heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 2048;

pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

/// Kernel used to build Gram matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kernel {
    #[default]
    Linear,
    /// Gaussian kernel `exp(-‖x−y‖² / (2σ²))`. `bandwidth = None` selects σ by the
    /// median pairwise distance.
    Rbf { bandwidth: Option<f64> },
}

impl Kernel {
    pub fn rbf() -> Self {
        Kernel::Rbf { bandwidth: None }
    }
}

/// Kernel with every parameter fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelKind {
    Linear,
    Rbf { bandwidth: f64 },
    /// Output of [`center`](super::center); no longer a raw kernel.
    Centered,
}

/// A symmetric `n × n` kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    kind: KernelKind,
}

impl KernelMatrix {
    /// Wraps a matrix after checking squareness, finiteness and symmetry
    /// (within 1e-12 relative to the largest entry).
    pub fn new(values: Array2<f64>, kind: KernelKind) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::ShapeMismatch(format!("kernel matrix is {r}×{c}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite kernel entry".into()));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in (i + 1)..r {
                if (values[[i, j]] - values[[j, i]]).abs() > tol {
                    return Err(Error::ShapeMismatch(format!(
                        "kernel matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values, kind })
    }

    pub(crate) fn new_unchecked(values: Array2<f64>, kind: KernelKind) -> Self {
        Self { values, kind }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub(crate) fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance over at most [`MEDIAN_SUBSAMPLE`] rows,
/// chosen with a seeded generator when there are more.
pub fn median_bandwidth(x: ArrayView2<f64>, seed: u64) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let rows: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            dists.push(sq_dist(x.row(i), x.row(j)).sqrt());
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median <= 0.0 {
        return Err(Error::DegenerateInput(
            "median pairwise distance is zero; RBF bandwidth undefined".into(),
        ));
    }
    Ok(median)
}

/// Fixes any data-dependent kernel parameter.
pub fn resolve_kernel(x: ArrayView2<f64>, kernel: Kernel, seed: u64) -> Result<KernelKind> {
    match kernel {
        Kernel::Linear => Ok(KernelKind::Linear),
        Kernel::Rbf { bandwidth: Some(s) } => {
            if s.is_finite() && s > 0.0 {
                Ok(KernelKind::Rbf { bandwidth: s })
            } else {
                Err(Error::InvalidArgument(format!("RBF bandwidth must be positive, got {s}")))
            }
        }
        Kernel::Rbf { bandwidth: None } => Ok(KernelKind::Rbf {
            bandwidth: median_bandwidth(x, seed)?,
        }),
    }
}

/// Gram matrix of the rows of `x` under an already-resolved kernel.
pub fn gram_matrix(x: ArrayView2<f64>, kind: KernelKind) -> KernelMatrix {
    let n = x.nrows();
    let mut k = match kind {
        KernelKind::Linear | KernelKind::Centered => x.dot(&x.t()),
        KernelKind::Rbf { bandwidth } => {
            let denom = 2.0 * bandwidth * bandwidth;
            let mut k = Array2::<f64>::ones((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    k[[i, j]] = (-sq_dist(x.row(i), x.row(j)) / denom).exp();
                }
            }
            k
        }
    };
    for i in 0..n {
        for j in (i + 1)..n {
            k[[j, i]] = k[[i, j]];
        }
    }
    KernelMatrix::new_unchecked(k, kind)
}

/// Gram matrix of `x` using the default bandwidth seed.
pub fn gram(x: &FeatureMatrix, kernel: Kernel) -> Result<KernelMatrix> {
    gram_seeded(x, kernel, DEFAULT_SEED)
}

pub fn gram_seeded(x: &FeatureMatrix, kernel: Kernel, seed: u64) -> Result<KernelMatrix> {
    let m = x.matrix()?;
    if m.nrows() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: m.nrows(),
        });
    }
    let kind = resolve_kernel(m, kernel, seed)?;
    Ok(gram_matrix(m, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_identity() {
        let x = FeatureMatrix::new(Array2::eye(2)).unwrap();
        let k = gram(&x, Kernel::Linear).unwrap();
        assert_eq!(k.values(), Array2::<f64>::eye(2));
    }

    #[test]
    fn rbf_unit_diagonal() {
        let x = FeatureMatrix::new(array![[0.0, 1.0], [3.0, -2.0], [0.5, 0.5]]).unwrap();
        let k = gram(&x, Kernel::rbf()).unwrap();
        for i in 0..3 {
            assert_eq!(k.values()[[i, i]], 1.0);
        }
        assert!(k.values().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn rbf_constant_rows_are_degenerate() {
        let x = FeatureMatrix::new(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(gram(&x, Kernel::rbf()), Err(Error::DegenerateInput(_))));
        // an explicit bandwidth is fine
        assert!(gram(&x, Kernel::Rbf { bandwidth: Some(1.0) }).is_ok());
    }

    #[test]
    fn median_of_three_points() {
        // distances: 1, 2, 3 → median 2
        let x = array![[0.0], [1.0], [3.0]];
        assert_eq!(median_bandwidth(x.view(), 0).unwrap(), 2.0);
    }

    #[test]
    fn subsampled_median_is_seed_deterministic() {
        let n = MEDIAN_SUBSAMPLE + 50;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j * 13) % 101) as f64);
        let a = median_bandwidth(x.view(), 3).unwrap();
        let b = median_bandwidth(x.view(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_matrix_rejects_asymmetry() {
        assert!(KernelMatrix::new(array![[1.0, 0.5], [0.4, 1.0]], KernelKind::Linear).is_err());
        assert!(KernelMatrix::new(array![[1.0, 0.5]], KernelKind::Linear).is_err());
    }

    #[test]
    fn needs_two_samples() {
        let x = FeatureMatrix::new(array![[1.0, 2.0]]).unwrap();
        assert!(matches!(gram(&x, Kernel::Linear), Err(Error::TooFewSamples { .. })));
    }
}
