use ndarray::Array2;

use super::kernel::{KernelKind, KernelMatrix};
use crate::error::{Error, Result};

/// Double-centres `K` (computes `H K H` with `H = I − 𝟙𝟙ᵀ/n`) by subtracting
/// row means and column means and adding back the grand mean.
pub fn center(k: &KernelMatrix) -> KernelMatrix {
    let values = k.values();
    let n = values.nrows();
    let inv_n = 1.0 / n as f64;
    let row_means: Vec<f64> = values.rows().into_iter().map(|r| r.sum() * inv_n).collect();
    let col_means: Vec<f64> = values
        .columns()
        .into_iter()
        .map(|c| c.sum() * inv_n)
        .collect();
    let grand = row_means.iter().sum::<f64>() * inv_n;
    let out = Array2::from_shape_fn((n, n), |(i, j)| {
        values[[i, j]] - row_means[i] - col_means[j] + grand
    });
    KernelMatrix::new_unchecked(out, KernelKind::Centered)
}

fn check_shapes(k: &KernelMatrix, l: &KernelMatrix) -> Result<()> {
    if k.n() != l.n() {
        return Err(Error::ShapeMismatch(format!(
            "kernel matrices have n={} and n={}",
            k.n(),
            l.n()
        )));
    }
    Ok(())
}

/// `⟨A, B⟩_F` for two centred matrices.
pub(crate) fn frobenius_inner(a: &KernelMatrix, b: &KernelMatrix) -> f64 {
    a.values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| x * y)
        .sum()
}

/// Biased (V-statistic) HSIC without normalisation: `tr(K H L H)`.
pub fn hsic_biased(k: &KernelMatrix, l: &KernelMatrix) -> Result<f64> {
    check_shapes(k, l)?;
    Ok(hsic_biased_unchecked(k, l))
}

pub(crate) fn hsic_biased_unchecked(k: &KernelMatrix, l: &KernelMatrix) -> f64 {
    let kc = if k.kind() == KernelKind::Centered {
        k.clone()
    } else {
        center(k)
    };
    let lc = if l.kind() == KernelKind::Centered {
        l.clone()
    } else {
        center(l)
    };
    frobenius_inner(&kc, &lc)
}

/// Unbiased (U-statistic) HSIC estimator; needs `n ≥ 4`.
///
/// With `K̃`, `L̃` the kernels with zeroed diagonals:
/// `[tr(K̃L̃) + 𝟙ᵀK̃𝟙·𝟙ᵀL̃𝟙/((n−1)(n−2)) − 2/(n−2)·𝟙ᵀK̃L̃𝟙] / (n(n−3))`.
pub fn hsic_unbiased(k: &KernelMatrix, l: &KernelMatrix) -> Result<f64> {
    check_shapes(k, l)?;
    let n = k.n();
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    Ok(hsic_unbiased_unchecked(k, l))
}

pub(crate) fn hsic_unbiased_unchecked(k: &KernelMatrix, l: &KernelMatrix) -> f64 {
    let (kv, lv) = (k.values(), l.values());
    let n = kv.nrows();
    let mut trace = 0.0;
    let mut k_sum = 0.0;
    let mut l_sum = 0.0;
    let mut k_rows = vec![0.0; n];
    let mut l_rows = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (kv[[i, j]], lv[[i, j]]);
            // both symmetric: (K̃L̃)_ii summed = Σ_ij K̃_ij L̃_ij
            trace += a * b;
            k_rows[i] += a;
            l_rows[i] += b;
        }
        k_sum += k_rows[i];
        l_sum += l_rows[i];
    }
    let cross: f64 = k_rows.iter().zip(&l_rows).map(|(a, b)| a * b).sum();
    let nf = n as f64;
    (trace + k_sum * l_sum / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * cross)
        / (nf * (nf - 3.0))
}
