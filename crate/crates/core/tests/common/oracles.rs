//! Slow, literal reference implementations used as test oracles.
//!
//! Everything here works on `Vec<Vec<f64>>` with explicit loops so that it shares
//! no code path with the library (no ndarray products, no centring shortcuts).

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn from_ndarray(a: ndarray::ArrayView2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn trace(a: &Mat) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

/// `H = I − 𝟙𝟙ᵀ/n`, materialised.
pub fn centering_matrix(n: usize) -> Mat {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
                .collect()
        })
        .collect()
}

pub fn gram_linear(x: &Mat) -> Mat {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
        }
    }
    k
}

pub fn gram_rbf(x: &Mat, sigma: f64) -> Mat {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
            k[i][j] = (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    k
}

/// `H K H` by two explicit matrix products.
pub fn center_explicit(k: &Mat) -> Mat {
    let h = centering_matrix(k.len());
    matmul(&matmul(&h, k), &h)
}

/// `tr(K H L H)` by four explicit matrix products.
pub fn hsic_biased_explicit(k: &Mat, l: &Mat) -> f64 {
    let h = centering_matrix(k.len());
    trace(&matmul(&matmul(&matmul(k, &h), l), &h))
}

/// CKA exactly as written: `tr(KHLH) / √(tr(KHKH)·tr(LHLH))`.
pub fn cka_explicit(k: &Mat, l: &Mat) -> f64 {
    hsic_biased_explicit(k, l)
        / (hsic_biased_explicit(k, k) * hsic_biased_explicit(l, l)).sqrt()
}

pub fn cka_linear_explicit(x: &Mat, y: &Mat) -> f64 {
    cka_explicit(&gram_linear(x), &gram_linear(y))
}

/// Unbiased HSIC from its closed form with explicit zero-diagonal matrices.
pub fn hsic_unbiased_explicit(k: &Mat, l: &Mat) -> f64 {
    let n = k.len();
    let zero_diag = |m: &Mat| -> Mat {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { m[i][j] }).collect())
            .collect()
    };
    let kt = zero_diag(k);
    let lt = zero_diag(l);
    let ones: Mat = vec![vec![1.0]; n];
    let ones_t = transpose(&ones);
    let sum_k = matmul(&matmul(&ones_t, &kt), &ones)[0][0];
    let sum_l = matmul(&matmul(&ones_t, &lt), &ones)[0][0];
    let cross = matmul(&matmul(&matmul(&ones_t, &kt), &lt), &ones)[0][0];
    let nf = n as f64;
    (trace(&matmul(&kt, &lt)) + sum_k * sum_l / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * cross)
        / (nf * (nf - 3.0))
}

/// The n = 4 unbiased estimator expanded by hand. With `n(n−3) = 4`,
/// `(n−1)(n−2) = 6` and `2/(n−2) = 1`:
/// `[Σ_{i≠j} K_ij L_ij + (Σ_{i≠j} K_ij)(Σ_{i≠j} L_ij)/6 − Σ_i (Σ_{j≠i} K_ij)(Σ_{j≠i} L_ij)] / 4`.
pub fn hsic_unbiased_n4(k: &Mat, l: &Mat) -> f64 {
    let mut t1 = 0.0;
    let (mut sk, mut sl) = (0.0, 0.0);
    let mut t3 = 0.0;
    for i in 0..4 {
        let (mut rk, mut rl) = (0.0, 0.0);
        for j in 0..4 {
            if i != j {
                t1 += k[i][j] * l[i][j];
                rk += k[i][j];
                rl += l[i][j];
            }
        }
        sk += rk;
        sl += rl;
        t3 += rk * rl;
    }
    (t1 + sk * sl / 6.0 - t3) / 4.0
}

/// ECE by direct enumeration: for each bin, scan every sample and test its
/// membership against the bin edges.
pub fn ece_enumerate(conf: &[f64], correct: &[bool], k: usize) -> f64 {
    let n = conf.len();
    let edge = |i: usize| if i == k { 1.0 } else { i as f64 / k as f64 };
    let mut total = 0.0;
    for b in 0..k {
        let (lo, hi) = (edge(b), edge(b + 1));
        let mut count = 0usize;
        let mut right = 0usize;
        let mut conf_sum = 0.0;
        for i in 0..n {
            let c = conf[i];
            let inside = if b == k - 1 { c >= lo && c <= hi } else { c >= lo && c < hi };
            if inside {
                count += 1;
                conf_sum += c;
                if correct[i] {
                    right += 1;
                }
            }
        }
        if count > 0 {
            let acc = right as f64 / count as f64;
            let avg = conf_sum / count as f64;
            total += count as f64 * (acc - avg).abs();
        }
    }
    total / n as f64
}

pub fn softmax_naive(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleMetric {
    Cosine,
    Euclidean,
}

/// k-NN by a full stable sort of every gallery point, uniform votes.
pub fn knn_bruteforce(
    gallery: &Mat,
    labels: &[usize],
    query: &Mat,
    k: usize,
    metric: OracleMetric,
) -> Vec<usize> {
    let n_classes = labels.iter().max().unwrap() + 1;
    query
        .iter()
        .map(|q| {
            let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut scored: Vec<(f64, usize)> = gallery
                .iter()
                .enumerate()
                .map(|(gi, g)| {
                    let s = match metric {
                        OracleMetric::Cosine => {
                            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                            if qn == 0.0 || gn == 0.0 {
                                0.0
                            } else {
                                q.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / (qn * gn)
                            }
                        }
                        OracleMetric::Euclidean => {
                            -q.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                        }
                    };
                    (s, gi)
                })
                .collect();
            // stable sort on descending score keeps lower indices first among ties
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let mut votes = vec![0usize; n_classes];
            for &(_, gi) in &scored[..k] {
                votes[labels[gi]] += 1;
            }
            let best = *votes.iter().max().unwrap();
            votes.iter().position(|&v| v == best).unwrap()
        })
        .collect()
}

/// OLS via the 2×2 normal equations solved by Cramer's rule.
pub fn normal_equations(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    (slope, intercept)
}
