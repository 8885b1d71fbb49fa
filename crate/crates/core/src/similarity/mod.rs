//! Kernels, centring, HSIC estimators and centred kernel alignment.
//!
//! CKA here is a similarity in `[0, 1]`, not a distance; it does not satisfy
//! the triangle inequality, and nothing downstream assumes it does.

mod cka;
mod hsic;
mod kernel;

pub use cka::{
    cka, cka_matrices, cka_report, CkaOptions, CkaReport, Estimator, GRAM_BUDGET_SAMPLES,
};
pub use hsic::{center, hsic_biased, hsic_unbiased};
pub use kernel::{
    gram, gram_matrix, gram_seeded, median_bandwidth, resolve_kernel, Kernel, KernelKind,
    KernelMatrix, DEFAULT_SEED, MEDIAN_SUBSAMPLE,
};
