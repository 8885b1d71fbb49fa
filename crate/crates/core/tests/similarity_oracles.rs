mod common;

use approx::assert_relative_eq;
use common::oracles as o;
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use simtrace::similarity::{
    center, cka_matrices, gram_matrix, hsic_biased, hsic_unbiased, median_bandwidth, CkaOptions,
    Estimator, Kernel, KernelKind, KernelMatrix,
};
use simtrace::synthetic::{gaussian_matrix, random_orthogonal, rng};
use simtrace::tensor_io::FeatureMatrix;
use simtrace::{similarity::cka, Error};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn km(m: &o::Mat) -> KernelMatrix {
    let n = m.len();
    let flat: Vec<f64> = m.iter().flatten().copied().collect();
    KernelMatrix::new(Array2::from_shape_vec((n, n), flat).unwrap(), KernelKind::Linear).unwrap()
}

#[test]
fn linear_gram_matches_double_loop() {
    let x = gaussian_matrix(&mut rng(11), 17, 5);
    let k = gram_matrix(x.view(), KernelKind::Linear);
    let want = o::gram_linear(&o::from_ndarray(x.view()));
    for i in 0..17 {
        for j in 0..17 {
            assert!(close(k.values()[[i, j]], want[i][j], 1e-12));
        }
    }
}

#[test]
fn rbf_gram_matches_double_loop() {
    let x = gaussian_matrix(&mut rng(12), 15, 4);
    let k = gram_matrix(x.view(), KernelKind::Rbf { bandwidth: 1.7 });
    let want = o::gram_rbf(&o::from_ndarray(x.view()), 1.7);
    for i in 0..15 {
        for j in 0..15 {
            assert!(close(k.values()[[i, j]], want[i][j], 1e-12));
            assert_eq!(k.values()[[i, j]], k.values()[[j, i]]);
        }
    }
}

#[test]
fn median_bandwidth_matches_sorted_distances() {
    let x = gaussian_matrix(&mut rng(13), 9, 3);
    let m = o::from_ndarray(x.view());
    let mut d = Vec::new();
    for i in 0..9 {
        for j in i + 1..9 {
            d.push(m[i].iter().zip(&m[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // 36 pairs: median is the mean of the 18th and 19th
    let want = 0.5 * (d[17] + d[18]);
    assert_relative_eq!(median_bandwidth(x.view(), 0).unwrap(), want, max_relative = 1e-14);
}

#[test]
fn centering_matches_hkh() {
    let x = gaussian_matrix(&mut rng(14), 12, 4);
    let k = gram_matrix(x.view(), KernelKind::Rbf { bandwidth: 2.0 });
    let c = center(&k);
    let want = o::center_explicit(&o::from_ndarray(k.values()));
    for i in 0..12 {
        for j in 0..12 {
            assert!(close(c.values()[[i, j]], want[i][j], 1e-12));
        }
    }
}

#[test]
fn hsic_biased_matches_trace() {
    let mut r = rng(15);
    let x = gaussian_matrix(&mut r, 14, 3);
    let y = gaussian_matrix(&mut r, 14, 6);
    let k = gram_matrix(x.view(), KernelKind::Linear);
    let l = gram_matrix(y.view(), KernelKind::Rbf { bandwidth: 1.3 });
    let want = o::hsic_biased_explicit(&o::from_ndarray(k.values()), &o::from_ndarray(l.values()));
    assert!(close(hsic_biased(&k, &l).unwrap(), want, 1e-10));
}

#[test]
fn hsic_unbiased_matches_closed_form() {
    let mut r = rng(16);
    for n in [4, 5, 9, 20] {
        let x = gaussian_matrix(&mut r, n, 3);
        let y = gaussian_matrix(&mut r, n, 2);
        let k = gram_matrix(x.view(), KernelKind::Rbf { bandwidth: 1.0 });
        let l = gram_matrix(y.view(), KernelKind::Linear);
        let want =
            o::hsic_unbiased_explicit(&o::from_ndarray(k.values()), &o::from_ndarray(l.values()));
        assert!(close(hsic_unbiased(&k, &l).unwrap(), want, 1e-10), "n={n}");
    }
}

#[test]
fn hsic_unbiased_n4_by_hand() {
    let k = vec![
        vec![1.0, 0.5, 0.2, 0.1],
        vec![0.5, 1.0, 0.3, 0.4],
        vec![0.2, 0.3, 1.0, 0.6],
        vec![0.1, 0.4, 0.6, 1.0],
    ];
    let l = vec![
        vec![2.0, 1.0, 0.0, 0.5],
        vec![1.0, 2.0, 0.7, 0.2],
        vec![0.0, 0.7, 2.0, 0.9],
        vec![0.5, 0.2, 0.9, 2.0],
    ];
    let want = o::hsic_unbiased_n4(&k, &l);
    assert!(close(o::hsic_unbiased_explicit(&k, &l), want, 1e-14));
    assert!(close(hsic_unbiased(&km(&k), &km(&l)).unwrap(), want, 1e-12));
}

#[test]
fn hsic_rejects_bad_shapes() {
    let a = km(&vec![vec![1.0; 3]; 3]);
    let b = km(&vec![vec![1.0; 4]; 4]);
    assert!(matches!(hsic_biased(&a, &b), Err(Error::ShapeMismatch(_))));
    assert!(matches!(hsic_unbiased(&a, &a), Err(Error::TooFewSamples { .. })));
}

#[test]
fn linear_cka_matches_explicit_formula() {
    let mut r = rng(17);
    for (n, d1, d2) in [(8, 3, 5), (30, 10, 2), (50, 64, 64)] {
        let x = gaussian_matrix(&mut r, n, d1);
        let y = &x.dot(&gaussian_matrix(&mut r, d1, d2)) + &gaussian_matrix(&mut r, n, d2);
        let got = cka_matrices(x.view(), y.view(), &CkaOptions::default()).unwrap().value;
        let want = o::cka_linear_explicit(&o::from_ndarray(x.view()), &o::from_ndarray(y.view()));
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
}

#[test]
fn rbf_cka_matches_explicit_formula() {
    let mut r = rng(18);
    let x = gaussian_matrix(&mut r, 25, 4);
    let y = x.mapv(f64::tanh) + gaussian_matrix(&mut r, 25, 4) * 0.3;
    let opts = CkaOptions {
        kernel: Kernel::Rbf { bandwidth: Some(1.5) },
        ..CkaOptions::default()
    };
    let got = cka_matrices(x.view(), y.view(), &opts).unwrap().value;
    let want = o::cka_explicit(
        &o::gram_rbf(&o::from_ndarray(x.view()), 1.5),
        &o::gram_rbf(&o::from_ndarray(y.view()), 1.5),
    );
    assert!((got - want).abs() <= 1e-10);
}

#[test]
fn unbiased_cka_matches_oracle() {
    let mut r = rng(19);
    let x = gaussian_matrix(&mut r, 30, 5);
    let y = &x + &(gaussian_matrix(&mut r, 30, 5) * 0.5);
    let k = o::gram_linear(&o::from_ndarray(x.view()));
    let l = o::gram_linear(&o::from_ndarray(y.view()));
    let want = o::hsic_unbiased_explicit(&k, &l)
        / (o::hsic_unbiased_explicit(&k, &k) * o::hsic_unbiased_explicit(&l, &l)).sqrt();
    let got = cka_matrices(x.view(), y.view(), &CkaOptions::unbiased()).unwrap();
    assert!((got.raw - want).abs() <= 1e-10);
}

#[test]
fn self_similarity_is_one() {
    let x = gaussian_matrix(&mut rng(20), 40, 7);
    for opts in [
        CkaOptions::default(),
        CkaOptions::unbiased(),
        CkaOptions { kernel: Kernel::rbf(), ..CkaOptions::default() },
    ] {
        let v = cka_matrices(x.view(), x.view(), &opts).unwrap().value;
        assert!((v - 1.0).abs() <= 1e-12, "{opts:?}: {v}");
    }
}

#[test]
fn constant_representation_is_zero_variance() {
    let x = gaussian_matrix(&mut rng(21), 10, 3);
    let c = Array2::from_elem((10, 3), 4.0);
    let err = cka_matrices(x.view(), c.view(), &CkaOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ZeroVariance), "{err:?}");
    let err = cka_matrices(c.view(), x.view(), &CkaOptions { kernel: Kernel::rbf(), ..CkaOptions::default() })
        .unwrap_err();
    assert!(matches!(err, Error::DegenerateInput(_)), "{err:?}");
}

#[test]
fn sample_validation() {
    let x = gaussian_matrix(&mut rng(22), 3, 2);
    let y = gaussian_matrix(&mut rng(23), 4, 2);
    assert!(matches!(cka_matrices(x.view(), y.view(), &CkaOptions::default()), Err(Error::SampleMismatch)));
    assert!(matches!(
        cka_matrices(x.view(), x.view(), &CkaOptions::unbiased()),
        Err(Error::TooFewSamples { .. })
    ));
    let one = gaussian_matrix(&mut rng(24), 1, 2);
    assert!(matches!(
        cka_matrices(one.view(), one.view(), &CkaOptions::default()),
        Err(Error::TooFewSamples { .. })
    ));

    let a = FeatureMatrix::new(y.clone()).unwrap();
    let b = FeatureMatrix::new(y.clone())
        .unwrap()
        .with_sample_ids(vec!["a".into(), "b".into(), "c".into(), "d".into()])
        .unwrap();
    assert!(matches!(cka(&a, &b, &CkaOptions::default()), Err(Error::SampleMismatch)));
}

#[test]
fn minibatch_full_size_equals_full_batch() {
    let mut r = rng(25);
    let x = gaussian_matrix(&mut r, 64, 6);
    let y = &x.dot(&gaussian_matrix(&mut r, 6, 6)) + &gaussian_matrix(&mut r, 64, 6);
    for est in [Estimator::Biased, Estimator::Unbiased] {
        let base = CkaOptions { estimator: est, ..CkaOptions::default() };
        // the gram path is forced by the unbiased estimator; compare that pair exactly
        let full = cka_matrices(x.view(), y.view(), &base).unwrap();
        let mb = cka_matrices(x.view(), y.view(), &base.with_minibatch(64)).unwrap();
        assert_eq!(mb.batches, 1);
        assert_eq!(full.value, mb.value);
    }
}

#[test]
fn minibatch_half_is_close() {
    let mut r = rng(26);
    let x = gaussian_matrix(&mut r, 128, 8);
    let y = &x.dot(&gaussian_matrix(&mut r, 8, 8)) * 0.5 + &gaussian_matrix(&mut r, 128, 8);
    let full = cka_matrices(x.view(), y.view(), &CkaOptions::unbiased()).unwrap().value;
    let half = cka_matrices(x.view(), y.view(), &CkaOptions::unbiased().with_minibatch(64)).unwrap();
    assert_eq!(half.batches, 2);
    assert!((full - half.value).abs() <= 0.02, "{full} vs {}", half.value);
}

#[test]
fn minibatch_remainder_is_folded() {
    let x = gaussian_matrix(&mut rng(27), 10, 3);
    let y = gaussian_matrix(&mut rng(28), 10, 3);
    // 10 = 4 + 4 + 2, the trailing pair joins the second batch
    let r = cka_matrices(x.view(), y.view(), &CkaOptions::unbiased().with_minibatch(4)).unwrap();
    assert_eq!(r.batches, 2);
    assert!(cka_matrices(x.view(), y.view(), &CkaOptions::default().with_minibatch(3)).is_err());
}

#[test]
fn auto_policy_switches_only_when_gram_needed() {
    let (lin, w) = CkaOptions::default().for_samples(10_000);
    assert_eq!(lin, CkaOptions::default());
    assert!(w.is_none());
    let (rbf, w) = CkaOptions { kernel: Kernel::rbf(), ..CkaOptions::default() }.for_samples(10_000);
    assert_eq!(rbf.estimator, Estimator::Unbiased);
    assert_eq!(rbf.minibatch, Some(4096));
    assert!(w.is_some());
    let (small, w) = CkaOptions::unbiased().for_samples(4096);
    assert_eq!(small.minibatch, None);
    assert!(w.is_none());
}

fn matrix_strategy(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-3.0f64..3.0, n * d)
        .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
}

fn pair_strategy() -> impl Strategy<Value = (Array2<f64>, Array2<f64>)> {
    (6usize..20, 1usize..6, 1usize..6).prop_flat_map(|(n, d1, d2)| (matrix_strategy(n, d1), matrix_strategy(n, d2)))
}

fn nondegenerate(x: &Array2<f64>) -> bool {
    let c = x - &x.mean_axis(Axis(0)).unwrap();
    c.iter().map(|v| v * v).sum::<f64>() > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_bounded((x, y) in pair_strategy(), rbf in any::<bool>()) {
        prop_assume!(nondegenerate(&x) && nondegenerate(&y));
        let opts = if rbf { CkaOptions { kernel: Kernel::rbf(), ..CkaOptions::default() } } else { CkaOptions::default() };
        let a = cka_matrices(x.view(), y.view(), &opts).unwrap().value;
        let b = cka_matrices(y.view(), x.view(), &opts).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn invariant_to_orthogonal_scale_translation(
        (x, y) in pair_strategy(),
        seed in any::<u64>(),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        prop_assume!(nondegenerate(&x) && nondegenerate(&y));
        let base = cka_matrices(x.view(), y.view(), &CkaOptions::default()).unwrap().value;
        let q = random_orthogonal(&mut rng(seed), x.ncols());
        let xt = x.dot(&q) * scale + shift;
        let moved = cka_matrices(xt.view(), y.view(), &CkaOptions::default()).unwrap().value;
        prop_assert!((base - moved).abs() <= 1e-9, "{} vs {}", base, moved);
    }

    #[test]
    fn rbf_median_invariant_to_orthogonal_and_scale(
        (x, y) in pair_strategy(),
        seed in any::<u64>(),
        scale in 0.1f64..10.0,
    ) {
        prop_assume!(nondegenerate(&x) && nondegenerate(&y));
        let opts = CkaOptions { kernel: Kernel::rbf(), ..CkaOptions::default() };
        let base = cka_matrices(x.view(), y.view(), &opts).unwrap().value;
        let q = random_orthogonal(&mut rng(seed), x.ncols());
        let xt = x.dot(&q) * scale + 3.0;
        let moved = cka_matrices(xt.view(), y.view(), &opts).unwrap().value;
        prop_assert!((base - moved).abs() <= 1e-9);
    }

    #[test]
    fn invariant_to_joint_permutation((x, y) in pair_strategy(), seed in any::<u64>()) {
        prop_assume!(nondegenerate(&x) && nondegenerate(&y));
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..x.nrows()).collect();
        perm.shuffle(&mut rng(seed));
        let xp = x.select(Axis(0), &perm);
        let yp = y.select(Axis(0), &perm);
        for opts in [CkaOptions::default(), CkaOptions::unbiased()] {
            let a = cka_matrices(x.view(), y.view(), &opts).unwrap().value;
            let b = cka_matrices(xp.view(), yp.view(), &opts).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn gram_is_exactly_symmetric(x in matrix_strategy(9, 3), bw in 0.1f64..5.0) {
        for kind in [KernelKind::Linear, KernelKind::Rbf { bandwidth: bw }] {
            let k = gram_matrix(x.view(), kind);
            let v = k.values();
            for i in 0..9 {
                for j in 0..9 {
                    prop_assert_eq!(v[[i, j]], v[[j, i]]);
                }
            }
        }
    }
}
