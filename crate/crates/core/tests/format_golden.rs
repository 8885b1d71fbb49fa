use std::path::PathBuf;

use proptest::prelude::*;
use simtrace::tensor_io::npy::{self, Dtype};
use simtrace::tensor_io::{read_array, read_labels, Pooling};
use simtrace::Error;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn reads_numpy_f64() {
    let a = npy::read(&golden("valid_f64_2x3.npy")).unwrap();
    assert_eq!(a.shape, vec![2, 3]);
    assert_eq!(a.dtype, Dtype::F64);
    assert_eq!(a.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

    let fm = read_array(&golden("valid_f64_2x3.npy")).unwrap();
    assert_eq!(fm.layer_id(), "valid_f64_2x3");
    assert_eq!(fm.matrix().unwrap()[[1, 2]], 6.0);
}

#[test]
fn reads_numpy_f32_tokens() {
    let fm = read_array(&golden("valid_f32_tokens.npy")).unwrap();
    assert_eq!(fm.shape(), &[2, 3, 2]);
    assert_eq!(fm.pooling(), Pooling::RawTokens);
    let t = fm.tokens().unwrap();
    for (i, v) in t.iter().enumerate() {
        assert_eq!(*v, i as f64 / 4.0);
    }
}

#[test]
fn reads_labels() {
    assert_eq!(read_labels(&golden("valid_labels.npy")).unwrap(), vec![0, 1, 2, 1]);
}

#[test]
fn rejects_malformed_files() {
    let cases: [(&str, fn(&Error) -> bool); 6] = [
        ("bad_magic.npy", |e| matches!(e, Error::BadMagic)),
        ("big_endian.npy", |e| matches!(e, Error::UnsupportedDtype(_))),
        ("int32.npy", |e| matches!(e, Error::UnsupportedDtype(_))),
        ("fortran_order.npy", |e| matches!(e, Error::UnsupportedLayout(_))),
        ("four_dims.npy", |e| matches!(e, Error::UnsupportedLayout(_))),
        ("nan_value.npy", |e| matches!(e, Error::NonFiniteValue { .. })),
    ];
    for (name, check) in cases {
        let err = npy::read(&golden(name)).unwrap_err();
        assert!(check(&err), "{name}: got {err:?}");
    }
}

#[test]
fn missing_file_is_reported() {
    let err = npy::read(&golden("absent.npy")).unwrap_err();
    assert!(matches!(err, Error::MissingFile(_)), "{err:?}");
}

#[test]
fn writer_matches_numpy_bytes() {
    let bytes = npy::encode(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Dtype::F64).unwrap();
    assert_eq!(bytes, std::fs::read(golden("valid_f64_2x3.npy")).unwrap());
}

#[test]
fn truncated_payload() {
    let bytes = std::fs::read(golden("valid_f64_2x3.npy")).unwrap();
    let err = npy::decode(&bytes[..bytes.len() - 3]).unwrap_err();
    assert!(matches!(err, Error::Truncated { .. }), "{err:?}");
}

proptest! {
    #[test]
    fn encode_decode_round_trip(
        rows in 1usize..6,
        cols in 1usize..6,
        seed in any::<u64>(),
        f32_dtype in any::<bool>(),
    ) {
        let dtype = if f32_dtype { Dtype::F32 } else { Dtype::F64 };
        let mut state = seed;
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = (state >> 11) as f64 / (1u64 << 53) as f64 * 200.0 - 100.0;
                if f32_dtype { v as f32 as f64 } else { v }
            })
            .collect();
        let bytes = npy::encode(&[rows, cols], &data, dtype).unwrap();
        prop_assert_eq!(bytes.iter().position(|&b| b == b'\n').map(|p| (p + 1) % 64), Some(0));
        let back = npy::decode(&bytes).unwrap();
        prop_assert_eq!(back.shape, vec![rows, cols]);
        prop_assert_eq!(back.dtype, dtype);
        prop_assert_eq!(back.data, data);
    }

    #[test]
    fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = npy::decode(&bytes);
    }
}
