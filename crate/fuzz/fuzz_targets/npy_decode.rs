#![no_main]

use libfuzzer_sys::fuzz_target;
use simtrace::tensor_io::npy;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = npy::decode(data) {
        assert_eq!(a.shape.iter().product::<usize>(), a.data.len());
        assert!(a.data.iter().all(|v| v.is_finite()));
    }
});
