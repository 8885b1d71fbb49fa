#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use simtrace::tensor_io::RunManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = RunManifest::parse(text, Path::new("/fuzz")) {
            assert!(!m.checkpoints.is_empty());
            assert!(m.checkpoints.windows(2).all(|w| w[0].epoch < w[1].epoch));
        }
    }
});
