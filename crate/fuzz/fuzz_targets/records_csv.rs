#![no_main]

use libfuzzer_sys::fuzz_target;
use simtrace::trajectory::{parse_records_csv, write_records_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_records_csv(data) {
        let mut out = Vec::new();
        write_records_csv(&records, &mut out).unwrap();
        assert_eq!(parse_records_csv(&out).unwrap(), records);
    }
});
