#![no_main]

use evplan::fit::{read_dataset_csv, write_dataset_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = read_dataset_csv(data) {
        let mut out = Vec::new();
        write_dataset_csv(&mut out, &samples).expect("write");
        assert_eq!(read_dataset_csv(out.as_slice()).expect("reread"), samples);
    }
});
