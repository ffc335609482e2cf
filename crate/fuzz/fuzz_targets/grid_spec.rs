#![no_main]

use evplan::harness::read_grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_grid(data);
});
