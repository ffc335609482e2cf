#![no_main]

use evplan::harness::EpisodeConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = EpisodeConfig::from_toml(text);
    }
});
