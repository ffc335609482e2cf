#![no_main]

use evplan::pgnn::{mlp_forward, MlpParams, Mode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(params) = MlpParams::from_json(text) {
        let _ = mlp_forward(&params, 4.0, Mode::Infer);
    }
});
