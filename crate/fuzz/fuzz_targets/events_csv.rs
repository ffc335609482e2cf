#![no_main]

use evplan::scene::{read_events_csv, write_events_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(events) = read_events_csv(text) {
        let mut out = Vec::new();
        write_events_csv(&mut out, &events).expect("write");
        let again = read_events_csv(std::str::from_utf8(&out).expect("utf8")).expect("reread");
        assert_eq!(again.len(), events.len());
    }
});
