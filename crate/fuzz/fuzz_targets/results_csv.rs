#![no_main]

use libfuzzer_sys::fuzz_target;
use manet_core::scenario::report::{paired_deltas, parse_results, summarize};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_results(text) {
        let _ = summarize(&rows);
        let _ = paired_deltas(&rows);
    }
});
