#![no_main]

use libfuzzer_sys::fuzz_target;
use manet_core::trace::TraceLine;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for line in text.lines() {
        if let Ok(l) = TraceLine::parse(line) {
            let printed = l.to_string();
            let back = TraceLine::parse(&printed).expect("printed line must parse");
            assert_eq!(back.node, l.node);
            assert_eq!(back.event, l.event);
            assert_eq!(back.detail, l.detail);
        }
    }
});
