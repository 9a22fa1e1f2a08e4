#![no_main]

use libfuzzer_sys::fuzz_target;
use manet_core::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sc) = Scenario::parse(text) {
        // anything accepted must survive a print/parse round trip
        let again = Scenario::parse(&sc.to_text()).expect("printed scenario must parse");
        assert_eq!(sc, again);
    }
});
