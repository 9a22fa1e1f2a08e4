#![no_main]

use libfuzzer_sys::fuzz_target;
use manet_core::mobility::parse_schedules;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(schedules) = parse_schedules(text) {
        for s in &schedules {
            // positions must be defined everywhere on an accepted schedule
            for t in [0.0, 1.0, 1e3] {
                let p = s.position_at(t);
                assert!(p.x.is_finite() && p.y.is_finite());
            }
        }
    }
});
