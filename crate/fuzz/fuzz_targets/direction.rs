#![no_main]

use libfuzzer_sys::fuzz_target;
use rwre_core::config::{parse_alpha, parse_direction};
use rwre_core::geometry::make_direction;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(u) = parse_direction(text) {
        if let Ok(dir) = make_direction(&u) {
            assert_eq!(dir.u(), &u[..]);
            let _ = dir.eps_set();
        }
    }
    let _ = parse_alpha(text);
});
