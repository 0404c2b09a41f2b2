#![no_main]

use libfuzzer_sys::fuzz_target;
use rwre_core::config::{validate, ExperimentConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let back = ExperimentConfig::from_json(&cfg.to_json()).expect("serialized config parses");
        assert_eq!(back.digest(), cfg.digest());
        // must reject or accept, never panic
        let _ = validate(&cfg);
    }
});
