#![no_main]

use libfuzzer_sys::fuzz_target;
use rwre_core::report::{estimator_csv, parse_estimator_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_estimator_csv(text) {
        let again = parse_estimator_csv(&estimator_csv(&rows)).expect("written CSV parses");
        assert_eq!(again.len(), rows.len());
        for (a, b) in again.iter().zip(&rows) {
            assert!(a.mean.to_bits() == b.mean.to_bits() || (a.mean.is_nan() && b.mean.is_nan()));
            assert_eq!((a.n, a.censored), (b.n, b.censored));
        }
    }
});
