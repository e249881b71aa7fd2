#![no_main]

use ctprover_core::corpus::{parse_manifest, Profile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cases) = parse_manifest(text) {
        for c in cases {
            let p: Profile = c.profile.to_string().parse().expect("profile round-trips");
            assert_eq!(p, c.profile);
        }
    }
});
