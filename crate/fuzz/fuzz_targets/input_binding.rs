#![no_main]

use ctprover_core::semantics::parse_binding;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((name, value)) = parse_binding(text) {
        let again = parse_binding(&format!("{name}={value}")).expect("binding round-trips");
        assert_eq!(again, (name, value));
    }
});
