#![no_main]

use ctprover_core::frontend::{normalize, parse, pretty_print};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ast) = parse(text) else { return };
    let printed = pretty_print(&ast);
    let reparsed = parse(&printed).expect("printed program re-parses");
    assert_eq!(reparsed, ast);
    if let Ok(p) = normalize(&ast) {
        let text = pretty_print(&p);
        let again = parse(&text).expect("normalized program re-parses");
        let twice = normalize(&again).expect("normalized program normalizes");
        assert_eq!(pretty_print(&twice), text);
    }
});
