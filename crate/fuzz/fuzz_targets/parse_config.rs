#![no_main]

use libfuzzer_sys::fuzz_target;
use navem::cli::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(settings) = parse_config(text) {
        let again = parse_config(&settings.canonical()).expect("canonical form must parse");
        assert_eq!(again, settings);
    }
});
