#![no_main]

use egvp::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_config(text) {
        // Anything accepted must survive a serialize/parse round trip.
        let again = parse_config(&config.to_toml()).expect("serialized config reparses");
        assert_eq!(again.to_toml(), config.to_toml());
    }
});
