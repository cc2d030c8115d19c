#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = nlmag::config::parse_config_str(text) {
            // a parsed config must serialize and parse back
            let again = nlmag::config::parse_config_str(&cfg.to_toml()).expect("round trip");
            assert_eq!(again.h_levels, cfg.h_levels);
            let _ = cfg.material_table();
        }
    }
});
