#![no_main]

use libfuzzer_sys::fuzz_target;
use multilib_caching::NetworkConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = NetworkConfig::from_json(text) {
        assert!(config.validate().is_empty());
        assert!(config.cache_size <= config.total_content());
        assert_eq!(NetworkConfig::from_json(&config.to_json()).unwrap(), config);
    }
});
