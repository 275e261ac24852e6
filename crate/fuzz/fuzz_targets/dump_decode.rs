#![no_main]

use libfuzzer_sys::fuzz_target;
use multilib_caching::sim::decode_dump;

fuzz_target!(|data: &[u8]| {
    if let Ok(dump) = decode_dump(data) {
        // the format has one encoding per dump
        assert_eq!(dump.encode(), data);
    }
});
