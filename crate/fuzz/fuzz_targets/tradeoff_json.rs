#![no_main]

use libfuzzer_sys::fuzz_target;
use multilib_caching::{PiecewiseLinearTradeoff, TradeoffKind};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(t) = PiecewiseLinearTradeoff::from_json(text, TradeoffKind::AchievableBased, "fuzz") {
        let again =
            PiecewiseLinearTradeoff::from_json(&t.to_json(), TradeoffKind::AchievableBased, "fuzz")
                .unwrap();
        assert_eq!(again.corners(), t.corners());
        assert!(t.slopes().windows(2).all(|w| w[0] > w[1]));
    }
});
