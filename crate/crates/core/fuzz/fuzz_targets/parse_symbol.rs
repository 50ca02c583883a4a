#![no_main]
use libfuzzer_sys::fuzz_target;
use magedge::lattice::HoppingSymbol;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(symbol) = HoppingSymbol::from_json(text) {
        // anything accepted must survive a round trip
        let back = HoppingSymbol::from_json(&symbol.to_json()).unwrap();
        assert_eq!(back.support_len(), symbol.support_len());
        let _ = symbol.tail_bound(1.5);
    }
});
