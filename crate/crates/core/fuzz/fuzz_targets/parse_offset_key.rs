#![no_main]
use libfuzzer_sys::fuzz_target;
use magedge::lattice::parse_offset_key;

fuzz_target!(|data: &[u8]| {
    let Some((&dim, rest)) = data.split_first() else { return };
    let Ok(key) = std::str::from_utf8(rest) else { return };
    let _ = parse_offset_key(key, usize::from(dim % 8));
});
