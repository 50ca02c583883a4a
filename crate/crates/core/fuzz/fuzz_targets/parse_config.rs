#![no_main]
use libfuzzer_sys::fuzz_target;
use magedge::config::{Command, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::from_json(text) {
        for c in [Command::Flux, Command::Butterfly, Command::Sweep, Command::Fit, Command::Verify, Command::Harness] {
            let _ = config.validate(c);
        }
    }
});
