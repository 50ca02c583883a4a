#![no_main]
use libfuzzer_sys::fuzz_target;
use magedge::io::{read_sweep_csv, sweep_from_rows};
use magedge::scaling::{fit_power, fit_power_log};
use magedge::spectral::Which;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_sweep_csv(data) else { return };
    if let Ok(sweep) = sweep_from_rows(&rows, Which::Sup) {
        let _ = fit_power(&sweep);
        let _ = fit_power_log(&sweep);
    }
});
