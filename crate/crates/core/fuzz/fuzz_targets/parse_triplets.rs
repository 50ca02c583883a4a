#![no_main]
use libfuzzer_sys::fuzz_target;
use magedge::io::matrix_from_triplets_csv;
use num_complex::Complex64;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = matrix_from_triplets_csv(data, None, "fuzz") {
        if m.dim() <= 4096 {
            let x = vec![Complex64::new(1.0, 0.0); m.dim()];
            let mut y = vec![Complex64::new(0.0, 0.0); m.dim()];
            m.matvec(&x, &mut y);
        }
    }
});
