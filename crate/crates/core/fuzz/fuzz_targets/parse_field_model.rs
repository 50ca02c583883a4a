#![no_main]
use libfuzzer_sys::fuzz_target;
use magedge::config::FieldModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = serde_json::from_slice::<FieldModel>(data) {
        if let Ok(field) = model.build() {
            let d = field.dim();
            let mut out = vec![0.0; d * d];
            field.eval(&vec![0.25; d], &mut out);
        }
    }
});
