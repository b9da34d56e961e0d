#![no_main]

use libfuzzer_sys::fuzz_target;
use navem::trainer::NavemModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = NavemModel::from_json(text) {
        let again = NavemModel::from_json(&model.to_json()).expect("serialized model must load");
        assert_eq!(again.to_json(), model.to_json());
    }
});
