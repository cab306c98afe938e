#![no_main]

use libfuzzer_sys::fuzz_target;
use wrinkle_core::report::Report;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = Report::from_json(text) {
        let json = report.to_json().expect("parsed report serializes");
        let again = Report::from_json(&json).expect("re-encoded report parses");
        assert_eq!(again.to_json().expect("serializes"), json);
    }
});
