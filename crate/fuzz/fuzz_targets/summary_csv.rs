#![no_main]
use cf_ssm::records::{parse_summary, summary_to_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(rows) = parse_summary(s) {
            // Anything accepted must survive a write/parse round trip.
            let again = parse_summary(&summary_to_string(&rows)).expect("re-parse");
            assert_eq!(again.len(), rows.len());
        }
    }
});
