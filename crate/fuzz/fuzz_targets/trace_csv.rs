#![no_main]
use cf_ssm::records::{parse_trace, write_trace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(trace) = parse_trace(s) {
            if !trace.is_empty() {
                let mut buf = Vec::new();
                write_trace(&mut buf, &trace).expect("write");
                let again = parse_trace(std::str::from_utf8(&buf).unwrap()).expect("re-parse");
                assert_eq!(again.len(), trace.len());
            }
        }
    }
});
