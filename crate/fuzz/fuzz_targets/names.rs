#![no_main]
use cf_ssm::verify::Property;
use cf_ssm::{build_scenario, MethodId, ScenarioName};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = s.parse::<ScenarioName>();
        let _ = s.parse::<Property>();
        let sc = build_scenario("exp4_1").unwrap();
        if let Ok(m) = MethodId::parse(s, &sc) {
            assert_eq!(m.label(&sc), s);
        }
    }
});
