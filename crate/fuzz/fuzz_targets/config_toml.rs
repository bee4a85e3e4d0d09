#![no_main]
use cf_ssm::config::parse_config;
use cf_ssm::ScenarioName;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(s) {
            let mut o = cfg.overrides();
            // Keep validation cheap: building a scenario never simulates.
            o.runs = o.runs.map(|r| r.min(4));
            let _ = o.scenario(ScenarioName::Exp4_2);
        }
    }
});
