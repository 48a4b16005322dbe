#![no_main]

use libfuzzer_sys::fuzz_target;
use maxplus_hjb::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = ExperimentConfig::from_toml_str(text) else {
        return;
    };
    // a parsed configuration must survive its own echo
    let echo = cfg.to_toml_string();
    let back = ExperimentConfig::from_toml_str(&echo).expect("echoed configuration parses");
    assert_eq!(back.to_toml_string(), echo);
    if cfg.validate().is_ok() {
        let _ = cfg.resolved();
    }
});
