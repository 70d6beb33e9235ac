#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use linbandit::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::from_toml_str(text, Path::new(".")) else { return };
    if cfg.validate().is_err() {
        return;
    }
    let _ = cfg.policy_specs();
    let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), Path::new("."))
        .expect("normalized config parses");
    assert_eq!(again.to_toml_string(), cfg.to_toml_string());
});
