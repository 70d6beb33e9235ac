#![no_main]

use libfuzzer_sys::fuzz_target;
use linbandit::harness::emit::parse_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(manifest) = parse_manifest(text) else { return };
    let json = serde_json::to_string(&manifest).expect("manifest serializes");
    let again = parse_manifest(&json).expect("serialized manifest parses");
    assert_eq!(again, manifest);
});
