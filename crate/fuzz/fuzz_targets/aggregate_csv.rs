#![no_main]

use libfuzzer_sys::fuzz_target;
use linbandit::harness::emit::{aggregate_csv, read_aggregate_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_aggregate_csv(data) else { return };
    // policy labels with separators cannot round-trip unquoted
    if rows.iter().any(|r| r.policy.contains([',', '"', '\n', '\r'])) {
        return;
    }
    let _ = read_aggregate_csv(aggregate_csv(&rows).as_bytes());
});
