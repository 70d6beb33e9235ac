#![no_main]

use libfuzzer_sys::fuzz_target;
use linbandit::harness::emit::read_step_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_step_csv(data);
});
