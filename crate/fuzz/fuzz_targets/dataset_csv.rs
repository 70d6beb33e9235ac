#![no_main]

use libfuzzer_sys::fuzz_target;
use linbandit::dataset::parse_dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(ds) = parse_dataset(data) else { return };
    assert!(ds.rows() > 0 && ds.classes >= 2);
    assert_eq!(ds.labels.len(), ds.rows());
    assert!(ds.labels.iter().all(|&k| k < ds.classes));
    assert!(ds.features.iter().all(|x| x.is_finite()));
    assert_eq!(ds.class_counts().iter().sum::<usize>(), ds.rows());
});
